"""Exception types shared across the package."""


class ConsensusLabError(Exception):
    """Base class for package-specific failures."""


class EigensolverError(ConsensusLabError):
    """Jacobi sweep limit reached before the off-diagonal norm converged."""

    def __init__(self, off_residual: float, sweeps: int):
        self.off_residual = off_residual
        self.sweeps = sweeps
        super().__init__(
            f"eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal residual {off_residual:.3e})"
        )

    def __reduce__(self):
        return type(self), (self.off_residual, self.sweeps)


class GraphGenerationError(ConsensusLabError):
    """A random-graph generator exhausted its retry budget."""


class DisconnectedGraphError(ConsensusLabError):
    """An operation that requires algebraic connectivity got lambda_2 ~ 0."""


class DivergenceError(ConsensusLabError):
    """A state entry exceeded the divergence guard during iteration."""

    def __init__(self, iteration: int, max_abs: float, hint: str = ""):
        self.iteration = iteration
        self.max_abs = max_abs
        self.hint = hint
        msg = f"state diverged at iteration {iteration} (max |x_n| = {max_abs:.3e})"
        if hint:
            msg += f"; {hint}"
        super().__init__(msg)

    def __reduce__(self):
        return type(self), (self.iteration, self.max_abs, self.hint)


class UnsupportedModelError(ConsensusLabError):
    """A closed-form statistic was requested for a model without one."""


class ConfigError(ConsensusLabError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""
