"""Repeated averaging with a constant weight: many short noisy passes.

Instead of one long run with decaying weights, run ``passes`` independent
executions of ``x(i+1) = x(i) - alpha * (L x(i) + n(i))`` for ``iterations``
steps each, all from the same initial state, and average the final states
per sensor.  The contraction factor of the mean is

    gamma2 = rho(I - alpha L - J/N) = max(|1 - alpha lam2|, |1 - alpha lamN|)

which is below 1 exactly when 0 < alpha < 2/lamN, and equals
``1 - alpha*lam2`` up to the balance point alpha_bullet = 2/(lam2 + lamN).
The module computes the closed-form averaging-time bound, optimizes alpha
against it, recommends (iterations, passes) splits, and estimates the true
averaging time empirically with exact binomial certification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from ._kernels import and_erasure_gauss_block, and_static_gauss_block
from .errors import ConfigError, DisconnectedGraphError, DivergenceError
from .models import (
    ERASURE,
    GAUSSIAN,
    NONE,
    STATE_DEPENDENT,
    STATIC,
    LinkFailureModel,
    NoiseModel,
    draw_live_mask,
    mean_laplacian,
    noise_statistics,
    sample_laplacian,
    sample_noise,
)
from .spectral import Laplacian, algebraic_connectivity, build_laplacian, spectral_radius
from .streams import INIT, LINKS, NOISE, RngStream

DIVERGENCE_GUARD = 1e12
_BLOCK = 512


@dataclass(frozen=True)
class AncConfig:
    """One repeated-averaging experiment: weight, split, and accuracy target."""

    alpha: float
    iterations: int
    passes: int
    radius: float = 1.0
    epsilon: float = 0.1
    delta: float = 0.05

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0.0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.passes < 1:
            raise ValueError(f"passes must be >= 1, got {self.passes}")
        if not (np.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError(f"radius must be positive, got {self.radius}")
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


def alpha_upper(lap: Laplacian) -> float:
    """Stability limit 2/lamN: weights at or above it cannot contract."""
    return 2.0 / spectral_radius(lap)


def alpha_bullet(lap: Laplacian) -> float:
    """Balance point 2/(lam2 + lamN) where the two edge modes tie."""
    return 2.0 / (algebraic_connectivity(lap) + spectral_radius(lap))


def gamma2(lap: Laplacian, alpha: float) -> float:
    """Spectral radius of I - alpha L - J/N (the consensus-error contraction)."""
    lam2 = algebraic_connectivity(lap)
    lam_n = spectral_radius(lap)
    if lam2 <= 1e-8 * max(1.0, lam_n):
        raise DisconnectedGraphError(
            f"graph is not connected (lam2 = {lam2:.3e}); no weight contracts"
        )
    if not (0.0 < alpha < 2.0 / lam_n):
        raise ValueError(
            f"alpha must lie in (0, {2.0 / lam_n:.6g}) for contraction, got {alpha}"
        )
    return max(abs(1.0 - alpha * lam2), abs(1.0 - alpha * lam_n))


def _pass_final(
    x0: np.ndarray,
    alpha: float,
    iterations: int,
    failure: LinkFailureModel,
    noise: NoiseModel,
    rng: RngStream,
    lane: int,
) -> np.ndarray:
    """Final state of one pass; draws come from the stream's given lane."""
    x = np.array(x0, dtype=np.float64, copy=True)
    n = x.shape[0]
    u, v = failure.graph.edge_arrays
    gen_links = rng.generator(LINKS, lane=lane)
    gen_noise = rng.generator(NOISE, lane=lane)
    fast = failure.kind in (STATIC, ERASURE) and noise.kind in (GAUSSIAN, NONE)
    if fast:
        sigma = math.sqrt(noise.variance) if noise.kind == GAUSSIAN else 0.0
        keep = 1.0 - failure.p
        sqrtdeg = np.sqrt(failure.graph.degrees.astype(np.float64))
        erasure = failure.kind == ERASURE
        bx = np.empty(_BLOCK)
        bd = np.empty(_BLOCK)
        bs = np.empty(_BLOCK)
        done = 0
        while done < iterations:
            nb = min(_BLOCK, iterations - done)
            alphas = np.full(nb, alpha)
            z = gen_noise.standard_normal((nb, n)) if sigma > 0.0 else np.zeros((nb, n))
            if erasure:
                unif = gen_links.random((nb, u.size))
                bad = and_erasure_gauss_block(
                    x, u, v, unif, keep, z, sigma, alphas,
                    bx[:nb], bd[:nb], bs[:nb], 0.0, DIVERGENCE_GUARD,
                )
            else:
                bad = and_static_gauss_block(
                    x, u, v, sqrtdeg, z, sigma, alphas,
                    bx[:nb], bd[:nb], bs[:nb], 0.0, DIVERGENCE_GUARD,
                )
            if bad >= 0:
                raise DivergenceError(
                    done + bad, float(np.abs(x).max()),
                    hint="constant weight too large (alpha >= 2/lambda_max diverges)",
                )
            done += nb
    else:
        state_dep = failure.kind == STATE_DEPENDENT
        for i in range(iterations):
            if state_dep:
                lap, live = sample_laplacian(failure, gen_links, iteration=i, x=x)
                lx = lap.matrix @ x
                lu, lv = live[:, 0], live[:, 1]
            else:
                mask = draw_live_mask(failure, gen_links)
                lu, lv = u[mask], v[mask]
                d = x[lu] - x[lv]
                lx = np.bincount(lu, weights=d, minlength=n) - np.bincount(
                    lv, weights=d, minlength=n
                )
            nvec = sample_noise(noise, lu, lv, x, gen_noise)
            x -= alpha * (lx + nvec)
            mx = float(np.abs(x).max())
            if not (mx <= DIVERGENCE_GUARD):
                raise DivergenceError(
                    i, mx,
                    hint="constant weight too large (alpha >= 2/lambda_max diverges)",
                )
    return x


def _check_state(x0: np.ndarray, failure: LinkFailureModel) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[0] != failure.graph.node_count:
        raise ValueError(
            f"state has {x0.shape[0]} entries but the graph has "
            f"{failure.graph.node_count} nodes"
        )
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state has non-finite entries")
    return x0


def run_anc_pass(
    x0: np.ndarray,
    config: AncConfig,
    failure: LinkFailureModel,
    noise: NoiseModel,
    rng: RngStream,
    lane: int,
) -> np.ndarray:
    """Final state of the single pass that run_anc executes at this lane.

    Passes are independent work units: computing lanes in any order (or on
    any machine) and averaging the finals in lane order reproduces run_anc
    bitwise.
    """
    x0 = _check_state(x0, failure)
    return _pass_final(x0, config.alpha, config.iterations, failure, noise, rng, lane)


def run_anc_passes(
    x0: np.ndarray,
    config: AncConfig,
    failure: LinkFailureModel,
    noise: NoiseModel,
    rng: RngStream,
) -> np.ndarray:
    """Final states of all passes, one row per pass, rows in lane order."""
    x0 = _check_state(x0, failure)
    finals = np.empty((config.passes, x0.shape[0]))
    for p in range(config.passes):
        finals[p] = _pass_final(
            x0, config.alpha, config.iterations, failure, noise, rng, lane=p
        )
    return finals


def run_anc(
    x0: np.ndarray,
    config: AncConfig,
    failure: LinkFailureModel,
    noise: NoiseModel,
    rng: RngStream,
) -> np.ndarray:
    """Per-sensor mean of the pass finals (rows averaged in lane order)."""
    return run_anc_passes(x0, config, failure, noise, rng).mean(axis=0)


def error_moment_bounds(
    config: AncConfig, gamma2_value: float, phi2_max: float, node_count: int
) -> tuple[float, float]:
    """(mean bound, per-pass variance bound) for each sensor's final state.

    The mean of any sensor stays within gamma2^iterations * radius of the
    initial average; its variance is at most
    alpha^2 * phi2_max * (i/N + (1 - g^(2i))/(1 - g^2) * (1 - 1/N)).
    """
    g = float(gamma2_value)
    if not (0.0 <= g < 1.0):
        raise ValueError(f"gamma2 must lie in [0, 1), got {g}")
    if phi2_max < 0.0:
        raise ValueError("phi2_max must be >= 0")
    i_hat = config.iterations
    n = node_count
    mean_bound = g**i_hat * config.radius
    geo = (1.0 - g ** (2 * i_hat)) / (1.0 - g * g) if g > 0.0 else (1.0 if i_hat else 0.0)
    var_bound = config.alpha**2 * phi2_max * (i_hat / n + geo * (1.0 - 1.0 / n))
    return float(mean_bound), float(var_bound)


def approx_averaging_time(
    gamma2_value: float,
    alpha: float,
    epsilon: float,
    delta: float,
    radius: float,
    phi2_max: float,
    node_count: int,
) -> float:
    """Closed-form bound on iterations*passes needed so every sensor lands
    within epsilon*radius of the initial average with probability 1-delta."""
    g = float(gamma2_value)
    if not (0.0 <= g < 1.0):
        raise ValueError(f"gamma2 must lie in [0, 1), got {g}")
    if not (0.0 < epsilon < 1.0 and 0.0 < delta < 1.0):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    if radius <= 0.0 or phi2_max < 0.0 or alpha <= 0.0:
        raise ValueError("radius and alpha must be positive, phi2_max >= 0")
    n = node_count
    log_ratio = math.log(epsilon / 2.0) / math.log(g) if g > 0.0 else 0.0
    geo = (1.0 - g * g * epsilon * epsilon / 4.0) / (1.0 - g * g) if g > 0.0 else 1.0
    coef = 4.0 * alpha**2 * phi2_max * math.log(2.0 / delta) / (radius * epsilon)
    inner = coef * (log_ratio / n + 1.0 / n + geo * (1.0 - 1.0 / n)) + 1.0
    return (log_ratio + 1.0) * inner


@dataclass(frozen=True)
class IterationPlan:
    """Recommended per-pass iterations and pass count for a target accuracy."""

    i_star: float
    p_star: float

    @property
    def i_star_ceil(self) -> int:
        return max(1, math.ceil(self.i_star))

    @property
    def p_star_ceil(self) -> int:
        return max(1, math.ceil(self.p_star))

    @property
    def product(self) -> float:
        return self.i_star * self.p_star


def recommended_iterations(
    gamma2_value: float,
    alpha: float,
    epsilon: float,
    delta: float,
    radius: float,
    phi2_max: float,
    node_count: int,
) -> IterationPlan:
    """Split the averaging-time bound into (iterations, passes); their real
    product equals approx_averaging_time exactly."""
    g = float(gamma2_value)
    if not (0.0 <= g < 1.0):
        raise ValueError(f"gamma2 must lie in [0, 1), got {g}")
    n = node_count
    log_ratio = math.log(epsilon / 2.0) / math.log(g) if g > 0.0 else 0.0
    i_star = log_ratio + 1.0
    geo = (1.0 - g * g * epsilon * epsilon / 4.0) / (1.0 - g * g) if g > 0.0 else 1.0
    coef = 4.0 * alpha**2 * phi2_max * math.log(2.0 / delta) / (radius * epsilon)
    p_star = coef * (i_star / n + geo * (1.0 - 1.0 / n)) + 1.0
    return IterationPlan(i_star, p_star)


@dataclass(frozen=True)
class OptimizeResult:
    alpha_star: float
    t_hat_star: float
    gamma2_star: float
    alpha_bullet: float
    t_hat_bullet: float


def optimize_alpha(
    lap: Laplacian,
    epsilon: float,
    delta: float,
    radius: float,
    phi2_max: float,
    grid_points: int = 1000,
    rel_width: float = 1e-6,
) -> OptimizeResult:
    """Minimize the averaging-time bound over alpha in (0, alpha_bullet].

    Uniform grid scan, then golden-section refinement around the best cell;
    ties break toward the smaller alpha.
    """
    lam2 = algebraic_connectivity(lap)
    lam_n = spectral_radius(lap)
    if lam2 <= 1e-8 * max(1.0, lam_n):
        raise DisconnectedGraphError(
            f"graph is not connected (lam2 = {lam2:.3e}); averaging time is infinite"
        )
    ab = 2.0 / (lam2 + lam_n)
    n = lap.n

    def t_hat(a: float) -> float:
        g = max(abs(1.0 - a * lam2), abs(1.0 - a * lam_n))
        return approx_averaging_time(g, a, epsilon, delta, radius, phi2_max, n)

    grid = ab * np.arange(1, grid_points + 1) / grid_points
    values = np.array([t_hat(a) for a in grid])
    k = int(np.argmin(values))  # first minimum = smallest alpha on ties
    best_a, best_t = float(grid[k]), float(values[k])

    lo = float(grid[k - 1]) if k >= 1 else float(grid[0]) / 1e3
    hi = float(grid[k + 1]) if k + 1 < grid_points else ab
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = t_hat(c), t_hat(d)
    while (hi - lo) > rel_width * max(best_a, lo):
        for a, t in ((c, fc), (d, fd)):
            if t < best_t or (t == best_t and a < best_a):
                best_a, best_t = a, t
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = t_hat(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = t_hat(d)
    g_star = max(abs(1.0 - best_a * lam2), abs(1.0 - best_a * lam_n))
    return OptimizeResult(best_a, best_t, g_star, ab, float(values[-1]))


def chernoff_pass_count(
    variance: float, radius: float, epsilon: float, delta: float
) -> int:
    """Passes needed so the per-sensor mean lands within epsilon*radius with
    probability 1-delta, given per-pass variance; 0 when the variance is 0."""
    if variance < 0.0:
        raise ValueError("variance must be >= 0")
    if radius <= 0.0 or not (0.0 < epsilon < 1.0 and 0.0 < delta < 1.0):
        raise ValueError("need radius > 0 and epsilon, delta in (0, 1)")
    if variance == 0.0:
        return 0
    return math.ceil(2.0 * variance / (radius * epsilon) * math.log(2.0 / delta))


def clopper_pearson_lower(successes: int, trials: int, confidence: float = 0.95) -> float:
    """Exact one-sided binomial lower confidence bound on the success rate."""
    if not (0 <= successes <= trials) or trials < 1:
        raise ValueError("need 0 <= successes <= trials, trials >= 1")
    if successes == 0:
        return 0.0
    return float(beta_dist.ppf(1.0 - confidence, successes, trials - successes + 1))


@dataclass(frozen=True)
class EmpiricalPoint:
    """Search outcome for one constant weight."""

    alpha: float
    achieved: bool
    iterations: int
    passes: int
    t_emp: float
    worst_fraction: float
    message: str


@dataclass(frozen=True)
class EmpiricalResult:
    """Empirical averaging time: a lower-bound estimate of the true optimum
    (finite sampling of initial states can only under-cover the worst case)."""

    epsilon: float
    delta: float
    radius: float
    x0_samples: int
    runs_per_x0: int
    confidence: float
    points: tuple[EmpiricalPoint, ...]

    @property
    def best(self) -> EmpiricalPoint | None:
        hits = [p for p in self.points if p.achieved]
        return min(hits, key=lambda p: (p.t_emp, p.alpha)) if hits else None


def _log_spaced_ints(upper: int, count: int) -> list[int]:
    upper = max(1, int(upper))
    vals = np.unique(
        np.rint(np.logspace(0.0, math.log10(upper), count)).astype(int)
    )
    return [int(x) for x in vals if 1 <= x <= upper]


def min_certifiable_runs(delta: float, confidence: float = 0.95) -> int:
    """Smallest run count whose perfect score certifies success rate 1-delta."""
    return math.ceil(math.log(1.0 - confidence) / math.log(1.0 - delta))


def empirical_averaging_time(
    failure: LinkFailureModel,
    noise: NoiseModel,
    epsilon: float,
    delta: float,
    radius: float,
    alpha_grid: Sequence[float],
    rng: RngStream,
    x0_samples: int = 10,
    runs_per_x0: int = 100,
    phi2_max: float | None = None,
    grid_count: int = 25,
    grid_factor: float = 3.0,
    confidence: float = 0.95,
) -> EmpiricalResult:
    """Search the smallest iterations*passes certified to meet the target.

    For each weight, candidate (iterations, passes) pairs are scanned in
    increasing product order; a candidate is accepted when, for every sampled
    initial state, every sensor's success count over the replications clears
    the exact binomial lower bound at the given confidence.  Initial states
    are drawn uniformly on the sphere of the given radius about mean zero.
    """
    if runs_per_x0 < 30:
        raise ConfigError(f"runs_per_x0 must be >= 30, got {runs_per_x0}")
    if x0_samples < 1:
        raise ConfigError("x0_samples must be >= 1")
    need = min_certifiable_runs(delta, confidence)
    if runs_per_x0 < need:
        raise ConfigError(
            f"runs_per_x0 = {runs_per_x0} cannot certify success rate "
            f"{1 - delta:g} at confidence {confidence:g}: even a perfect "
            f"score falls short; need at least {need} runs"
        )
    # Largest per-x0 failure count (at any single sensor) that still certifies.
    allowed = 0
    while allowed + 1 <= runs_per_x0 and clopper_pearson_lower(
        runs_per_x0 - (allowed + 1), runs_per_x0, confidence
    ) >= 1.0 - delta:
        allowed += 1

    lap = (
        build_laplacian(failure.graph)
        if failure.kind == STATIC
        else mean_laplacian(failure)
    )
    n = failure.graph.node_count
    if phi2_max is None:
        _, _, phi2_max = noise_statistics(noise, failure.graph, failure)

    gen0 = rng.generator(INIT)
    x0s = []
    for _ in range(x0_samples):
        z = gen0.standard_normal(n)
        z -= z.mean()
        x0s.append(radius * z / np.linalg.norm(z))

    tol = epsilon * radius
    points = []
    per_cand = x0_samples * runs_per_x0
    for ai, alpha in enumerate(alpha_grid):
        g = gamma2(lap, float(alpha))
        plan = recommended_iterations(g, float(alpha), epsilon, delta, radius, phi2_max, n)
        i_max = max(1, math.ceil(grid_factor * plan.i_star))
        p_max = max(1, math.ceil(grid_factor * plan.p_star))
        i_grid = sorted(set(_log_spaced_ints(i_max, grid_count) + [plan.i_star_ceil]))
        p_grid = sorted(set(_log_spaced_ints(p_max, grid_count) + [plan.p_star_ceil]))
        candidates = sorted(
            ((i, p) for i in i_grid for p in p_grid), key=lambda ip: (ip[0] * ip[1], ip[0])
        )
        # Disjoint id block per weight: results do not depend on how many
        # candidates earlier weights consumed, and runs never share a stream.
        base = 1 + ai * (1 << 32)
        found = None
        best_frac = 0.0
        for ci, (i_hat, p_hat) in enumerate(candidates):
            cfg = AncConfig(float(alpha), i_hat, p_hat, radius, epsilon, delta)
            ok = True
            cand_worst = 1.0
            for xi, x0 in enumerate(x0s):
                fails = np.zeros(n, dtype=np.int64)
                done = 0
                for rep in range(runs_per_x0):
                    sid = base + ci * per_cand + xi * runs_per_x0 + rep
                    est = run_anc(x0, cfg, failure, noise, rng.substream(sid))
                    fails += np.abs(est) > tol
                    done = rep + 1
                    if fails.max() > allowed:
                        ok = False
                        break
                cand_worst = min(cand_worst, 1.0 - fails.max() / done)
                if not ok:
                    break
            best_frac = max(best_frac, cand_worst)
            if ok:
                found = (i_hat, p_hat, cand_worst)
                break
        if found:
            i_hat, p_hat, frac = found
            points.append(
                EmpiricalPoint(
                    float(alpha), True, i_hat, p_hat, float(i_hat * p_hat), frac,
                    f"certified at ({i_hat}, {p_hat})",
                )
            )
        else:
            points.append(
                EmpiricalPoint(
                    float(alpha), False, 0, 0, math.inf, best_frac,
                    f"not achieved within grid (best worst-sensor fraction {best_frac:.3f})",
                )
            )
    return EmpiricalResult(
        epsilon, delta, radius, x0_samples, runs_per_x0, confidence, tuple(points)
    )


@dataclass(frozen=True)
class AveragingTimeReport:
    """Everything the weight optimizer concluded for one accuracy target."""

    epsilon: float
    delta: float
    radius: float
    phi2_max: float
    node_count: int
    alpha_bullet: float
    alpha_star: float
    gamma2_star: float
    t_hat_star: float
    t_hat_at_alpha_bullet: float
    i_star: float
    p_star: float
    i_star_ceil: int
    p_star_ceil: int
    empirical: EmpiricalResult | None = field(default=None)

    def to_dict(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "radius": self.radius,
            "phi2_max": self.phi2_max,
            "node_count": self.node_count,
            "alpha_bullet": self.alpha_bullet,
            "alpha_star": self.alpha_star,
            "gamma2_star": self.gamma2_star,
            "t_hat_star": self.t_hat_star,
            "t_hat_at_alpha_bullet": self.t_hat_at_alpha_bullet,
            "i_star": self.i_star,
            "p_star": self.p_star,
            "i_star_ceil": self.i_star_ceil,
            "p_star_ceil": self.p_star_ceil,
        }
        if self.empirical is not None:
            emp = self.empirical
            out["empirical"] = {
                "epsilon": emp.epsilon,
                "delta": emp.delta,
                "radius": emp.radius,
                "x0_samples": emp.x0_samples,
                "runs_per_x0": emp.runs_per_x0,
                "confidence": emp.confidence,
                "estimate_kind": "lower bound (finite initial-state sampling)",
                "points": [
                    {
                        "alpha": p.alpha,
                        "achieved": p.achieved,
                        "iterations": p.iterations,
                        "passes": p.passes,
                        "t_emp": p.t_emp if math.isfinite(p.t_emp) else None,
                        "worst_fraction": p.worst_fraction,
                        "message": p.message,
                    }
                    for p in emp.points
                ],
            }
        return out

    def write_json(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def build_report(
    lap: Laplacian,
    epsilon: float,
    delta: float,
    radius: float,
    phi2_max: float,
    empirical: EmpiricalResult | None = None,
) -> AveragingTimeReport:
    opt = optimize_alpha(lap, epsilon, delta, radius, phi2_max)
    plan = recommended_iterations(
        opt.gamma2_star, opt.alpha_star, epsilon, delta, radius, phi2_max, lap.n
    )
    return AveragingTimeReport(
        epsilon=epsilon,
        delta=delta,
        radius=radius,
        phi2_max=phi2_max,
        node_count=lap.n,
        alpha_bullet=opt.alpha_bullet,
        alpha_star=opt.alpha_star,
        gamma2_star=opt.gamma2_star,
        t_hat_star=opt.t_hat_star,
        t_hat_at_alpha_bullet=opt.t_hat_bullet,
        i_star=plan.i_star,
        p_star=plan.p_star,
        i_star_ceil=plan.i_star_ceil,
        p_star_ceil=plan.p_star_ceil,
        empirical=empirical,
    )
