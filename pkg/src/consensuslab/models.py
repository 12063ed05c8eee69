"""Link-failure and channel-noise models with their closed-form statistics.

Link failures: each undirected edge of the base graph is either always
present (static), live independently with probability 1-p each iteration
(erasure), live with a per-edge probability, or supplied by an arbitrary
state-dependent hook returning the iteration's Laplacian.

Channel noise: each live edge carries two independent per-direction
additive draws (the value node u hears from v is corrupted independently of
the value v hears from u).  Supported families: none, zero-mean Gaussian,
zero-mean uniform, and a multiplicative gain-plus-dither model
``n(i, x) = theta(i) * (x + w(i))`` that depends on the whole state.

The per-direction independence is what makes the node aggregates
``n_l = -sum_{k live} v_lk`` uncorrelated across nodes, so the total noise
power over an erasure network is exactly ``2 * M * (1 - p) * mu`` per
iteration, with ``mu`` the per-link variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import UnsupportedModelError
from .spectral import Graph, Laplacian, build_laplacian

# Failure-model kinds.
STATIC = "static"
ERASURE = "erasure"
PER_LINK = "per_link"
STATE_DEPENDENT = "state_dependent"

# Noise-model kinds.
NONE = "none"
GAUSSIAN = "gaussian"
UNIFORM = "uniform"
MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True)
class LinkFailureModel:
    """Which links are alive at each iteration of a consensus run."""

    graph: Graph
    kind: str = STATIC
    p: float = 0.0
    per_link: tuple[float, ...] | None = None
    hook: Callable[[int, np.ndarray], Laplacian] | None = None

    def __post_init__(self):
        if self.kind not in (STATIC, ERASURE, PER_LINK, STATE_DEPENDENT):
            raise ValueError(f"unknown failure kind {self.kind!r}")
        if self.kind == ERASURE and not (0.0 <= self.p < 1.0):
            raise ValueError(f"erasure probability must be in [0, 1), got {self.p}")
        if self.kind == PER_LINK:
            if self.per_link is None or len(self.per_link) != self.graph.edge_count:
                raise ValueError(
                    "per_link needs one failure probability per edge "
                    f"({self.graph.edge_count}), got "
                    f"{None if self.per_link is None else len(self.per_link)}"
                )
            if any(not (0.0 <= q < 1.0) for q in self.per_link):
                raise ValueError("per-link failure probabilities must be in [0, 1)")
        if self.kind == STATE_DEPENDENT and self.hook is None:
            raise ValueError("state-dependent model needs a hook")

    @classmethod
    def static(cls, graph: Graph) -> "LinkFailureModel":
        return cls(graph, STATIC)

    @classmethod
    def erasure(cls, graph: Graph, p: float) -> "LinkFailureModel":
        return cls(graph, ERASURE, p=float(p))

    @classmethod
    def per_link(cls, graph: Graph, probs) -> "LinkFailureModel":
        return cls(graph, PER_LINK, per_link=tuple(float(q) for q in probs))

    @classmethod
    def state_dependent(cls, graph: Graph, hook) -> "LinkFailureModel":
        return cls(graph, STATE_DEPENDENT, hook=hook)

    @cached_property
    def keep_probs(self) -> np.ndarray:
        """Per-edge probability that the link is alive in one iteration."""
        m = self.graph.edge_count
        if self.kind == STATIC:
            probs = np.ones(m)
        elif self.kind == ERASURE:
            probs = np.full(m, 1.0 - self.p)
        elif self.kind == PER_LINK:
            probs = 1.0 - np.asarray(self.per_link)
        else:
            raise UnsupportedModelError("state-dependent links have no keep_probs")
        probs.setflags(write=False)
        return probs


@dataclass(frozen=True)
class NoiseModel:
    """Additive channel noise attached to each live directed link."""

    kind: str = NONE
    variance: float = 0.0        # per-link variance mu
    half_width: float = 0.0      # uniform support bound b (variance b^2/3)
    gain_variance: float = 0.0   # multiplicative: Var(theta)
    dither_variance: float = 0.0  # multiplicative: Var(w components)

    def __post_init__(self):
        if self.kind not in (NONE, GAUSSIAN, UNIFORM, MULTIPLICATIVE):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        for name in ("variance", "half_width", "gain_variance", "dither_variance"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls(NONE)

    @classmethod
    def gaussian(cls, variance: float) -> "NoiseModel":
        return cls(GAUSSIAN, variance=float(variance))

    @classmethod
    def uniform(cls, half_width: float) -> "NoiseModel":
        b = float(half_width)
        return cls(UNIFORM, variance=b * b / 3.0, half_width=b)

    @classmethod
    def multiplicative_markov(
        cls, gain_variance: float, dither_variance: float
    ) -> "NoiseModel":
        """n(i, x) = theta(i) * (x + w(i)), theta and w zero-mean Gaussian."""
        return cls(
            MULTIPLICATIVE,
            gain_variance=float(gain_variance),
            dither_variance=float(dither_variance),
        )

    @property
    def per_link_variance(self) -> float:
        """mu: variance of one directed-link draw (independent families)."""
        if self.kind in (NONE, GAUSSIAN, UNIFORM):
            return self.variance
        raise UnsupportedModelError(f"{self.kind} noise has no per-link variance")


def draw_live_mask(failure: LinkFailureModel, gen: np.random.Generator) -> np.ndarray:
    """One Bernoulli liveness draw per base edge, in canonical edge order."""
    m = failure.graph.edge_count
    if failure.kind == STATIC:
        return np.ones(m, dtype=bool)
    if failure.kind in (ERASURE, PER_LINK):
        return gen.random(m) < failure.keep_probs
    raise UnsupportedModelError("state-dependent links are sampled via their hook")


def sample_laplacian(
    failure: LinkFailureModel,
    gen: np.random.Generator,
    iteration: int = 0,
    x: np.ndarray | None = None,
) -> tuple[Laplacian, np.ndarray]:
    """Draw one iteration's Laplacian; returns (Laplacian, live (u, v) pairs)."""
    n = failure.graph.node_count
    if failure.kind == STATE_DEPENDENT:
        lap = failure.hook(iteration, x)
        if not isinstance(lap, Laplacian):
            lap = Laplacian(lap)
        iu, iv = np.nonzero(np.triu(lap.matrix, 1))
        live = np.column_stack([iu, iv]).astype(np.int64)
        return lap, live
    u, v = failure.graph.edge_arrays
    mask = draw_live_mask(failure, gen)
    lu, lv = u[mask], v[mask]
    a = np.zeros((n, n))
    np.add.at(a, (lu, lv), -1.0)
    np.add.at(a, (lv, lu), -1.0)
    deg = np.bincount(lu, minlength=n) + np.bincount(lv, minlength=n)
    a[np.arange(n), np.arange(n)] = deg
    return Laplacian(a), np.column_stack([lu, lv])


def mean_laplacian(failure: LinkFailureModel) -> Laplacian:
    """Expected Laplacian: keep-probability-weighted base Laplacian."""
    if failure.kind == STATE_DEPENDENT:
        raise UnsupportedModelError("state-dependent links have no closed-form mean")
    if failure.kind == STATIC:
        return build_laplacian(failure.graph)
    n = failure.graph.node_count
    u, v = failure.graph.edge_arrays
    w = failure.keep_probs
    a = np.zeros((n, n))
    a[u, v] -= w
    a[v, u] -= w
    deg = np.bincount(u, weights=w, minlength=n) + np.bincount(v, weights=w, minlength=n)
    a[np.arange(n), np.arange(n)] = deg
    return Laplacian(a)


def sample_noise(
    noise: NoiseModel,
    live_u: np.ndarray,
    live_v: np.ndarray,
    x: np.ndarray,
    gen: np.random.Generator,
) -> np.ndarray:
    """One iteration's aggregate noise vector n, with n_l summing the draws
    on node l's live incoming links (negated).

    Per live edge j the draw layout is interleaved: draws[2j] is heard by
    live_u[j], draws[2j+1] by live_v[j].
    """
    n = x.shape[0]
    k = live_u.shape[0]
    if noise.kind == NONE:
        return np.zeros(n)
    if noise.kind == MULTIPLICATIVE:
        theta = gen.normal(0.0, np.sqrt(noise.gain_variance))
        w = gen.normal(0.0, np.sqrt(noise.dither_variance), size=n)
        return theta * (x + w)
    if noise.kind == GAUSSIAN:
        draws = gen.normal(0.0, np.sqrt(noise.variance), size=2 * k)
    else:  # UNIFORM
        draws = gen.uniform(-noise.half_width, noise.half_width, size=2 * k)
    out = np.zeros(n)
    np.subtract.at(out, live_u, draws[0::2])
    np.subtract.at(out, live_v, draws[1::2])
    return out


def noise_statistics(
    noise: NoiseModel, graph: Graph, failure: LinkFailureModel
) -> tuple[float, float, float]:
    """(mu, eta, phi2_max): per-link variance, exact per-iteration total
    noise power E||n||^2, and the worst-node power bound d_max * mu.

    Exact only for independent per-link noise over static/erasure/per-link
    failures; state-dependent links and multiplicative noise have no closed
    form here.
    """
    if noise.kind == MULTIPLICATIVE:
        raise UnsupportedModelError("multiplicative noise has no closed-form statistics")
    if failure.kind == STATE_DEPENDENT:
        raise UnsupportedModelError("state-dependent links have no closed-form statistics")
    mu = noise.per_link_variance
    if noise.kind == NONE:
        return 0.0, 0.0, 0.0
    eta = 2.0 * mu * float(failure.keep_probs.sum())
    phi2_max = float(graph.max_degree) * mu
    return mu, eta, phi2_max
