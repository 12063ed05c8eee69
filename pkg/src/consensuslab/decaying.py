"""Average consensus with decaying step weights over noisy, failing links.

The update is ``x(i+1) = x(i) - alpha(i) * (L(i) x(i) + n(i))`` with a
weight sequence ``alpha(i) = s / (i + a)^beta``, ``beta in (0.5, 1]``: square
summable but not summable, so the iterates reach consensus almost surely on
a random limit whose expectation is the initial average ``r``.  The limit's
mean-squared deviation from ``r`` is controlled by the total injected noise
power, which for erasure links with independent per-direction noise is exact:

    mse = (2 * M * mu * (1 - p) / N^2) * sum_i alpha(i)^2.

This module provides the iteration, trajectory recording, the closed-form
mean-squared-error expressions, the weight rescaling that hits a target
accuracy, and the exponential bound on how fast the mean path contracts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import zeta

from ._kernels import and_erasure_gauss_block, and_static_gauss_block
from .errors import DivergenceError
from .models import (
    ERASURE,
    GAUSSIAN,
    NONE,
    STATE_DEPENDENT,
    STATIC,
    LinkFailureModel,
    NoiseModel,
    draw_live_mask,
    sample_laplacian,
    sample_noise,
)
from .spectral import Laplacian
from .streams import LINKS, NOISE, RngStream

DIVERGENCE_GUARD = 1e12
_BLOCK = 512


@dataclass(frozen=True)
class WeightSequence:
    """alpha(i) = scale / (i + offset)^exponent, i = 0, 1, 2, ..."""

    scale: float
    exponent: float = 1.0
    offset: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not (0.5 < self.exponent <= 1.0):
            raise ValueError(
                f"exponent must lie in (0.5, 1] for square-summable, "
                f"non-summable weights, got {self.exponent}"
            )
        if not (np.isfinite(self.offset) and self.offset >= 1.0):
            raise ValueError(f"offset must be >= 1, got {self.offset}")

    def alpha(self, i):
        """Weight at iteration i (scalar or array)."""
        return self.scale / (np.asarray(i, dtype=np.float64) + self.offset) ** self.exponent

    @cached_property
    def sum_sq(self) -> float:
        """sum_{i>=0} alpha(i)^2 = scale^2 * zeta(2*exponent, offset)."""
        return float(self.scale**2 * zeta(2.0 * self.exponent, self.offset))

    def partial_sum(self, iterations: int) -> float:
        """sum_{i < iterations} alpha(i)."""
        if iterations <= 0:
            return 0.0
        return float(self.alpha(np.arange(iterations)).sum())

    def partial_sum_sq(self, iterations: int) -> float:
        """sum_{i < iterations} alpha(i)^2."""
        if iterations <= 0:
            return 0.0
        return float((self.alpha(np.arange(iterations)) ** 2).sum())

    def scaled(self, factor: float) -> "WeightSequence":
        return WeightSequence(self.scale * factor, self.exponent, self.offset)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Diagnostics of one run: per-recorded-iteration scalars plus snapshots.

    ``diag_iters[k]`` gives the iteration index of row k; with the default
    stride of 1 that is simply 0..iterations.  ``sq_err`` is
    ``(x_avg(i) - r)^2`` against the initial average r.
    """

    initial_average: float
    diag_iters: np.ndarray
    x_avg: np.ndarray
    dist_consensus: np.ndarray
    sq_err: np.ndarray
    snapshot_iters: np.ndarray
    snapshots: np.ndarray
    final_state: np.ndarray

    @property
    def iterations(self) -> int:
        return int(self.diag_iters[-1])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("iter,x_avg,dist_consensus,sq_err\n")
            for i, xa, dc, se in zip(
                self.diag_iters, self.x_avg, self.dist_consensus, self.sq_err
            ):
                fh.write(f"{int(i)},{float(xa)!r},{float(dc)!r},{float(se)!r}\n")

    def write_snapshots_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("iter,node,value\n")
            for i, row in zip(self.snapshot_iters, self.snapshots):
                for node, value in enumerate(row):
                    fh.write(f"{int(i)},{node},{float(value)!r}\n")


def and_step(
    x: np.ndarray, alpha: float, lap: Laplacian, noise_vec: np.ndarray
) -> np.ndarray:
    """One update x - alpha * (L x + n)."""
    return x - alpha * (lap.matrix @ x + noise_vec)


def _record_iters(iterations: int, stride: int) -> np.ndarray:
    idx = np.arange(0, iterations + 1, max(1, stride))
    if idx[-1] != iterations:
        idx = np.append(idx, iterations)
    return idx


def run_and(
    x0: np.ndarray,
    weights: WeightSequence,
    failure: LinkFailureModel,
    noise: NoiseModel,
    iterations: int,
    rng: RngStream,
    snapshot_stride: int = 0,
    diag_stride: int = 1,
) -> TrajectoryRecord:
    """Run the decaying-weight iteration and record its trajectory.

    Draws are consumed in canonical edge order from the stream's LINKS and
    NOISE blocks, so a (seed, stream_id) pair fixes the sample path exactly.
    Raises DivergenceError if any |x_n| exceeds 1e12.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    n = x.shape[0]
    if n != failure.graph.node_count:
        raise ValueError(
            f"state has {n} entries but the graph has {failure.graph.node_count} nodes"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state has non-finite entries")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")

    r = float(x.mean())
    xavg = np.empty(iterations + 1)
    dist = np.empty(iterations + 1)
    snap_iters = (
        _record_iters(iterations, snapshot_stride) if snapshot_stride else
        np.array([iterations], dtype=np.int64)
    )
    snaps = np.empty((snap_iters.size, n))
    xavg[0] = r
    dist[0] = float(np.linalg.norm(x - r))
    snap_pos = 0
    if snap_iters[0] == 0:
        snaps[0] = x
        snap_pos = 1

    fast = failure.kind in (STATIC, ERASURE) and noise.kind in (GAUSSIAN, NONE)
    if fast:
        _run_fast(x, weights, failure, noise, iterations, rng, xavg, dist,
                  snap_iters, snaps, snap_pos)
    else:
        _run_reference(x, weights, failure, noise, iterations, rng, xavg, dist,
                       snap_iters, snaps, snap_pos)

    keep = _record_iters(iterations, diag_stride)
    sq = (xavg - r) ** 2
    return TrajectoryRecord(
        initial_average=r,
        diag_iters=keep,
        x_avg=xavg[keep],
        dist_consensus=dist[keep],
        sq_err=sq[keep],
        snapshot_iters=snap_iters,
        snapshots=snaps,
        final_state=x,
    )


def _run_fast(x, weights, failure, noise, iterations, rng, xavg, dist,
              snap_iters, snaps, snap_pos):
    """Erasure/static links with Gaussian/no noise: JIT block kernel.

    Blocks are split at snapshot boundaries; the links and noise streams are
    separate generators consumed in iteration order, so block boundaries do
    not change the sample path.
    """
    n = x.shape[0]
    u, v = failure.graph.edge_arrays
    sigma = math.sqrt(noise.variance) if noise.kind == GAUSSIAN else 0.0
    gen_links = rng.generator(LINKS)
    gen_noise = rng.generator(NOISE)
    erasure = failure.kind == ERASURE
    keep = 1.0 - failure.p
    sqrtdeg = np.sqrt(failure.graph.degrees.astype(np.float64))
    r = xavg[0]
    bx = np.empty(_BLOCK)
    bd = np.empty(_BLOCK)
    bs = np.empty(_BLOCK)
    done = 0
    next_snap = snap_iters[snap_pos] if snap_pos < snap_iters.size else iterations + 1
    while done < iterations:
        limit = min(done + _BLOCK, iterations, next_snap)
        nb = limit - done
        alphas = weights.alpha(np.arange(done, limit))
        z = gen_noise.standard_normal((nb, n)) if sigma > 0.0 else np.zeros((nb, n))
        if erasure:
            unif = gen_links.random((nb, u.size))
            bad = and_erasure_gauss_block(
                x, u, v, unif, keep, z, sigma, alphas,
                bx[:nb], bd[:nb], bs[:nb], r, DIVERGENCE_GUARD,
            )
        else:
            bad = and_static_gauss_block(
                x, u, v, sqrtdeg, z, sigma, alphas,
                bx[:nb], bd[:nb], bs[:nb], r, DIVERGENCE_GUARD,
            )
        stop = nb if bad < 0 else bad + 1
        xavg[done + 1 : done + stop + 1] = bx[:stop]
        dist[done + 1 : done + stop + 1] = bd[:stop]
        if bad >= 0:
            raise DivergenceError(
                done + bad, float(np.abs(x).max()),
                hint="weight scale is too large for this graph's spectrum",
            )
        done = limit
        if done == next_snap:
            snaps[snap_pos] = x
            snap_pos += 1
            next_snap = snap_iters[snap_pos] if snap_pos < snap_iters.size else iterations + 1


def _run_reference(x, weights, failure, noise, iterations, rng, xavg, dist,
                   snap_iters, snaps, snap_pos):
    """Any model combination, one iteration at a time, pure numpy."""
    n = x.shape[0]
    u, v = failure.graph.edge_arrays
    gen_links = rng.generator(LINKS)
    gen_noise = rng.generator(NOISE)
    state_dep = failure.kind == STATE_DEPENDENT
    for i in range(iterations):
        a = float(weights.alpha(i))
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
        x -= a * (lx + nvec)
        mx = float(np.abs(x).max())
        if not (mx <= DIVERGENCE_GUARD):
            raise DivergenceError(
                i, mx, hint="weight scale is too large for this graph's spectrum"
            )
        m = float(x.mean())
        xavg[i + 1] = m
        dist[i + 1] = float(np.linalg.norm(x - m))
        if snap_pos < snap_iters.size and snap_iters[snap_pos] == i + 1:
            snaps[snap_pos] = x
            snap_pos += 1


def mse_bound(weights: WeightSequence, eta: float, node_count: int) -> float:
    """Upper bound (eta / N^2) * sum alpha^2 on E[(limit - r)^2]."""
    if eta < 0.0:
        raise ValueError("eta must be >= 0")
    return eta / node_count**2 * weights.sum_sq


def erasure_mse_exact(
    weights: WeightSequence,
    edge_count: int,
    per_link_variance: float,
    p: float,
    node_count: int,
) -> float:
    """Exact E[(limit - r)^2] for erasure links with independent link noise:
    (2 * M * mu * (1-p) / N^2) * sum alpha^2."""
    eta = 2.0 * edge_count * per_link_variance * (1.0 - p)
    return mse_bound(weights, eta, node_count)


def scale_weights_for_mse(
    target_mse: float, eta: float, node_count: int, base: WeightSequence
) -> WeightSequence:
    """Rescale a weight sequence so the mse bound equals target_mse.

    For the reciprocal sequence (exponent 1, offset 1) the scale comes out
    as sqrt(6 * target) * N / (sqrt(eta) * pi).
    """
    if target_mse <= 0.0:
        raise ValueError("target_mse must be positive")
    if eta <= 0.0:
        raise ValueError("eta must be positive to trade accuracy for scale")
    factor = math.sqrt(target_mse * node_count**2 / (eta * base.sum_sq))
    return base.scaled(factor)


def cr3_compliant_from(
    weights: WeightSequence, lam2_mean: float, lam_n_mean: float
) -> int:
    """First iteration index from which alpha(i) <= 2/(lam2 + lamN).

    The weights decay monotonically, so the index solves in closed form.
    """
    thr = 2.0 / (lam2_mean + lam_n_mean)
    if weights.alpha(0) <= thr:
        return 0
    return max(0, math.ceil((weights.scale / thr) ** (1.0 / weights.exponent) - weights.offset))


def mean_convergence_bound(
    iterations: int,
    lam2_mean: float,
    weights: WeightSequence,
    initial_deviation: float,
    lam_n_mean: float | None = None,
) -> float:
    """exp(-lam2_mean * sum_{j<iterations} alpha(j)) * initial_deviation.

    Valid when every weight satisfies alpha(i) <= 2/(lam2 + lamN) of the mean
    Laplacian; pass lam_n_mean to enforce that precondition (the error names
    the first offending index; see cr3_compliant_from for the clipped start).
    """
    if lam2_mean <= 0.0:
        raise ValueError("mean Laplacian must be connected (lam2 > 0)")
    if lam_n_mean is not None:
        i0 = cr3_compliant_from(weights, lam2_mean, lam_n_mean)
        if i0 > 0:
            raise ValueError(
                f"alpha(0) = {float(weights.alpha(0)):.6g} exceeds "
                f"2/(lam2+lamN) = {2.0 / (lam2_mean + lam_n_mean):.6g}; "
                f"weights first comply at index {i0}"
            )
    return math.exp(-lam2_mean * weights.partial_sum(iterations)) * initial_deviation
