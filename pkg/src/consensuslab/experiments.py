"""Experiment recipes behind the CLI.

Each ``cmd_*`` function assembles graph/failure/noise/weight objects from an
:class:`~consensuslab.config.ExperimentConfig`, runs its study, and returns a
:class:`ResultTable`.  All randomness is keyed by ``(master seed, indices)``,
and independent work units map across processes with an order-preserving
reduction, so rows are bitwise identical no matter how many workers run them.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Iterable, Sequence

import numpy as np

from ._version import __version__
from .config import ExperimentConfig, canonical_text, config_hash
from .decaying import WeightSequence, _record_iters, erasure_mse_exact, run_and
from .errors import ConfigError
from .models import LinkFailureModel, NoiseModel
from .repeated import (
    AveragingTimeReport,
    approx_averaging_time,
    empirical_averaging_time,
    gamma2,
    optimize_alpha,
    recommended_iterations,
)
from .spectral import (
    Graph,
    algebraic_connectivity,
    build_laplacian,
    complete_graph,
    cycle_graph,
    generate_erdos_renyi,
    generate_random_regular,
    path_graph,
    read_edge_list,
    spectral_radius,
)
from .streams import INIT, RngStream


@dataclass(frozen=True)
class ResultTable:
    """Rectangular numeric results plus provenance metadata.

    ``metadata`` is an ordered tuple of (key, value) string pairs; keys may
    repeat (the canonical config is embedded one line per ``cfg`` entry).
    """

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    metadata: tuple[tuple[str, str], ...]

    def __post_init__(self):
        width = len(self.columns)
        for k, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(
                    f"row {k} has {len(row)} fields, schema has {width}"
                )

    def row_lines(self) -> list[str]:
        return [",".join(_fmt(v) for v in row) for row in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            for key, value in self.metadata:
                fh.write(f"# {key}: {value}\n")
            fh.write(",".join(self.columns) + "\n")
            for line in self.row_lines():
                fh.write(line + "\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_table(path) -> tuple[tuple[str, ...], list[list[str]], list[tuple[str, str]]]:
    """Parse a table written by :meth:`ResultTable.write_csv`.

    Row cells come back as the exact strings on disk (the bitwise contract);
    metadata as ordered (key, value) pairs.
    """
    metadata: list[tuple[str, str]] = []
    columns: tuple[str, ...] | None = None
    rows: list[list[str]] = []
    with open(path, newline="\n") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                metadata.append((key, value))
            elif columns is None:
                columns = tuple(line.split(","))
            elif line:
                rows.append(line.split(","))
    if columns is None:
        raise ValueError(f"{path} has no header row")
    return columns, rows, metadata


def embedded_config_overrides(metadata: Sequence[tuple[str, str]]) -> dict[str, str]:
    """Recover ``section.key -> value`` pairs from embedded ``cfg`` lines."""
    out = {}
    for key, value in metadata:
        if key == "cfg":
            dotted, _, raw = value.partition(" = ")
            out[dotted] = raw
    return out


def _metadata(cfg: ExperimentConfig, wall: float, extra: Iterable[tuple[str, str]] = ()):
    items = [
        ("experiment", cfg.experiment),
        ("config_hash", config_hash(cfg)),
        ("seed", str(cfg.seed)),
        ("code_version", __version__),
        ("wall_time_s", f"{wall:.3f}"),
    ]
    items.extend(extra)
    items.extend(("cfg", line) for line in canonical_text(cfg).splitlines())
    return tuple(items)


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    """Order-preserving map, across processes when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def build_graph(cfg: ExperimentConfig) -> Graph:
    kind = cfg.graph_kind
    n = cfg.graph_nodes
    try:
        if kind == "erdos_renyi":
            return generate_erdos_renyi(n, cfg.graph_edges, cfg.graph_seed)
        if kind == "random_regular":
            return generate_random_regular(n, cfg.graph_degree, cfg.graph_seed)
        if kind == "path":
            return path_graph(n)
        if kind == "cycle":
            return cycle_graph(n)
        if kind == "complete":
            return complete_graph(n)
        return read_edge_list(cfg.graph_path)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"graph.*: {exc}") from None


def build_failure(cfg: ExperimentConfig, graph: Graph) -> LinkFailureModel:
    if cfg.failure_kind == "static":
        return LinkFailureModel.static(graph)
    return LinkFailureModel.erasure(graph, cfg.failure_p)


def build_noise(cfg: ExperimentConfig, variance: float | None = None) -> NoiseModel:
    kind = cfg.noise_kind
    if kind == "none":
        return NoiseModel.none()
    if kind == "uniform":
        return NoiseModel.uniform(cfg.noise_half_width)
    return NoiseModel.gaussian(cfg.noise_variance if variance is None else variance)


def build_weights(cfg: ExperimentConfig, scale: float | None = None) -> WeightSequence:
    try:
        return WeightSequence(
            scale if scale is not None else cfg.weights_scale,
            cfg.weights_exponent,
            cfg.weights_offset,
        )
    except ValueError as exc:
        raise ConfigError(f"weights.*: {exc}") from None


def _draw_x0(cfg: ExperimentConfig, n: int, lane: int) -> np.ndarray:
    gen = RngStream(cfg.seed).generator(INIT, lane=lane)
    return gen.uniform(cfg.run_x0_low, cfg.run_x0_high, n)


# --- decaying-weight studies -------------------------------------------------


def cmd_and_paths(cfg: ExperimentConfig) -> ResultTable:
    """One long noisy run; every sensor's sampled path, for path plots."""
    t0 = time.perf_counter()
    if cfg.run_snapshot_stride < 1:
        raise ConfigError("run.snapshot_stride: path recording needs a stride >= 1")
    graph = build_graph(cfg)
    failure = build_failure(cfg, graph)
    noise = build_noise(cfg)
    weights = build_weights(cfg)
    x0 = _draw_x0(cfg, graph.node_count, lane=0)
    rec = run_and(
        x0, weights, failure, noise, cfg.run_iterations,
        RngStream(cfg.seed).substream(1),
        snapshot_stride=cfg.run_snapshot_stride,
        diag_stride=cfg.run_diag_stride,
    )
    rows = tuple(
        (int(it), node, float(rec.snapshots[k, node]))
        for k, it in enumerate(rec.snapshot_iters)
        for node in range(graph.node_count)
    )
    spread = float(rec.final_state.max() - rec.final_state.min())
    return ResultTable(
        ("iter", "node", "value"),
        rows,
        _metadata(cfg, time.perf_counter() - t0, [("final_spread", repr(spread))]),
    )


def _mse_run(cfg: ExperimentConfig, r: int) -> np.ndarray:
    graph = build_graph(cfg)
    rec = run_and(
        _draw_x0(cfg, graph.node_count, lane=r),
        build_weights(cfg),
        build_failure(cfg, graph),
        build_noise(cfg),
        cfg.run_iterations,
        RngStream(cfg.seed).substream(1 + r),
        snapshot_stride=0,
        diag_stride=cfg.run_diag_stride,
    )
    return rec.sq_err


def cmd_and_mse(cfg: ExperimentConfig) -> ResultTable:
    """Squared error of the running average per run, against the closed form."""
    t0 = time.perf_counter()
    graph = build_graph(cfg)
    if cfg.failure_kind != "erasure" or cfg.noise_kind != "gaussian":
        raise ConfigError(
            "failure.kind/noise.kind: the closed-form steady-state error needs "
            "an erasure failure model with Gaussian noise"
        )
    weights = build_weights(cfg)
    zeta = erasure_mse_exact(
        weights, graph.edge_count, cfg.noise_variance, cfg.failure_p, graph.node_count
    )
    per_run = _pmap(partial(_mse_run, cfg), range(cfg.run_runs), cfg.workers)
    iters = _record_iters(cfg.run_iterations, cfg.run_diag_stride)
    rows = tuple(
        (int(it), r, float(sq[k]), zeta)
        for r, sq in enumerate(per_run)
        for k, it in enumerate(iters)
    )
    finals = [float(sq[-1]) for sq in per_run]
    extra = [
        ("zeta", repr(zeta)),
        ("mean_final_sq_err", repr(float(np.mean(finals)))),
    ]
    return ResultTable(
        ("iter", "run", "sq_err", "zeta"),
        rows,
        _metadata(cfg, time.perf_counter() - t0, extra),
    )


def _tradeoff_run(cfg: ExperimentConfig, item: tuple[int, int]) -> np.ndarray:
    si, r = item
    graph = build_graph(cfg)
    rec = run_and(
        _draw_x0(cfg, graph.node_count, lane=r),
        build_weights(cfg, scale=cfg.weights_scales[si]),
        build_failure(cfg, graph),
        build_noise(cfg),
        cfg.run_iterations,
        RngStream(cfg.seed).substream(1 + r),  # same draws for every scale
        snapshot_stride=0,
        diag_stride=cfg.run_diag_stride,
    )
    return rec.dist_consensus**2 / graph.node_count + rec.sq_err


def cmd_and_tradeoff(cfg: ExperimentConfig) -> ResultTable:
    """Race weight scales on network-averaged squared error (paired draws)."""
    t0 = time.perf_counter()
    scales = cfg.weights_scales
    items = [(si, r) for si in range(len(scales)) for r in range(cfg.run_runs)]
    per_item = _pmap(partial(_tradeoff_run, cfg), items, cfg.workers)
    iters = _record_iters(cfg.run_iterations, cfg.run_diag_stride)
    rows = []
    for si, s in enumerate(scales):
        chunk = per_item[si * cfg.run_runs : (si + 1) * cfg.run_runs]
        mean_curve = np.mean(chunk, axis=0)
        rows.extend((int(it), float(s), float(mean_curve[k])) for k, it in enumerate(iters))
    return ResultTable(
        ("iter", "scale", "avg_sq_err"),
        tuple(rows),
        _metadata(cfg, time.perf_counter() - t0, [("runs_per_scale", str(cfg.run_runs))]),
    )


# --- constant-weight studies -------------------------------------------------


def _require_eps_grid(cfg: ExperimentConfig) -> tuple[float, ...]:
    if not cfg.anc_eps_grid:
        raise ConfigError("anc.eps_grid: sweep grid is empty")
    return cfg.anc_eps_grid


def cmd_anc_optimize(cfg: ExperimentConfig) -> ResultTable:
    """Best constant weight and its averaging-time bound across accuracies."""
    t0 = time.perf_counter()
    lap = build_laplacian(build_graph(cfg))
    rows = []
    for eps in _require_eps_grid(cfg):
        opt = optimize_alpha(lap, eps, cfg.anc_delta, cfg.anc_radius, cfg.anc_phi2_max)
        rows.append((float(eps), opt.alpha_star, opt.t_hat_star))
    extra = [("alpha_bullet", repr(2.0 / (algebraic_connectivity(lap) + spectral_radius(lap))))]
    return ResultTable(
        ("eps", "alpha_star", "That_star"),
        tuple(rows),
        _metadata(cfg, time.perf_counter() - t0, extra),
    )


def cmd_anc_tradeoff(cfg: ExperimentConfig) -> ResultTable:
    """Recommended per-pass iterations and pass counts across noise levels."""
    t0 = time.perf_counter()
    lap = build_laplacian(build_graph(cfg))
    eps_grid = _require_eps_grid(cfg)
    if not cfg.anc_phi2_grid:
        raise ConfigError("anc.phi2_grid: sweep grid is empty")
    rows = []
    for phi2 in cfg.anc_phi2_grid:
        for eps in eps_grid:
            opt = optimize_alpha(lap, eps, cfg.anc_delta, cfg.anc_radius, phi2)
            plan = recommended_iterations(
                opt.gamma2_star, opt.alpha_star, eps, cfg.anc_delta,
                cfg.anc_radius, phi2, lap.n,
            )
            rows.append((float(phi2), float(eps), plan.i_star, plan.p_star))
    return ResultTable(
        ("phi2_max", "eps", "i_star", "p_star"),
        tuple(rows),
        _metadata(cfg, time.perf_counter() - t0),
    )


def _tightness_point(
    cfg: ExperimentConfig, item: tuple[int, float]
) -> tuple[tuple, AveragingTimeReport]:
    ei, eps = item
    graph = build_graph(cfg)
    lap = build_laplacian(graph)
    if cfg.noise_kind != "gaussian":
        raise ConfigError("noise.kind: the tightness study simulates Gaussian noise")
    sigma2 = cfg.anc_phi2_max / graph.max_degree
    failure = build_failure(cfg, graph)
    noise = NoiseModel.gaussian(sigma2)
    if cfg.anc_alpha > 0.0:
        try:
            g2 = gamma2(lap, cfg.anc_alpha)
        except ValueError as exc:
            raise ConfigError(f"anc.alpha: {exc}") from None
        alpha_star = cfg.anc_alpha
        that = approx_averaging_time(
            g2, alpha_star, eps, cfg.anc_delta, cfg.anc_radius, cfg.anc_phi2_max, lap.n
        )
    else:
        opt = optimize_alpha(lap, eps, cfg.anc_delta, cfg.anc_radius, cfg.anc_phi2_max)
        alpha_star, that, g2 = opt.alpha_star, opt.t_hat_star, opt.gamma2_star
    plan = recommended_iterations(
        g2, alpha_star, eps, cfg.anc_delta, cfg.anc_radius, cfg.anc_phi2_max, lap.n
    )
    emp = empirical_averaging_time(
        failure, noise, eps, cfg.anc_delta, cfg.anc_radius, [alpha_star],
        RngStream(cfg.seed).substream((ei + 1) << 48),
        x0_samples=cfg.anc_x0_samples,
        runs_per_x0=cfg.anc_runs_per_x0,
        phi2_max=cfg.anc_phi2_max,
        grid_count=cfg.anc_grid_count,
        grid_factor=cfg.anc_grid_factor,
    )
    best = emp.best
    t_emp = best.t_emp if best is not None else math.nan
    ratio = that / t_emp if best is not None else math.nan
    row = (
        float(eps), float(alpha_star), float(g2), float(that),
        plan.i_star, plan.p_star, float(t_emp), float(ratio),
    )
    report = AveragingTimeReport(
        epsilon=eps, delta=cfg.anc_delta, radius=cfg.anc_radius,
        phi2_max=cfg.anc_phi2_max, node_count=lap.n,
        alpha_bullet=2.0 / (algebraic_connectivity(lap) + spectral_radius(lap)),
        alpha_star=alpha_star, gamma2_star=g2, t_hat_star=that,
        t_hat_at_alpha_bullet=that if cfg.anc_alpha > 0.0 else opt.t_hat_bullet,
        i_star=plan.i_star, p_star=plan.p_star,
        i_star_ceil=plan.i_star_ceil, p_star_ceil=plan.p_star_ceil,
        empirical=emp,
    )
    return row, report


def cmd_anc_tightness(
    cfg: ExperimentConfig, reports: list[AveragingTimeReport] | None = None
) -> ResultTable:
    """Simulated averaging time against the closed-form bound, per accuracy."""
    t0 = time.perf_counter()
    eps_grid = _require_eps_grid(cfg)
    results = _pmap(
        partial(_tightness_point, cfg), list(enumerate(eps_grid)), cfg.workers
    )
    rows = tuple(row for row, _ in results)
    if reports is not None:
        reports.extend(report for _, report in results)
    extra = [
        ("x0_samples", str(cfg.anc_x0_samples)),
        ("runs_per_x0", str(cfg.anc_runs_per_x0)),
        ("estimate_kind", "empirical lower bound (finite initial-state sampling)"),
    ]
    return ResultTable(
        ("eps", "alpha_star", "gamma2", "That_star", "i_star", "p_star", "T_emp", "ratio"),
        rows,
        _metadata(cfg, time.perf_counter() - t0, extra),
    )


def cmd_graph_info(cfg: ExperimentConfig) -> ResultTable:
    """Node/edge counts and the spectral quantities every study leans on."""
    t0 = time.perf_counter()
    graph = build_graph(cfg)
    lap = build_laplacian(graph)
    lam2 = algebraic_connectivity(lap)
    lam_n = spectral_radius(lap)
    row = (
        graph.node_count, graph.edge_count, lam2, lam_n, 2.0 / (lam2 + lam_n),
    )
    return ResultTable(
        ("nodes", "edges", "lam2", "lam_max", "alpha_bullet"),
        (row,),
        _metadata(cfg, time.perf_counter() - t0),
    )


COMMANDS: dict[str, Callable[[ExperimentConfig], ResultTable]] = {
    "and-paths": cmd_and_paths,
    "and-mse": cmd_and_mse,
    "and-tradeoff": cmd_and_tradeoff,
    "anc-optimize": cmd_anc_optimize,
    "anc-tradeoff": cmd_anc_tradeoff,
    "anc-tightness": cmd_anc_tightness,
    "graph-info": cmd_graph_info,
}
