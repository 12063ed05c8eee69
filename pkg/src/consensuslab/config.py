"""Declarative experiment configuration: INI files, defaults, canonical hash.

A config file is a standard INI document with the sections below; any key can
be omitted (per-study defaults fill the gaps) or overridden from the command
line.  The *canonical text* renders every effective key as ``section.key =
value`` in sorted order with normalized number formatting; its SHA-256 digest
is the config hash embedded in every emitted table, so a table can always be
traced back to (and re-run from) the exact configuration that produced it.

Sections and keys::

    [experiment] seed, out, workers
    [graph]      kind (erdos_renyi|random_regular|path|cycle|complete|edge_list),
                 nodes, edges, degree, seed, path
    [failure]    kind (static|erasure), p
    [noise]      kind (none|gaussian|uniform), variance, half_width
    [weights]    scale, exponent, offset, scales (comma pair for the
                 two-scale comparison study)
    [run]        iterations, runs, diag_stride, snapshot_stride, x0_low, x0_high
    [anc]        alpha (optional), radius, delta, phi2_max, eps_grid,
                 phi2_grid, x0_samples, runs_per_x0, grid_count, grid_factor

Grids are either comma lists (``0.05,0.1,0.2``) or ranges written
``lin:start:stop:count`` / ``log:start:stop:count``.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigError

EXPERIMENTS = (
    "and-paths",
    "and-mse",
    "and-tradeoff",
    "anc-optimize",
    "anc-tradeoff",
    "anc-tightness",
    "graph-info",
)

_GRAPH_KINDS = ("erdos_renyi", "random_regular", "path", "cycle", "complete", "edge_list")
_FAILURE_KINDS = ("static", "erasure")
_NOISE_KINDS = ("none", "gaussian", "uniform")


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective (defaults + file + overrides) settings for one experiment."""

    experiment: str
    seed: int = 12345
    out: str = "results"
    workers: int = 1

    graph_kind: str = "erdos_renyi"
    graph_nodes: int = 100
    graph_edges: int = 500
    graph_degree: int = 6
    graph_seed: int = 7
    graph_path: str = ""

    failure_kind: str = "erasure"
    failure_p: float = 0.4

    noise_kind: str = "gaussian"
    noise_variance: float = 30.0
    noise_half_width: float = 1.0

    weights_scale: float = 0.2
    weights_exponent: float = 1.0
    weights_offset: float = 1.0
    weights_scales: tuple[float, ...] = (0.33, 0.1)

    run_iterations: int = 10_000
    run_runs: int = 50
    run_diag_stride: int = 10
    run_snapshot_stride: int = 100
    run_x0_low: float = -3.0
    run_x0_high: float = 3.0

    anc_alpha: float = 0.0  # 0 means "optimize"
    anc_radius: float = 50.0
    anc_delta: float = 0.05
    anc_phi2_max: float = 100.0
    anc_eps_grid: tuple[float, ...] = ()
    anc_phi2_grid: tuple[float, ...] = (10.0, 30.0, 100.0)
    anc_x0_samples: int = 10
    anc_runs_per_x0: int = 100
    anc_grid_count: int = 25
    anc_grid_factor: float = 3.0


# Field name <-> (section, key) mapping is mechanical: section_key.
def _section_key(field_name: str) -> tuple[str, str]:
    if field_name in ("experiment", "seed", "out", "workers"):
        return "experiment", field_name
    section, _, key = field_name.partition("_")
    return section, key


_PER_STUDY_DEFAULTS: dict[str, dict[str, object]] = {
    # One long noisy-consensus run; every sensor path recorded.
    "and-paths": dict(
        noise_variance=15.0, weights_scale=0.25, run_runs=1,
    ),
    # Repeated runs against the closed-form steady-state squared error.
    "and-mse": dict(
        noise_variance=30.0, weights_scale=0.2, run_runs=50, run_snapshot_stride=0,
    ),
    # Two weight scales raced on network-averaged squared error.  The wide
    # initial spread keeps the early decay of the large-scale curve visible
    # above the noise floor, which is the regime the crossing lives in.
    "and-tradeoff": dict(
        noise_variance=50.0, run_runs=50, run_snapshot_stride=0,
        run_x0_low=-18.0, run_x0_high=18.0,
    ),
    # Analytic weight optimization on the regular benchmark graph.
    "anc-optimize": dict(
        graph_kind="random_regular", graph_nodes=230, graph_degree=6, graph_seed=3,
        failure_kind="static", noise_kind="none",
        anc_phi2_max=100.0,
        anc_eps_grid=tuple(np.geomspace(0.02, 0.5, 10).tolist()),
    ),
    # Iterations-vs-passes split across noise levels.
    "anc-tradeoff": dict(
        graph_kind="random_regular", graph_nodes=230, graph_degree=6, graph_seed=3,
        failure_kind="static", noise_kind="none",
        anc_eps_grid=tuple(np.geomspace(0.02, 0.5, 10).tolist()),
        anc_phi2_grid=(10.0, 30.0, 100.0),
    ),
    # Simulated averaging time vs the closed-form bound.
    "anc-tightness": dict(
        failure_kind="static", noise_kind="gaussian",
        anc_phi2_max=80.0, anc_eps_grid=(0.05, 0.1, 0.2, 0.4),
    ),
    "graph-info": dict(),
}


def _parse_grid(text: str, where: str) -> tuple[float, ...]:
    text = text.strip()
    try:
        if text.startswith(("lin:", "log:")):
            kind, start, stop, count = text.split(":")
            start_f, stop_f, count_i = float(start), float(stop), int(count)
            if count_i < 1:
                raise ValueError("count must be >= 1")
            pts = (
                np.linspace(start_f, stop_f, count_i)
                if kind == "lin"
                else np.geomspace(start_f, stop_f, count_i)
            )
            return tuple(float(p) for p in pts)
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(
            f"{where}: cannot parse grid {text!r} "
            f"(use a comma list or lin:start:stop:count / log:start:stop:count): {exc}"
        ) from None


def _convert(field_type: type, raw: str, where: str):
    try:
        if field_type is int:
            return int(raw)
        if field_type is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: expected {field_type.__name__}, got {raw!r}") from None


def load_config(
    experiment: str,
    path: str | None = None,
    overrides: dict[str, str] | None = None,
) -> ExperimentConfig:
    """Assemble the effective config: study defaults <- file <- overrides.

    ``overrides`` maps ``section.key`` to raw string values (CLI layer).
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}"
        )
    values: dict[str, object] = dict(_PER_STUDY_DEFAULTS.get(experiment, {}))
    values["experiment"] = experiment

    raw: dict[str, str] = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from None
        for section in parser.sections():
            for key, val in parser.items(section):
                raw[f"{section}.{key}"] = val
    for dotted, val in (overrides or {}).items():
        raw[dotted.lower()] = val

    known = {f"{_section_key(f.name)[0]}.{_section_key(f.name)[1]}": f for f in fields(ExperimentConfig)}
    for dotted, val in raw.items():
        f = known.get(dotted)
        if f is None:
            raise ConfigError(
                f"unknown config key {dotted!r}; known keys: "
                + ", ".join(sorted(known))
            )
        if f.name in ("anc_eps_grid", "anc_phi2_grid", "weights_scales"):
            values[f.name] = _parse_grid(val, dotted)
        else:
            # Annotations are strings under `from __future__ import annotations`.
            typ = {"int": int, "float": float}.get(str(f.type), str)
            values[f.name] = _convert(typ, val, dotted)

    cfg = ExperimentConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """Reject out-of-range settings with messages naming the offending key."""
    def bad(key: str, msg: str):
        raise ConfigError(f"{key}: {msg}")

    if cfg.workers < 1:
        bad("experiment.workers", f"must be >= 1, got {cfg.workers}")
    if not (0 <= cfg.seed < 2**64):
        bad("experiment.seed", f"must be a u64, got {cfg.seed}")
    if cfg.graph_kind not in _GRAPH_KINDS:
        bad("graph.kind", f"must be one of {', '.join(_GRAPH_KINDS)}, got {cfg.graph_kind!r}")
    if cfg.graph_kind == "edge_list" and not cfg.graph_path:
        bad("graph.path", "edge_list graphs need a file path")
    if cfg.graph_nodes < 1:
        bad("graph.nodes", f"must be >= 1, got {cfg.graph_nodes}")
    if cfg.failure_kind not in _FAILURE_KINDS:
        bad("failure.kind", f"must be one of {', '.join(_FAILURE_KINDS)}, got {cfg.failure_kind!r}")
    if not (0.0 <= cfg.failure_p <= 1.0):
        bad("failure.p", f"failure probability must lie in [0, 1], got {cfg.failure_p}")
    if cfg.noise_kind not in _NOISE_KINDS:
        bad("noise.kind", f"must be one of {', '.join(_NOISE_KINDS)}, got {cfg.noise_kind!r}")
    if cfg.noise_variance < 0.0:
        bad("noise.variance", f"must be >= 0, got {cfg.noise_variance}")
    if cfg.noise_half_width < 0.0:
        bad("noise.half_width", f"must be >= 0, got {cfg.noise_half_width}")
    if cfg.weights_scale <= 0.0:
        bad("weights.scale", f"must be > 0, got {cfg.weights_scale}")
    if not (0.5 < cfg.weights_exponent <= 1.0):
        bad(
            "weights.exponent",
            f"must lie in (0.5, 1] so the weights decay but keep infinite mass, "
            f"got {cfg.weights_exponent}",
        )
    if cfg.weights_offset < 1.0:
        bad("weights.offset", f"must be >= 1, got {cfg.weights_offset}")
    if any(s <= 0 for s in cfg.weights_scales) or not cfg.weights_scales:
        bad("weights.scales", f"need positive scales, got {cfg.weights_scales}")
    if cfg.run_iterations < 1:
        bad("run.iterations", f"must be >= 1, got {cfg.run_iterations}")
    if cfg.run_runs < 1:
        bad("run.runs", f"must be >= 1, got {cfg.run_runs}")
    if cfg.run_diag_stride < 1:
        bad("run.diag_stride", f"must be >= 1, got {cfg.run_diag_stride}")
    if cfg.run_snapshot_stride < 0:
        bad("run.snapshot_stride", f"must be >= 0, got {cfg.run_snapshot_stride}")
    if not cfg.run_x0_low < cfg.run_x0_high:
        bad("run.x0_low", f"need x0_low < x0_high, got [{cfg.run_x0_low}, {cfg.run_x0_high}]")
    if cfg.anc_alpha < 0.0:
        bad("anc.alpha", f"must be >= 0 (0 selects the optimizer), got {cfg.anc_alpha}")
    if cfg.anc_radius <= 0.0:
        bad("anc.radius", f"must be > 0, got {cfg.anc_radius}")
    if not (0.0 < cfg.anc_delta < 1.0):
        bad("anc.delta", f"must lie in (0, 1), got {cfg.anc_delta}")
    if cfg.anc_phi2_max < 0.0:
        bad("anc.phi2_max", f"must be >= 0, got {cfg.anc_phi2_max}")
    for name, grid in (("anc.eps_grid", cfg.anc_eps_grid), ("anc.phi2_grid", cfg.anc_phi2_grid)):
        if name == "anc.eps_grid":
            if any(not (0.0 < e < 1.0) for e in grid):
                bad(name, f"accuracies must lie in (0, 1), got {grid}")
        elif any(p < 0 for p in grid):
            bad(name, f"noise levels must be >= 0, got {grid}")
    if cfg.anc_x0_samples < 1:
        bad("anc.x0_samples", f"must be >= 1, got {cfg.anc_x0_samples}")
    if cfg.anc_runs_per_x0 < 30:
        bad("anc.runs_per_x0", f"must be >= 30, got {cfg.anc_runs_per_x0}")
    if cfg.anc_grid_count < 2:
        bad("anc.grid_count", f"must be >= 2, got {cfg.anc_grid_count}")
    if cfg.anc_grid_factor < 1.0:
        bad("anc.grid_factor", f"must be >= 1, got {cfg.anc_grid_factor}")


def _render(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_text(cfg: ExperimentConfig) -> str:
    """Every result-determining key, one per line, sorted — the hashed form.

    Delivery knobs that cannot change row content (output directory, worker
    count) are excluded, so the hash identifies the science, not the plumbing.
    """
    lines = []
    for f in sorted(fields(cfg), key=lambda f: _section_key(f.name)):
        if f.name in ("out", "workers"):
            continue
        section, key = _section_key(f.name)
        lines.append(f"{section}.{key} = {_render(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_text(cfg).encode()).hexdigest()


def with_updates(cfg: ExperimentConfig, **updates) -> ExperimentConfig:
    out = replace(cfg, **updates)
    validate_config(out)
    return out
