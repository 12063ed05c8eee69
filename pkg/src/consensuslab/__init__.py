"""consensuslab: distributed averaging over unreliable, noisy networks.

Two estimators of the initial network average, plus the analysis and
experiment tooling around them:

- decaying-weight iteration (``run_and``): one long run whose shrinking
  weights average out link noise; converges to an unbiased random consensus
  value with an exactly computable steady-state error.
- constant-weight repeated averaging (``run_anc``): many short passes at a
  fixed weight, averaged per sensor; comes with a closed-form averaging-time
  bound, a weight optimizer, and an empirical averaging-time search.

Supporting layers: undirected graphs with a built-in symmetric eigensolver
(``spectral``), link-failure and channel-noise models (``models``), counter
based random streams for reproducible parallelism (``streams``), and the
experiment harness behind the ``consensuslab`` CLI (``experiments``).
"""

from ._version import __version__
from .config import ExperimentConfig, canonical_text, config_hash, load_config
from .decaying import (
    TrajectoryRecord,
    WeightSequence,
    and_step,
    cr3_compliant_from,
    erasure_mse_exact,
    mean_convergence_bound,
    mse_bound,
    run_and,
    scale_weights_for_mse,
)
from .errors import (
    ConfigError,
    ConsensusLabError,
    DisconnectedGraphError,
    DivergenceError,
    EigensolverError,
    GraphGenerationError,
    UnsupportedModelError,
)
from .experiments import ResultTable, read_table
from .models import (
    LinkFailureModel,
    NoiseModel,
    mean_laplacian,
    noise_statistics,
    sample_laplacian,
    sample_noise,
)
from .repeated import (
    AncConfig,
    AveragingTimeReport,
    EmpiricalPoint,
    EmpiricalResult,
    IterationPlan,
    OptimizeResult,
    alpha_bullet,
    alpha_upper,
    approx_averaging_time,
    build_report,
    chernoff_pass_count,
    clopper_pearson_lower,
    empirical_averaging_time,
    error_moment_bounds,
    gamma2,
    min_certifiable_runs,
    optimize_alpha,
    recommended_iterations,
    run_anc,
    run_anc_pass,
    run_anc_passes,
)
from .spectral import (
    Graph,
    Laplacian,
    algebraic_connectivity,
    build_laplacian,
    complete_graph,
    cycle_graph,
    distance_to_consensus,
    eigenvalues,
    generate_erdos_renyi,
    generate_random_regular,
    is_connected,
    jacobi_eigh,
    path_graph,
    read_edge_list,
    spectral_radius,
    write_edge_list,
)
from .streams import RngStream

__all__ = [
    "__version__",
    "AncConfig",
    "AveragingTimeReport",
    "ConfigError",
    "ConsensusLabError",
    "DisconnectedGraphError",
    "DivergenceError",
    "EigensolverError",
    "EmpiricalPoint",
    "EmpiricalResult",
    "ExperimentConfig",
    "Graph",
    "GraphGenerationError",
    "IterationPlan",
    "Laplacian",
    "LinkFailureModel",
    "NoiseModel",
    "OptimizeResult",
    "ResultTable",
    "RngStream",
    "TrajectoryRecord",
    "UnsupportedModelError",
    "WeightSequence",
    "algebraic_connectivity",
    "alpha_bullet",
    "alpha_upper",
    "and_step",
    "approx_averaging_time",
    "build_laplacian",
    "build_report",
    "canonical_text",
    "chernoff_pass_count",
    "clopper_pearson_lower",
    "complete_graph",
    "config_hash",
    "cr3_compliant_from",
    "cycle_graph",
    "distance_to_consensus",
    "eigenvalues",
    "empirical_averaging_time",
    "erasure_mse_exact",
    "error_moment_bounds",
    "gamma2",
    "generate_erdos_renyi",
    "generate_random_regular",
    "is_connected",
    "jacobi_eigh",
    "load_config",
    "mean_convergence_bound",
    "mean_laplacian",
    "min_certifiable_runs",
    "mse_bound",
    "noise_statistics",
    "optimize_alpha",
    "path_graph",
    "read_edge_list",
    "read_table",
    "recommended_iterations",
    "run_and",
    "run_anc",
    "run_anc_pass",
    "run_anc_passes",
    "sample_laplacian",
    "sample_noise",
    "scale_weights_for_mse",
    "spectral_radius",
    "write_edge_list",
]
