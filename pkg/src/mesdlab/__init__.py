"""Workbench for a qubit contextuality test via minimum-error state discrimination.

Simulates a prepare-measure experiment under configurable noise, fits an
operational (GPT) model to the counts, enforces operational equivalence on
secondary preparations, and evaluates the violation of the noncontextual
success-probability bound with bootstrap uncertainties.
"""

from .core import (
    BlochVector,
    GridPoint,
    MeasLabel,
    PrepLabel,
    born_probability,
    default_grid,
    ideal_probability_table,
    measurement_effect,
    noncontextual_bound,
    prepare_state,
    quantum_bound,
    rotation_matrix,
    theory_params,
)
from .errors import (
    BootstrapError,
    ConfigError,
    ConstraintError,
    ConstraintWarning,
    ConvergenceError,
    IllConditionedError,
    InfeasibleError,
    RankDeficiencyWarning,
    SingularTransformError,
)
from .sim import CountTable, NoiseConfig, calibrate_detection, run_experiment, simulate_point
from .tomo import FrequencyMatrix, GptModel, build_frequency_matrix, fit_primary
from .equiv import (
    EquivalenceReport,
    SecondarySolution,
    average_mixture_weight,
    solve_secondary,
    verify_equivalence,
)
from .analysis import (
    BootstrapResult,
    ExtractedParams,
    GridReport,
    PointEstimate,
    bootstrap_pipeline,
    contextual_advantage,
    extract_parameters,
    grid_fidelity,
    grid_report,
    pipeline_once,
    process_point,
    violation_verdict,
)
from .io import FORMAT_VERSION, RunConfig, load_config, load_counts, save_counts

__version__ = "0.1.0"

__all__ = [
    "BlochVector",
    "GridPoint",
    "MeasLabel",
    "PrepLabel",
    "born_probability",
    "default_grid",
    "ideal_probability_table",
    "measurement_effect",
    "noncontextual_bound",
    "prepare_state",
    "quantum_bound",
    "rotation_matrix",
    "theory_params",
    "BootstrapError",
    "ConfigError",
    "ConstraintError",
    "ConstraintWarning",
    "ConvergenceError",
    "IllConditionedError",
    "InfeasibleError",
    "RankDeficiencyWarning",
    "SingularTransformError",
    "CountTable",
    "NoiseConfig",
    "calibrate_detection",
    "run_experiment",
    "simulate_point",
    "FrequencyMatrix",
    "GptModel",
    "build_frequency_matrix",
    "fit_primary",
    "EquivalenceReport",
    "SecondarySolution",
    "average_mixture_weight",
    "solve_secondary",
    "verify_equivalence",
    "BootstrapResult",
    "ExtractedParams",
    "GridReport",
    "PointEstimate",
    "bootstrap_pipeline",
    "contextual_advantage",
    "extract_parameters",
    "grid_fidelity",
    "grid_report",
    "pipeline_once",
    "process_point",
    "violation_verdict",
    "FORMAT_VERSION",
    "RunConfig",
    "load_config",
    "load_counts",
    "save_counts",
    "__version__",
]
