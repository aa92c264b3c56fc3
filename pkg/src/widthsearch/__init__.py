"""widthsearch: latency-constrained channel width search for chain networks.

Fit a pairwise-decomposable latency model from whole-network measurements,
estimate per-channel error statistics, and select per-layer channel counts by
exact chain decoding under a Lagrangian-relaxed latency constraint, with an
optional adaptive sampling loop that concentrates evaluation on the
constraint-feasible region.
"""

__version__ = "0.1.0"

from .adaptive import AowsResult, AowsRunConfig, run_aows, uniform_config
from .errors import (
    ComputationError,
    CoverageError,
    EnumerationCapError,
    FileFormatError,
    FitConvergenceError,
    InputError,
    TargetUnreachableError,
    UndefinedDeltaError,
    WidthSearchError,
)
from .greedy import GreedyResult, GreedyStep, greedy_trim
from .latency import (
    BenchmarkSample,
    FitOptions,
    FitResult,
    LatencyTable,
    LinearSystem,
    assemble,
    fit,
    fit_with_validation,
    flops_table,
    load_samples,
    load_table,
    plan_next,
    predict,
    predict_batch,
    record_visit,
    save_samples,
    save_table,
    zero_counts,
)
from .sim import SyntheticDevice, SyntheticLoss, load_scenario
from .smoothing import (
    AnnealSchedule,
    MarginalSet,
    default_schedule,
    forward_backward,
    load_schedule,
    sample,
    temperature_at,
)
from .space import (
    Config,
    LayerParams,
    SearchSpace,
    enumerate_configs,
    flops,
    layer_flops,
    load_space,
    mobilenet_v1_space,
    save_space,
    validate,
)
from .stats import ErrorStats, load_stats, save_stats
from .viterbi import (
    ChainEnergy,
    SearchResult,
    chain_energy,
    decode,
    default_gamma_max,
    lagrangian_search,
    min_latency,
)

__all__ = [
    "AnnealSchedule",
    "AowsResult",
    "AowsRunConfig",
    "BenchmarkSample",
    "ChainEnergy",
    "ComputationError",
    "Config",
    "CoverageError",
    "EnumerationCapError",
    "ErrorStats",
    "FileFormatError",
    "FitConvergenceError",
    "FitOptions",
    "FitResult",
    "GreedyResult",
    "GreedyStep",
    "InputError",
    "LatencyTable",
    "LayerParams",
    "LinearSystem",
    "MarginalSet",
    "SearchResult",
    "SearchSpace",
    "SyntheticDevice",
    "SyntheticLoss",
    "TargetUnreachableError",
    "UndefinedDeltaError",
    "WidthSearchError",
    "assemble",
    "chain_energy",
    "decode",
    "default_gamma_max",
    "default_schedule",
    "enumerate_configs",
    "fit",
    "fit_with_validation",
    "flops",
    "flops_table",
    "greedy_trim",
    "lagrangian_search",
    "layer_flops",
    "load_samples",
    "load_scenario",
    "load_schedule",
    "load_space",
    "load_stats",
    "load_table",
    "min_latency",
    "mobilenet_v1_space",
    "plan_next",
    "predict",
    "predict_batch",
    "record_visit",
    "run_aows",
    "sample",
    "save_samples",
    "save_space",
    "save_stats",
    "save_table",
    "temperature_at",
    "uniform_config",
    "validate",
    "zero_counts",
]
