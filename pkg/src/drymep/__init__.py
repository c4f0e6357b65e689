"""Joint optimisation of drying-process sequences and stage parameters by deterministic annealing."""

from .annealer import AnnealSchedule, SolveResult, free_energy, gibbs_weights, inner_minimize, solve
from .config import RunConfig, load_config
from .errors import (
    BelowEquilibrium,
    ConfigError,
    DryMepError,
    InvalidEquilibrium,
    ModelError,
    NonPositiveRate,
    NotConverged,
    NumericalFailure,
    SpaceTooLarge,
    StageError,
)
from .kinetics import KineticsConstants, MoistureState, StageParams, Technology
from .oracle import GridSpec, OracleReport, exhaustive_solve
from .paths import Path, PathDistribution, argmax_weight, enumerate_paths
from .process import DryingModel, ProcessConfig, path_cost

__all__ = [
    "AnnealSchedule", "SolveResult", "free_energy", "gibbs_weights", "inner_minimize", "solve",
    "RunConfig", "load_config",
    "BelowEquilibrium", "ConfigError", "DryMepError", "InvalidEquilibrium", "ModelError",
    "NonPositiveRate", "NotConverged", "NumericalFailure", "SpaceTooLarge", "StageError",
    "KineticsConstants", "MoistureState", "StageParams", "Technology",
    "GridSpec", "OracleReport", "exhaustive_solve",
    "Path", "PathDistribution", "argmax_weight", "enumerate_paths",
    "DryingModel", "ProcessConfig", "path_cost",
]
