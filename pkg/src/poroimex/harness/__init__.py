"""Experiment harness: configuration, seeded fields, studies, CLI."""

from .config import (
    ExperimentConfig,
    build_experiment,
    default_config_dict,
    initial_pressure,
    load_config,
)
from .fields import (
    CONSTRUCTIONS,
    HeterogeneityGenSpec,
    SplitMix64Stream,
    generate_fields,
    stream_uniforms,
)
from .studies import (
    CSV_HEADER,
    ResultRow,
    SolverStudyResult,
    TimeStudyResult,
    emit,
    rows_from_json,
    rows_to_csv,
    run_solver_study,
    run_time_scheme_study,
)

__all__ = [
    "ExperimentConfig",
    "build_experiment",
    "default_config_dict",
    "initial_pressure",
    "load_config",
    "CONSTRUCTIONS",
    "HeterogeneityGenSpec",
    "SplitMix64Stream",
    "generate_fields",
    "stream_uniforms",
    "CSV_HEADER",
    "ResultRow",
    "SolverStudyResult",
    "TimeStudyResult",
    "emit",
    "rows_from_json",
    "rows_to_csv",
    "run_solver_study",
    "run_time_scheme_study",
]
