from .config import ConfigError, ExperimentConfig, parse_config, parse_config_file
from .experiments import (
    HarnessError,
    RunArtifacts,
    build_datasets,
    emit_rank_strip,
    run_base,
    run_dominance,
    run_ldt,
    run_perturbation,
    run_proxy_matrix,
    select_lowest_density,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "parse_config", "parse_config_file",
    "HarnessError", "RunArtifacts", "build_datasets", "emit_rank_strip",
    "run_base", "run_dominance", "run_ldt", "run_perturbation",
    "run_proxy_matrix", "select_lowest_density",
]
