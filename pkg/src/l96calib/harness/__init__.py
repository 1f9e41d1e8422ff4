"""Experiment harness: configuration, seeding, manifests, CLI commands."""

from .config import ConfigError, ExperimentConfig, build_config
from .manifest import RunManifest
from .seeding import Seeder, derive_rng, derive_seed
from .commands import (
    COMMANDS,
    build_fast_target,
    build_full_target,
    cmd_eki,
    cmd_fast,
    cmd_mcmc,
    cmd_scan,
    cmd_simulate,
    cmd_validate,
    run_eki_grid,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "build_config", "RunManifest",
    "Seeder", "derive_rng", "derive_seed", "COMMANDS", "build_fast_target",
    "build_full_target", "cmd_eki", "cmd_fast", "cmd_mcmc", "cmd_scan",
    "cmd_simulate", "cmd_validate", "run_eki_grid",
]
