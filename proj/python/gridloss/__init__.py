"""Loss-minimizing DG placement and dispatch on radial feeders.

Thin wrapper over the compiled core. The study workflow mirrors the CLI:
load a config, then run the base case, the placement stage, the reactive
dispatch stage, or the load study.
"""

from ._core import (
    ConfigError,
    SolveError,
    StudyConfig,
    VerifyError,
    load_config,
    run_base,
    run_load_study,
    run_stage1,
    run_stage2,
    sweep,
)

__all__ = [
    "ConfigError",
    "SolveError",
    "StudyConfig",
    "VerifyError",
    "load_config",
    "run_base",
    "run_load_study",
    "run_stage1",
    "run_stage2",
    "sweep",
]
