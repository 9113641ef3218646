"""Hierarchical visual localization: synthetic data, tracking, alignment, evaluation."""

from ._hiloc import (
    HilocError,
    ate,
    check_jacobians,
    load_tum,
    localize,
    project,
    rpe,
    run_cli,
    se3_exp,
    se3_log,
    synthesize,
)

__all__ = [
    "HilocError",
    "ate",
    "check_jacobians",
    "load_tum",
    "localize",
    "project",
    "rpe",
    "run_cli",
    "se3_exp",
    "se3_log",
    "synthesize",
]
