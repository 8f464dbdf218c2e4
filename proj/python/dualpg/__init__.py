"""Dual pose-graph localization backend for gate-based drone racing."""

from ._core import (
    Config,
    ConfigError,
    DegenerateError,
    DualGraphManager,
    InputError,
    Pose,
    SimRun,
    ablate,
    align_se3,
    ate,
    hungarian,
    percentile,
    relative,
    rotational_distance,
    run,
    simulate,
    translational_distance,
)

__all__ = [
    "Config",
    "ConfigError",
    "DegenerateError",
    "DualGraphManager",
    "InputError",
    "Pose",
    "SimRun",
    "ablate",
    "align_se3",
    "ate",
    "hungarian",
    "percentile",
    "relative",
    "rotational_distance",
    "run",
    "simulate",
    "translational_distance",
]
