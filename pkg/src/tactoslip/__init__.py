"""Learning-free touch and slip detection for vision-based tactile sensors,
with the closed-loop grasp controller built on it and a simulator to run it."""

from .config import RunConfig, load_config
from .core import (
    ReferenceImage,
    SensorId,
    TactileFrame,
    abs_diff,
    binarize,
    change_image,
    change_ratio,
    channel_mean,
)
from .detector import DetectionConfig, DetectionEvent, DetectionKind, Phase, SensorDetector
from .errors import ArchiveError, ConfigurationError, DataError, TactoslipError, UsageError
from .fsm import ManipulationController, Outcome, RunReport, State, run_to_completion
from .sim import PRESETS, SimObject, SimWorld, simulate

__all__ = [
    "ArchiveError",
    "ConfigurationError",
    "DataError",
    "DetectionConfig",
    "DetectionEvent",
    "DetectionKind",
    "ManipulationController",
    "Outcome",
    "PRESETS",
    "Phase",
    "ReferenceImage",
    "RunConfig",
    "RunReport",
    "SensorDetector",
    "SensorId",
    "SimObject",
    "SimWorld",
    "State",
    "TactileFrame",
    "TactoslipError",
    "UsageError",
    "abs_diff",
    "binarize",
    "change_image",
    "change_ratio",
    "channel_mean",
    "load_config",
    "run_to_completion",
    "simulate",
]
