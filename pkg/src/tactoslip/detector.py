"""Per-sensor change detector: noise calibration, reference averaging,
consecutive-frame change detection and touch/slip classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from . import core
from .core import ReferenceImage, TactileFrame
from .errors import ConfigurationError, UsageError

#: Lower bound for a calibrated noise threshold (one 8-bit quantization step).
TAU_N_FLOOR = 1.0 / 255.0


class Phase(Enum):
    CALIBRATING = "Calibrating"
    BUILDING_REFERENCE = "BuildingReference"
    ARMED = "Armed"


class DetectionKind(Enum):
    TOUCH = "Touch"
    SLIP = "Slip"


@dataclass(frozen=True)
class DetectionConfig:
    tau_d_ini: float = 0.01
    K: int = 100
    N: int = 10

    def __post_init__(self) -> None:
        if not 0.0 < self.tau_d_ini <= 1.0:
            raise ConfigurationError(f"tau_d_ini must lie in (0, 1], got {self.tau_d_ini}")
        if self.K < 1 or self.N < 1:
            raise ConfigurationError(f"K and N must be >= 1, got K={self.K} N={self.N}")


@dataclass(frozen=True)
class NoiseCalibration:
    sensor_id: int
    tau_n: float
    sample_count: int
    maxima: tuple[float, ...] = ()


@dataclass(frozen=True)
class DetectionEvent:
    sensor_id: int
    t: int
    kind: DetectionKind
    ratio: float
    threshold: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "sensor_id": int(self.sensor_id),
            "t": self.t,
            "kind": self.kind.value,
            "ratio": self.ratio,
            "threshold": self.threshold,
        }


def noise_threshold_from_maxima(maxima: list[float] | tuple[float, ...]) -> float:
    """Mean of per-frame maxima, floored at one 8-bit step."""
    if not maxima:
        raise ConfigurationError("at least one calibration maximum is required")
    tau = sum(maxima) / len(maxima)
    return max(tau, TAU_N_FLOOR)


class SensorDetector:
    """Stateful detector for one tactile sensor.

    Phases run Calibrating -> BuildingReference -> Armed.  A detector created
    with a known ``tau_n`` skips calibration.  The first change seen while
    armed is a touch; after :meth:`rearm_as_slip` changes are slips.
    """

    def __init__(
        self,
        sensor_id: int,
        config: DetectionConfig | None = None,
        tau_n: float | None = None,
    ):
        self.sensor_id = sensor_id
        self.config = config or DetectionConfig()
        self.detection_kind = DetectionKind.TOUCH
        self.reference: ReferenceImage | None = None
        self.prev_binary: np.ndarray | None = None
        self.frames_accumulated = 0
        self.shape: tuple[int, int] | None = None
        self.calibration: NoiseCalibration | None = None
        self._calib_ref: ReferenceImage | None = None
        self._maxima: list[float] = []
        self._sum: np.ndarray | None = None
        if tau_n is None:
            self.tau_n: float | None = None
            self.phase = Phase.CALIBRATING
        else:
            if not 0.0 <= tau_n <= 1.0:
                raise ConfigurationError(f"noise threshold must lie in [0, 1], got {tau_n}")
            self.tau_n = float(tau_n)
            self.phase = Phase.BUILDING_REFERENCE

    def _accept(self, frame: TactileFrame) -> None:
        if frame.sensor_id != self.sensor_id:
            raise UsageError(f"detector for sensor {self.sensor_id} got a frame from {frame.sensor_id}")
        if self.shape is None:
            self.shape = frame.shape
        elif frame.shape != self.shape:
            raise ConfigurationError(f"frame shape {frame.shape} != session shape {self.shape}")

    def _require(self, phase: Phase) -> None:
        if self.phase is not phase:
            raise UsageError(f"sensor {self.sensor_id}: expected phase {phase.value}, in {self.phase.value}")

    def calibrate_step(self, frame: TactileFrame) -> NoiseCalibration | None:
        """Consume one contact-free frame; return the calibration once K maxima exist.

        The first frame becomes the calibration reference, so K + 1 frames
        are needed in total.
        """
        self._require(Phase.CALIBRATING)
        self._accept(frame)
        if self._calib_ref is None:
            self._calib_ref = ReferenceImage(self.sensor_id, frame.pixels)
            return None
        gray = core.channel_mean(core.abs_diff(frame, self._calib_ref))
        self._maxima.append(float(gray.max()))
        self.frames_accumulated = len(self._maxima)
        if len(self._maxima) < self.config.K:
            return None
        self.tau_n = noise_threshold_from_maxima(self._maxima)
        self.calibration = NoiseCalibration(
            self.sensor_id, self.tau_n, len(self._maxima), tuple(self._maxima)
        )
        self._calib_ref = None
        self._maxima = []
        self.frames_accumulated = 0
        self.phase = Phase.BUILDING_REFERENCE
        return self.calibration

    def build_reference_step(self, frame: TactileFrame) -> ReferenceImage | None:
        """Accumulate one frame; after N frames the averaged reference is armed."""
        self._require(Phase.BUILDING_REFERENCE)
        self._accept(frame)
        if self._sum is None:
            self._sum = np.zeros_like(frame.pixels)
        self._sum += frame.pixels
        self.frames_accumulated += 1
        if self.frames_accumulated < self.config.N:
            return None
        self.reference = ReferenceImage(
            self.sensor_id, self._sum / self.frames_accumulated, self.frames_accumulated
        )
        self._sum = None
        self.frames_accumulated = 0
        self.prev_binary = None
        self.phase = Phase.ARMED
        return self.reference

    def detect_step(self, frame: TactileFrame, tau_d: float) -> DetectionEvent | None:
        """Binarize against the reference and test the consecutive-frame change ratio.

        Thresholds above 1 are accepted and simply never fire.
        """
        self._require(Phase.ARMED)
        if not tau_d > 0.0 or math.isnan(tau_d):
            raise ConfigurationError(f"detection threshold must be positive, got {tau_d}")
        self._accept(frame)
        assert self.reference is not None and self.tau_n is not None
        curr = core.binary_difference(frame, self.reference, self.tau_n)
        prev, self.prev_binary = self.prev_binary, curr
        if prev is None:
            return None
        ratio = core.change_ratio(core.change_image(prev, curr))
        if ratio >= tau_d:
            return DetectionEvent(self.sensor_id, frame.t, self.detection_kind, ratio, tau_d)
        return None

    def rearm_as_slip(self) -> None:
        """Switch to slip detection and start collecting a holding reference."""
        if self.tau_n is None:
            raise UsageError(f"sensor {self.sensor_id} has no noise threshold yet")
        self.detection_kind = DetectionKind.SLIP
        self.phase = Phase.BUILDING_REFERENCE
        self.frames_accumulated = 0
        self._sum = None
        self.prev_binary = None
