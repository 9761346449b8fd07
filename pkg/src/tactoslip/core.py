"""Pixel arithmetic behind touch/slip detection.

Every function here is pure: inputs are never modified and the outputs are
fresh arrays.  Colour images are ``(h, w, 3)`` float arrays in [0, 1], gray
images ``(h, w)`` floats in [0, 1] and binary images ``(h, w)`` uint8 arrays
holding only 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError, DataError, UsageError


class SensorId(IntEnum):
    S1 = 1
    S2 = 2


def normalize_pixels(pixels: np.ndarray) -> np.ndarray:
    """Return ``pixels`` as float64 in [0, 1]; uint8 input is divided by 255."""
    arr = np.asarray(pixels)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    arr = arr.astype(np.float64, copy=True)
    check_unit_range(arr, "pixels")
    return arr


def check_unit_range(arr: np.ndarray, what: str) -> None:
    if arr.size == 0:
        return
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what} contain non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise DataError(f"{what} outside [0, 1]: min={lo!r} max={hi!r}")


def _check_rgb(arr: np.ndarray, what: str) -> None:
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ConfigurationError(f"{what} must have shape (h, w, 3), got {arr.shape}")


@dataclass(frozen=True)
class TactileFrame:
    """One normalized RGB image from one sensor at one time step."""

    sensor_id: int
    t: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ConfigurationError(f"time step must be nonnegative, got {self.t}")
        px = normalize_pixels(self.pixels)
        _check_rgb(px, "frame")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass(frozen=True)
class ReferenceImage:
    """Per-sensor average of ``built_from`` frames."""

    sensor_id: int
    pixels: np.ndarray = field(repr=False)
    built_from: int = 1

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        _check_rgb(px, "reference")
        check_unit_range(px, "reference pixels")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        if self.built_from < 1:
            raise ConfigurationError("reference must be built from at least one frame")


def abs_diff(frame: TactileFrame, ref: ReferenceImage) -> np.ndarray:
    """Per-channel absolute difference between a frame and its reference."""
    if frame.sensor_id != ref.sensor_id:
        raise UsageError(
            f"frame from sensor {frame.sensor_id} compared with reference of sensor {ref.sensor_id}"
        )
    if frame.pixels.shape != ref.pixels.shape:
        raise ConfigurationError(
            f"frame shape {frame.pixels.shape} != reference shape {ref.pixels.shape}"
        )
    out = np.abs(frame.pixels - ref.pixels)
    check_unit_range(out, "difference image")
    return out


def channel_mean(diff: np.ndarray) -> np.ndarray:
    """Collapse an ``(h, w, 3)`` image to gray by averaging the channels."""
    diff = np.asarray(diff, dtype=np.float64)
    _check_rgb(diff, "difference image")
    return (diff[:, :, 0] + diff[:, :, 1] + diff[:, :, 2]) / 3.0


def binarize(gray: np.ndarray, tau_n: float) -> np.ndarray:
    """Zero where ``gray < tau_n``, one elsewhere (ties map to one)."""
    if not 0.0 <= tau_n <= 1.0:
        raise ConfigurationError(f"noise threshold must lie in [0, 1], got {tau_n}")
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ConfigurationError(f"gray image must be 2-D, got shape {gray.shape}")
    return (gray >= tau_n).astype(np.uint8)


def change_image(prev: np.ndarray, curr: np.ndarray) -> np.ndarray:
    """Element-wise product of two consecutive binary difference images."""
    if prev.shape != curr.shape:
        raise ConfigurationError(f"binary image shapes differ: {prev.shape} vs {curr.shape}")
    return (prev * curr).astype(np.uint8)


def change_ratio(c: np.ndarray) -> float:
    """Fraction of ones in a binary image."""
    h, w = c.shape
    return int(np.count_nonzero(c)) / (w * h)


def binary_difference(frame: TactileFrame, ref: ReferenceImage, tau_n: float) -> np.ndarray:
    """Difference, channel average and noise binarization in one call."""
    return binarize(channel_mean(abs_diff(frame, ref)), tau_n)
