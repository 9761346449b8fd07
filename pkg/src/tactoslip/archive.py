"""TGF1 frame archive codec.

Layout (little-endian)::

    offset  size  field
    0       4     magic b"TGF1"
    4       2     h             u16
    6       2     w             u16
    8       1     sensor_count  u8
    9       4     frame_count   u32
    13      1     pixel_format  u8   (0 = u8rgb, 1 = f32rgb)
    14      ...   payload: for each time step, for each sensor, h*w*3 samples row-major

The payload must be exactly ``frame_count * sensor_count * h * w * 3 *
bytes_per_sample`` bytes long.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

from .core import TactileFrame
from .errors import ArchiveError, ConfigurationError

MAGIC = b"TGF1"
HEADER = struct.Struct("<4sHHBIB")
HEADER_SIZE = HEADER.size  # 14

# error codes
BAD_MAGIC = "BAD_MAGIC"
TRUNCATED_HEADER = "TRUNCATED_HEADER"
UNKNOWN_PIXEL_FORMAT = "UNKNOWN_PIXEL_FORMAT"
ZERO_DIMENSION = "ZERO_DIMENSION"
TRUNCATED_PAYLOAD = "TRUNCATED_PAYLOAD"
TRAILING_BYTES = "TRAILING_BYTES"
DIMENSION_OVERFLOW = "DIMENSION_OVERFLOW"


class PixelFormat(IntEnum):
    U8RGB = 0
    F32RGB = 1

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.uint8) if self is PixelFormat.U8RGB else np.dtype("<f4")

    @property
    def bytes_per_sample(self) -> int:
        return self.dtype.itemsize


@dataclass(eq=False)
class FrameArchive:
    """Frames as a ``(frame_count, sensor_count, h, w, 3)`` array."""

    pixel_format: PixelFormat
    data: np.ndarray

    def __post_init__(self) -> None:
        self.pixel_format = PixelFormat(self.pixel_format)
        self.data = np.ascontiguousarray(self.data, dtype=self.pixel_format.dtype)
        if self.data.ndim != 5 or self.data.shape[4] != 3:
            raise ValueError(f"archive data must be (T, S, h, w, 3), got {self.data.shape}")

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]

    @property
    def sensor_count(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameArchive):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    @classmethod
    def from_frames(
        cls, steps: Sequence[Sequence[np.ndarray | TactileFrame]], pixel_format: PixelFormat
    ) -> "FrameArchive":
        """Pack per-step sequences of images; floats are scaled by 255 for u8rgb."""
        arrays = [[f.pixels if isinstance(f, TactileFrame) else np.asarray(f) for f in step] for step in steps]
        if not arrays:
            raise ValueError("use FrameArchive(fmt, np.empty((0, S, h, w, 3))) for empty archives")
        data = np.asarray(arrays)
        if pixel_format is PixelFormat.U8RGB and data.dtype != np.uint8:
            data = np.rint(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)
        return cls(pixel_format, data)

    def frames(self) -> Iterator[tuple[TactileFrame, ...]]:
        """Yield one tuple of normalized frames (sensor ids 1..S) per time step."""
        for t in range(self.frame_count):
            yield tuple(TactileFrame(s + 1, t, self.data[t, s]) for s in range(self.sensor_count))

    def to_bytes(self) -> bytes:
        fields = {"h": (self.h, 0xFFFF, 4), "w": (self.w, 0xFFFF, 6),
                  "sensor_count": (self.sensor_count, 0xFF, 8),
                  "frame_count": (self.frame_count, 0xFFFFFFFF, 9)}
        for name, (value, limit, offset) in fields.items():
            if value > limit:
                raise ArchiveError(DIMENSION_OVERFLOW, offset, f"{name}={value} exceeds {limit}")
        header = HEADER.pack(MAGIC, self.h, self.w, self.sensor_count, self.frame_count, int(self.pixel_format))
        return header + self.data.tobytes(order="C")

    @classmethod
    def from_bytes(cls, buf: bytes) -> "FrameArchive":
        if len(buf) < HEADER_SIZE:
            if buf[:4] != MAGIC[: len(buf[:4])]:
                raise ArchiveError(BAD_MAGIC, 0, f"expected {MAGIC!r}, found {bytes(buf[:4])!r}")
            raise ArchiveError(TRUNCATED_HEADER, len(buf), f"header needs {HEADER_SIZE} bytes, file has {len(buf)}")
        magic, h, w, sensors, count, fmt = HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise ArchiveError(BAD_MAGIC, 0, f"expected {MAGIC!r}, found {magic!r}")
        for name, value, offset in (("h", h, 4), ("w", w, 6), ("sensor_count", sensors, 8)):
            if value == 0:
                raise ArchiveError(ZERO_DIMENSION, offset, f"{name} is zero")
        try:
            pixel_format = PixelFormat(fmt)
        except ValueError:
            raise ArchiveError(UNKNOWN_PIXEL_FORMAT, 13, f"pixel format code {fmt}") from None
        frame_bytes = sensors * h * w * 3 * pixel_format.bytes_per_sample
        expected = HEADER_SIZE + count * frame_bytes
        if len(buf) < expected:
            complete = (len(buf) - HEADER_SIZE) // frame_bytes
            raise ArchiveError(
                TRUNCATED_PAYLOAD,
                HEADER_SIZE + complete * frame_bytes,
                f"header declares {count} frames, payload holds {complete} complete",
            )
        if len(buf) > expected:
            raise ArchiveError(TRAILING_BYTES, expected, f"{len(buf) - expected} bytes after payload")
        data = np.frombuffer(buf, dtype=pixel_format.dtype, offset=HEADER_SIZE)
        return cls(pixel_format, data.reshape(count, sensors, h, w, 3).copy())


def read_archive(path: str | os.PathLike[str]) -> FrameArchive:
    with open(path, "rb") as fh:
        return FrameArchive.from_bytes(fh.read())


def write_archive(archive: FrameArchive, path: str | os.PathLike[str]) -> None:
    payload = archive.to_bytes()
    with open(path, "wb") as fh:
        fh.write(payload)


class ArchiveSource:
    """Frame source replaying a two-sensor archive step by step."""

    def __init__(self, archive: FrameArchive):
        if archive.sensor_count != 2:
            raise ConfigurationError(f"replay needs exactly 2 sensors, archive has {archive.sensor_count}")
        self._frames = archive.frames()

    def read(self) -> tuple[TactileFrame, TactileFrame] | None:
        step = next(self._frames, None)
        return None if step is None else (step[0], step[1])
