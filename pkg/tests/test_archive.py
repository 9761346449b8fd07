import struct

import numpy as np
import pytest

from tactoslip.archive import (
    BAD_MAGIC,
    DIMENSION_OVERFLOW,
    HEADER_SIZE,
    TRAILING_BYTES,
    TRUNCATED_HEADER,
    TRUNCATED_PAYLOAD,
    UNKNOWN_PIXEL_FORMAT,
    ZERO_DIMENSION,
    ArchiveSource,
    FrameArchive,
    PixelFormat,
    read_archive,
    write_archive,
)
from tactoslip.errors import ArchiveError, ConfigurationError, DataError


def small_archive(fmt=PixelFormat.U8RGB, frames=3, sensors=2, h=4, w=4, seed=0):
    rng = np.random.default_rng(seed)
    if fmt is PixelFormat.U8RGB:
        data = rng.integers(0, 256, (frames, sensors, h, w, 3), dtype=np.uint8)
    else:
        data = rng.random((frames, sensors, h, w, 3), dtype=np.float32)
    return FrameArchive(fmt, data)


def test_header_layout():
    raw = small_archive().to_bytes()
    assert raw[:4] == b"TGF1"
    assert struct.unpack("<HHBIB", raw[4:HEADER_SIZE]) == (4, 4, 2, 3, 0)
    assert len(raw) == HEADER_SIZE + 3 * 2 * 4 * 4 * 3


@pytest.mark.parametrize("fmt", list(PixelFormat))
def test_round_trip_file(tmp_path, fmt):
    arch = small_archive(fmt)
    path = tmp_path / "a.tgf"
    write_archive(arch, path)
    back = read_archive(path)
    assert back == arch
    assert np.array_equal(back.data, arch.data)
    assert path.read_bytes() == back.to_bytes()


def test_frames_are_normalized():
    arch = small_archive()
    steps = list(arch.frames())
    assert len(steps) == 3 and [f.sensor_id for f in steps[0]] == [1, 2]
    np.testing.assert_array_equal(steps[1][0].pixels, arch.data[1, 0] / 255.0)
    assert steps[2][1].t == 2


def test_empty_archive():
    arch = FrameArchive(PixelFormat.F32RGB, np.empty((0, 2, 4, 4, 3), np.float32))
    back = FrameArchive.from_bytes(arch.to_bytes())
    assert back.frame_count == 0 and list(back.frames()) == []


def test_truncation_offset():
    arch = small_archive(frames=10)
    raw = arch.to_bytes()
    frame_bytes = 2 * 4 * 4 * 3
    with pytest.raises(ArchiveError) as err:
        FrameArchive.from_bytes(raw[: HEADER_SIZE + 9 * frame_bytes])
    assert err.value.code == TRUNCATED_PAYLOAD
    assert err.value.offset == HEADER_SIZE + 9 * frame_bytes == 14 + 864
    # a partial tenth frame still reports the start of that frame
    with pytest.raises(ArchiveError) as err:
        FrameArchive.from_bytes(raw[: HEADER_SIZE + 9 * frame_bytes + 5])
    assert err.value.offset == 878


def test_write_rejects_oversized_dimensions():
    arch = FrameArchive(PixelFormat.U8RGB, np.zeros((0, 256, 1, 1, 3), np.uint8))
    with pytest.raises(ArchiveError) as err:
        arch.to_bytes()
    assert err.value.code == DIMENSION_OVERFLOW and err.value.offset == 8


def test_out_of_range_float_frames_rejected():
    data = np.full((1, 1, 2, 2, 3), 1.5, np.float32)
    arch = FrameArchive.from_bytes(FrameArchive(PixelFormat.F32RGB, data).to_bytes())
    with pytest.raises(DataError):
        list(arch.frames())


def test_from_frames_u8_scales_floats():
    img = np.full((2, 2, 3), 0.5)
    arch = FrameArchive.from_frames([[img, img]], PixelFormat.U8RGB)
    assert arch.data.dtype == np.uint8 and np.all(arch.data == 128)


def test_replay_source_needs_two_sensors():
    with pytest.raises(ConfigurationError):
        ArchiveSource(small_archive(sensors=1))
    src = ArchiveSource(small_archive(frames=2))
    assert src.read() is not None and src.read() is not None and src.read() is None


def corrupt_cases():
    good = small_archive(frames=2).to_bytes()
    zero_w = bytearray(good)
    zero_w[6:8] = b"\x00\x00"
    bad_fmt = bytearray(good)
    bad_fmt[13] = 7
    return {
        "bad magic": (b"TGF2" + good[4:], BAD_MAGIC, 0),
        "truncated header": (good[:10], TRUNCATED_HEADER, 10),
        "unknown pixel format": (bytes(bad_fmt), UNKNOWN_PIXEL_FORMAT, 13),
        "zero width": (bytes(zero_w), ZERO_DIMENSION, 6),
        "truncated payload": (good[:-1], TRUNCATED_PAYLOAD, HEADER_SIZE + 96),
        "trailing bytes": (good + b"\x00\x01", TRAILING_BYTES, len(good)),
    }


@pytest.mark.parametrize("name", list(corrupt_cases()))
def test_corrupt_archives(name):
    raw, code, offset = corrupt_cases()[name]
    with pytest.raises(ArchiveError) as err:
        FrameArchive.from_bytes(raw)
    assert (err.value.code, err.value.offset) == (code, offset)
