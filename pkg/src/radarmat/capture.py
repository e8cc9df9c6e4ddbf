"""
Binary file formats: raw radar captures and exported float matrices.

Capture layout (little-endian):

    b"RMC1" | u16 version | u32 header_len | header_len bytes of UTF-8
    `key = value` RadarConfig record | u32 n_channels, n_chirps, n_samples |
    float32 (re, im) pairs in [channel][chirp][sample] order

Matrix layout: b"RMM1" | u32 rows | u32 cols | float64 row-major.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from . import records
from .errors import CaptureFormatError, InvalidConfigError
from .radar_core import RadarConfig, RadarCube


logger = logging.getLogger(__name__)

CAPTURE_MAGIC = b"RMC1"
CAPTURE_VERSION = 1
MATRIX_MAGIC = b"RMM1"

_PREAMBLE = struct.Struct("<4sHI")
_DIMS = struct.Struct("<III")


def capture_size(config: RadarConfig) -> int:
    """Payload size in bytes of a capture recorded with `config`."""
    return 2 * 4 * config.n_channels * config.n_chirps * config.n_samples


def write_capture(path: Path | str, cube: RadarCube) -> None:
    header = records.format_record(cube.config.to_record()).encode("utf-8")
    payload = np.empty(cube.shape + (2,), dtype="<f4")
    payload[..., 0] = cube.data.real
    payload[..., 1] = cube.data.imag

    with open(path, "wb") as f:
        f.write(_PREAMBLE.pack(CAPTURE_MAGIC, CAPTURE_VERSION, len(header)))
        f.write(header)
        f.write(_DIMS.pack(*cube.shape))
        f.write(payload.tobytes())
    logger.debug("wrote %s (%d payload bytes)", path, payload.nbytes)


def read_capture(path: Path | str) -> RadarCube:
    raw = Path(path).read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise CaptureFormatError(f"{path}: truncated capture header")
    magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if magic != CAPTURE_MAGIC:
        raise CaptureFormatError(f"{path}: not a radar capture (magic {magic!r})")
    if version != CAPTURE_VERSION:
        raise CaptureFormatError(f"{path}: unsupported capture version {version}")

    offset = _PREAMBLE.size
    if len(raw) < offset + header_len + _DIMS.size:
        raise CaptureFormatError(f"{path}: truncated capture header")
    try:
        header = raw[offset : offset + header_len].decode("utf-8")
        config = RadarConfig.from_record(records.parse_record(header))
    except (UnicodeDecodeError, InvalidConfigError, ValueError) as e:
        raise CaptureFormatError(f"{path}: invalid configuration header: {e}") from e
    offset += header_len

    dims = _DIMS.unpack_from(raw, offset)
    offset += _DIMS.size
    expected = (config.n_channels, config.n_chirps, config.n_samples)
    if dims != expected:
        raise CaptureFormatError(f"{path}: dims {dims} disagree with the header config {expected}")

    payload = raw[offset:]
    if len(payload) != capture_size(config):
        raise CaptureFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {capture_size(config)}"
        )
    pairs = np.frombuffer(payload, dtype="<f4").reshape(dims + (2,))
    data = np.empty(dims, dtype=np.complex64)
    data.real = pairs[..., 0]
    data.imag = pairs[..., 1]
    return RadarCube(config, data)


def write_matrix(path: Path | str, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    with open(path, "wb") as f:
        f.write(MATRIX_MAGIC)
        f.write(struct.pack("<II", *matrix.shape))
        f.write(np.ascontiguousarray(matrix).tobytes())


def read_matrix(path: Path | str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MATRIX_MAGIC:
        raise CaptureFormatError(f"{path}: not a matrix file")
    rows, cols = struct.unpack_from("<II", raw, 4)
    body = raw[12:]
    if len(body) != 8 * rows * cols:
        raise CaptureFormatError(f"{path}: expected {rows}x{cols} float64 values")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy()
