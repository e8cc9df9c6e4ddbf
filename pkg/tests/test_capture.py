import random
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from radarmat import RadarConfig, RadarCube
from radarmat.capture import (
    capture_size,
    read_capture,
    read_matrix,
    write_capture,
    write_matrix,
)
from radarmat.errors import CaptureFormatError
from radarmat.fmcw_sim import NoiseSpec, SimTarget, synthesize_cube


class TestCapture(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "frame.bin"
        self.config = RadarConfig(n_channels=2, n_chirps=8)
        cube = synthesize_cube(
            self.config,
            [SimTarget(range=1.0, velocity=0.5, rcs=0.01)],
            NoiseSpec.thermal(self.config, seed=9),
        )
        self.cube = cube.quantized()

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        write_capture(self.path, self.cube)
        restored = read_capture(self.path)
        self.assertEqual(restored.config, self.config)
        self.assertEqual(restored.data.dtype, np.complex64)
        np.testing.assert_array_equal(restored.data, self.cube.data)

    def test_random_configs_round_trip(self):
        rng = random.Random(21)
        np_rng = np.random.default_rng(21)
        for i in range(50):
            n_samples = rng.randint(2, 64)
            slope, fs = rng.uniform(1e12, 1e14), rng.uniform(1e6, 5e7)
            config = RadarConfig(
                f0=rng.uniform(10e9, 80e9),
                slope_S=slope,
                fs=fs,
                n_samples=n_samples,
                bandwidth_B=slope * n_samples / fs,
                n_chirps=rng.randint(1, 16),
                n_channels=rng.randint(1, 8),
                chirp_interval=rng.uniform(10e-6, 1e-3),
                Tn=rng.uniform(50.0, 1000.0),
            )
            shape = (config.n_channels, config.n_chirps, config.n_samples)
            data = (np_rng.standard_normal(shape) + 1j * np_rng.standard_normal(shape)).astype(np.complex64)
            with self.subTest(i=i):
                write_capture(self.path, RadarCube(config, data))
                restored = read_capture(self.path)
                self.assertEqual(restored.config, config)
                np.testing.assert_array_equal(restored.data, data)

    def test_payload_size(self):
        self.assertEqual(capture_size(self.config), 8 * 2 * 8 * 600)
        write_capture(self.path, self.cube)
        self.assertGreater(self.path.stat().st_size, capture_size(self.config))

    def test_bad_magic(self):
        write_capture(self.path, self.cube)
        raw = bytearray(self.path.read_bytes())
        raw[:4] = b"XXXX"
        self.path.write_bytes(bytes(raw))
        with self.assertRaises(CaptureFormatError):
            read_capture(self.path)

    def test_unsupported_version(self):
        write_capture(self.path, self.cube)
        raw = bytearray(self.path.read_bytes())
        raw[4:6] = struct.pack("<H", 7)
        self.path.write_bytes(bytes(raw))
        with self.assertRaisesRegex(CaptureFormatError, "version 7"):
            read_capture(self.path)

    def test_truncated_payload(self):
        write_capture(self.path, self.cube)
        self.path.write_bytes(self.path.read_bytes()[:-8])
        with self.assertRaisesRegex(CaptureFormatError, "expected"):
            read_capture(self.path)

    def test_dims_disagree_with_header(self):
        write_capture(self.path, self.cube)
        raw = bytearray(self.path.read_bytes())
        (header_len,) = struct.unpack_from("<I", raw, 6)
        struct.pack_into("<III", raw, 10 + header_len, 2, 8, 300)
        self.path.write_bytes(bytes(raw))
        with self.assertRaisesRegex(CaptureFormatError, "dims"):
            read_capture(self.path)

    def test_invalid_header(self):
        header = b"n_chirps = many\n"
        self.path.write_bytes(struct.pack("<4sHI", b"RMC1", 1, len(header)) + header + bytes(12))
        with self.assertRaisesRegex(CaptureFormatError, "header"):
            read_capture(self.path)

    def test_empty_file(self):
        self.path.write_bytes(b"")
        with self.assertRaises(CaptureFormatError):
            read_capture(self.path)


class TestMatrix(unittest.TestCase):
    def test_round_trip(self):
        matrix = np.arange(12, dtype=float).reshape(3, 4) / 7
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "rd_map.bin"
            write_matrix(path, matrix)
            self.assertEqual(path.stat().st_size, 12 + 8 * 12)
            np.testing.assert_array_equal(read_matrix(path), matrix)

    def test_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "m.bin"
            with self.assertRaises(ValueError):
                write_matrix(path, np.zeros(3))
            path.write_bytes(b"RMM1" + struct.pack("<II", 2, 2) + bytes(8))
            with self.assertRaises(CaptureFormatError):
                read_matrix(path)
            path.write_bytes(b"nope")
            with self.assertRaises(CaptureFormatError):
                read_matrix(path)


if __name__ == "__main__":
    unittest.main()
