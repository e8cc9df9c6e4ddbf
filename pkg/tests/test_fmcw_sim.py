import math
import unittest
import warnings

import numpy as np
from pydantic import ValidationError

from radarmat import RadarConfig
from radarmat.errors import DomainError, TargetOutOfRangeError
from radarmat.fmcw_sim import (
    NoiseSpec,
    SimTarget,
    SmallSphereWarning,
    sphere_rcs,
    synthesize_cube,
    target_power,
)
from radarmat.radar_core import closed_form_k, noise_power


class TestSphereRcs(unittest.TestCase):
    def test_optical_regime(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            self.assertAlmostEqual(sphere_rcs(0.063), math.pi * 0.0315**2)

    def test_small_sphere_warns(self):
        with self.assertLogs("radarmat.fmcw_sim", level="WARNING"):
            with self.assertWarns(SmallSphereWarning):
                rcs = sphere_rcs(0.02)
        self.assertAlmostEqual(rcs, math.pi * 0.01**2)

    def test_non_positive(self):
        with self.assertRaises(DomainError):
            sphere_rcs(0.0)


class TestTargets(unittest.TestCase):
    def setUp(self):
        self.config = RadarConfig()

    def test_aliasing_rejected(self):
        with self.assertRaises(TargetOutOfRangeError) as ctx:
            synthesize_cube(self.config, [SimTarget(range=30.0, rcs=1.0)])
        self.assertEqual(ctx.exception.field, "range")
        with self.assertRaises(TargetOutOfRangeError) as ctx:
            synthesize_cube(self.config, [SimTarget(range=1.0, velocity=13.0, rcs=1.0)])
        self.assertEqual(ctx.exception.field, "velocity")

    def test_field_bounds(self):
        with self.assertRaises(ValidationError):
            SimTarget(range=1.0, rcs=0.0)
        with self.assertRaises(ValidationError):
            SimTarget(range=1.0, rcs=1.0, angle=math.pi / 2)

    def test_per_sample_snr(self):
        target = SimTarget(range=1.5, rcs=0.01)
        snr = target_power(self.config, target) / noise_power(self.config)
        self.assertAlmostEqual(snr / (closed_form_k(self.config) * 0.01 / 1.5**4), 1.0, places=9)


class TestSynthesis(unittest.TestCase):
    def setUp(self):
        self.config = RadarConfig(n_channels=4, n_chirps=16)

    def test_noiseless_amplitude_and_phase(self):
        target = SimTarget(range=1.0, velocity=1.0, angle=math.radians(30), rcs=0.01)
        cube = synthesize_cube(self.config, [target])
        amplitude = math.sqrt(target_power(self.config, target))
        np.testing.assert_allclose(np.abs(cube.data), amplitude, rtol=1e-9)
        # lambda/2 array: pi*sin(30 deg) between neighbouring channels
        step = np.angle(cube.data[1, 0, 0] / cube.data[0, 0, 0])
        self.assertAlmostEqual(step, math.pi / 2, places=9)

    def test_superposition(self):
        a = SimTarget(range=0.8, rcs=0.01)
        b = SimTarget(range=2.0, velocity=-2.0, angle=0.2, rcs=0.05)
        both = synthesize_cube(self.config, [a, b]).data
        separate = synthesize_cube(self.config, [a]).data + synthesize_cube(self.config, [b]).data
        np.testing.assert_allclose(both, separate, atol=1e-15)

    def test_noise_is_seeded(self):
        noise = NoiseSpec(noise_power=1.0, rng_seed=11)
        first = synthesize_cube(self.config, [], noise).data
        second = synthesize_cube(self.config, [], noise).data
        np.testing.assert_array_equal(first, second)
        other = synthesize_cube(self.config, [], NoiseSpec(noise_power=1.0, rng_seed=12)).data
        self.assertFalse(np.array_equal(first, other))
        self.assertAlmostEqual(np.mean(np.abs(first) ** 2), 1.0, delta=0.05)

    def test_thermal_noise(self):
        spec = NoiseSpec.thermal(self.config, seed=3)
        self.assertEqual(spec.rng_seed, 3)
        self.assertAlmostEqual(spec.noise_power, noise_power(self.config))

    def test_empty_scene_without_noise(self):
        cube = synthesize_cube(self.config, [])
        self.assertFalse(np.any(cube.data))


if __name__ == "__main__":
    unittest.main()
