"""
FMCW baseband synthesis for point targets.

Targets follow the stop-and-hop model: range is constant within a frame, the
Doppler phase advances from chirp to chirp and each channel of the lambda/2
uniform linear array sees the plane-wave phase pi*m*sin(theta). Amplitudes come
from the radar equation, so the per-sample SNR of a target equals K*sigma/R^4.
"""

import logging
import math
import warnings
from typing import Annotated, Sequence

import numpy as np
import pydantic
from pydantic import Field
from typing_extensions import Self

from .config_base import ConfigBase
from .errors import DomainError, TargetOutOfRangeError
from .radar_core import (
    SPEED_OF_LIGHT,
    RadarConfig,
    RadarCube,
    max_unambiguous_range,
    max_unambiguous_velocity,
    noise_power,
    wavelength,
)


logger = logging.getLogger(__name__)

OPTICAL_REGIME_RATIO = 10.0


class SmallSphereWarning(UserWarning):
    """The calibration sphere is too small for the optical-regime RCS formula."""


class SimTarget(ConfigBase):
    model_config = pydantic.ConfigDict(frozen=True)

    range: Annotated[float, Field(gt=0, description="Distance to the radar, m")]
    velocity: Annotated[
        float, Field(description="Radial velocity, m/s (positive = approaching)")
    ] = 0.0
    angle: Annotated[
        float,
        Field(gt=-math.pi / 2, lt=math.pi / 2, description="Azimuth from boresight, rad"),
    ] = 0.0
    rcs: Annotated[float, Field(gt=0, description="Radar cross section, m^2")]
    label: str = ""

    def check_against(self, config: RadarConfig) -> Self:
        r_max = max_unambiguous_range(config)
        if self.range >= r_max:
            raise TargetOutOfRangeError(
                "range",
                f"{self.range} m is beyond the unambiguous range {r_max:.3f} m"
                + (f" ({self.label})" if self.label else ""),
            )
        v_max = max_unambiguous_velocity(config)
        if abs(self.velocity) >= v_max:
            raise TargetOutOfRangeError(
                "velocity",
                f"|{self.velocity}| m/s exceeds the unambiguous velocity {v_max:.3f} m/s"
                + (f" ({self.label})" if self.label else ""),
            )
        return self


class NoiseSpec(ConfigBase):
    model_config = pydantic.ConfigDict(frozen=True)

    noise_power: Annotated[
        float, Field(ge=0, description="Complex noise power per sample, W")
    ] = 0.0
    rng_seed: Annotated[int, Field(ge=0, lt=2**64)] = 0

    @classmethod
    def thermal(cls, config: RadarConfig, seed: int = 0) -> Self:
        return cls(noise_power=noise_power(config), rng_seed=seed)


def sphere_rcs(diameter: float, wavelength_m: float | None = None) -> float:
    """
    Optical-regime RCS of a conducting sphere: its cross-sectional area.

    Emits `SmallSphereWarning` when the diameter is less than ten wavelengths.
    """
    if not diameter > 0:
        raise DomainError(f"sphere diameter must be positive, got {diameter}")
    if wavelength_m is None:
        wavelength_m = wavelength(RadarConfig())
    ratio = diameter / wavelength_m
    if ratio < OPTICAL_REGIME_RATIO:
        message = (
            f"sphere diameter is {ratio:.1f} wavelengths (< {OPTICAL_REGIME_RATIO:g}); "
            "the optical-regime RCS is inaccurate"
        )
        logger.warning(message)
        warnings.warn(message, SmallSphereWarning, stacklevel=2)
    return math.pi * (diameter / 2.0) ** 2


def target_power(config: RadarConfig, target: SimTarget) -> float:
    """Received echo power of `target` from the radar equation, W."""
    lam = wavelength(config)
    return (
        config.Pt_Gt_Gr
        * lam**2
        * target.rcs
        / ((4.0 * math.pi) ** 3 * target.range**4)
    )


def synthesize_cube(
    config: RadarConfig,
    targets: Sequence[SimTarget],
    noise: NoiseSpec | None = None,
) -> RadarCube:
    noise = noise or NoiseSpec()
    lam = wavelength(config)
    shape = (config.n_channels, config.n_chirps, config.n_samples)

    m = np.arange(config.n_channels)
    n = np.arange(config.n_chirps)
    k = np.arange(config.n_samples)

    data = np.zeros(shape, dtype=np.complex128)
    for target in targets:
        target.check_against(config)
        amplitude = math.sqrt(target_power(config, target))
        beat_frequency = 2.0 * target.range * config.slope_S / SPEED_OF_LIGHT
        fast = np.exp(2j * np.pi * beat_frequency * k / config.fs)
        slow = np.exp(4j * np.pi * target.velocity * config.chirp_interval * n / lam)
        spatial = np.exp(1j * np.pi * math.sin(target.angle) * m)
        data += amplitude * (
            spatial[:, None, None] * slow[None, :, None] * fast[None, None, :]
        )
        logger.debug(
            "target %r: R=%.4f m V=%.3f m/s theta=%.2f deg rcs=%.3e m^2 f_b=%.1f Hz",
            target.label,
            target.range,
            target.velocity,
            math.degrees(target.angle),
            target.rcs,
            beat_frequency,
        )

    if noise.noise_power > 0:
        rng = np.random.default_rng(noise.rng_seed)
        std = math.sqrt(noise.noise_power / 2.0)
        data += std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    return RadarCube(config, data)
