"""
Shared radar domain types and unit conventions.

Units are SI everywhere inside the package: Hz, m, s, m/s, radians and linear
power ratios. Decibels and degrees only appear at I/O boundaries (records,
console output). Velocity is positive for an approaching target.
"""

import math
from dataclasses import dataclass
from typing import Annotated, Any

import numpy as np
import pydantic
from pydantic import Field
from scipy import constants
from typing_extensions import Self

from .config_base import ConfigBase
from .errors import DomainError, InvalidConfigError, InvalidCubeError


SPEED_OF_LIGHT = constants.c
BOLTZMANN = constants.k

SWEEP_TOLERANCE = 1e-3


class RadarConfig(ConfigBase):
    """FMCW chirp, array and noise parameters of one radar front end."""

    model_config = pydantic.ConfigDict(frozen=True)

    f0: Annotated[float, Field(gt=0, description="Carrier frequency, Hz")] = 60e9
    slope_S: Annotated[
        float, Field(gt=0, description="Chirp modulation slope, Hz/s")
    ] = 66e12
    bandwidth_B: Annotated[
        float, Field(gt=0, description="Swept bandwidth, Hz")
    ] = 3.96e9
    fs: Annotated[float, Field(gt=0, description="ADC sampling rate, Hz")] = 10e6
    n_samples: Annotated[int, Field(ge=2, description="Samples per chirp")] = 600
    n_chirps: Annotated[int, Field(ge=1, description="Chirps per frame")] = 128
    n_channels: Annotated[
        int, Field(ge=1, description="Virtual receive channels (lambda/2 ULA)")
    ] = 8
    chirp_interval: Annotated[
        float, Field(gt=0, description="Chirp repetition interval, s")
    ] = 100e-6
    Pt_Gt_Gr: Annotated[
        float,
        Field(gt=0, description="Transmit power times antenna gains, linear (W)"),
    ] = 10.21
    Tn: Annotated[
        float, Field(gt=0, description="Effective noise temperature, K")
    ] = 290.0
    noise_bandwidth: Annotated[
        float, Field(gt=0, description="Receiver noise bandwidth, Hz")
    ] = 10e6

    @pydantic.model_validator(mode="after")
    def check_sweep_consistency(self) -> Self:
        swept = self.slope_S * self.n_samples / self.fs
        if abs(swept - self.bandwidth_B) > SWEEP_TOLERANCE * self.bandwidth_B:
            raise ValueError(
                f"bandwidth_B={self.bandwidth_B:g} Hz disagrees with "
                f"slope_S*n_samples/fs={swept:g} Hz by more than 0.1%"
            )
        return self


def wavelength(config: RadarConfig) -> float:
    if config.f0 <= 0:
        raise InvalidConfigError(f"carrier frequency must be positive, got {config.f0}")
    return SPEED_OF_LIGHT / config.f0


def db_from_linear(x: float) -> float:
    if not x > 0:
        raise DomainError(f"power ratio must be positive, got {x}")
    return 10.0 * math.log10(x)


def linear_from_db(x: float) -> float:
    return 10.0 ** (x / 10.0)


def range_bin_size(config: RadarConfig) -> float:
    return SPEED_OF_LIGHT / (2.0 * config.bandwidth_B)


def doppler_bin_size(config: RadarConfig) -> float:
    return wavelength(config) / (2.0 * config.n_chirps * config.chirp_interval)


def angle_grid(config: RadarConfig, n_points: int) -> np.ndarray:
    """`n_points` angles on [-pi/2, pi/2], uniformly spaced in sin(theta)."""
    if n_points < 1:
        raise DomainError(f"angle grid needs at least one point, got {n_points}")
    if n_points == 1:
        return np.zeros(1)
    return np.arcsin(np.linspace(-1.0, 1.0, n_points))


def max_unambiguous_range(config: RadarConfig) -> float:
    return config.fs * SPEED_OF_LIGHT / (2.0 * config.slope_S)


def max_unambiguous_velocity(config: RadarConfig) -> float:
    return wavelength(config) / (4.0 * config.chirp_interval)


def noise_power(config: RadarConfig) -> float:
    """Thermal noise power k*Tn*B of the receiver, W."""
    return BOLTZMANN * config.Tn * config.noise_bandwidth


def closed_form_k(config: RadarConfig) -> float:
    """System constant K = Pt*Gt*Gr*lambda^2 / ((4 pi)^3 k Tn B)."""
    lam = wavelength(config)
    return config.Pt_Gt_Gr * lam**2 / ((4.0 * math.pi) ** 3 * noise_power(config))


def steering_vector(n_channels: int, theta: float | np.ndarray) -> np.ndarray:
    """
    Half-wavelength ULA steering vectors exp(j*pi*m*sin(theta)).

    Scalar `theta` gives shape (n_channels,); an array of angles gives
    (len(theta), n_channels).
    """
    m = np.arange(n_channels)
    phase = np.pi * np.multiply.outer(np.sin(theta), m)
    return np.exp(1j * phase)


@dataclass(frozen=True, eq=False)
class RadarCube:
    """Complex baseband samples, shape [n_channels][n_chirps][n_samples]."""

    config: RadarConfig
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.iscomplexobj(data):
            data = data.astype(np.complex128)
        expected = (self.config.n_channels, self.config.n_chirps, self.config.n_samples)
        if data.shape != expected:
            raise InvalidCubeError(f"cube shape {data.shape} does not match config {expected}")
        if not np.all(np.isfinite(data)):
            raise InvalidCubeError("cube contains non-finite samples")
        data = np.array(data, copy=True)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def quantized(self) -> "RadarCube":
        """The cube rounded to the float32 precision of the capture format."""
        return RadarCube(self.config, self.data.astype(np.complex64))


class TargetDetection(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    range_R: Annotated[float, Field(ge=0, description="m")]
    velocity_V: Annotated[float, Field(description="m/s, positive = approaching")]
    angle_theta: Annotated[
        float, Field(ge=-math.pi / 2, le=math.pi / 2, description="rad from boresight")
    ]
    snr_linear: Annotated[float, Field(gt=0)]
    peak_bin: tuple[int, int, int] | None = None
    """(range_bin, doppler_bin, angle_bin) of the peak cell."""

    @property
    def snr_db(self) -> float:
        return db_from_linear(self.snr_linear)


EM_RECORD_FIELDS = (
    "range_m",
    "velocity_mps",
    "angle_deg",
    "snr_db",
    "rcs_m2",
    "rho",
    "gamma_f",
    "epsilon_r",
    "metal_like_flag",
)


class EMParameters(pydantic.BaseModel):
    """The eight radar parameters handed to the material reasoner."""

    model_config = pydantic.ConfigDict(frozen=True)

    detection: TargetDetection
    rcs_sigma: Annotated[float, Field(ge=0, description="m^2")]
    rho: Annotated[float, Field(ge=0, description="per-unit-area reflectivity")]
    gamma_f: Annotated[float, Field(ge=0, le=1)]
    epsilon_r: Annotated[float, Field(ge=1, description="inf when metal-like")]
    metal_like_flag: bool = False
    warnings: tuple[str, ...] = ()

    def to_record(self) -> dict[str, Any]:
        d = self.detection
        return {
            "range_m": d.range_R,
            "velocity_mps": d.velocity_V,
            "angle_deg": math.degrees(d.angle_theta),
            "snr_db": d.snr_db,
            "rcs_m2": self.rcs_sigma,
            "rho": self.rho,
            "gamma_f": self.gamma_f,
            "epsilon_r": self.epsilon_r,
            "metal_like_flag": self.metal_like_flag,
        }

    @classmethod
    def from_record(cls, fields: dict[str, str]) -> Self:
        missing = [name for name in EM_RECORD_FIELDS if name not in fields]
        if missing:
            raise InvalidConfigError(f"EM parameter record lacks {', '.join(missing)}")
        extra = sorted(set(fields) - set(EM_RECORD_FIELDS))
        if extra:
            raise InvalidConfigError(f"unknown EM parameter fields: {', '.join(extra)}")
        try:
            detection = TargetDetection(
                range_R=float(fields["range_m"]),
                velocity_V=float(fields["velocity_mps"]),
                angle_theta=math.radians(float(fields["angle_deg"])),
                snr_linear=linear_from_db(float(fields["snr_db"])),
            )
        except ValueError as e:
            raise InvalidConfigError(f"invalid EM parameter record: {e}") from e
        return cls.model_validate(
            {
                "detection": detection,
                "rcs_sigma": fields["rcs_m2"],
                "rho": fields["rho"],
                "gamma_f": fields["gamma_f"],
                "epsilon_r": fields["epsilon_r"],
                "metal_like_flag": fields["metal_like_flag"],
            }
        )
