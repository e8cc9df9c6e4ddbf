"""
Scene descriptions: target lists for `radarmat simulate` and the simulated
material suite behind `radarmat report`.
"""

import math
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal

import pydantic
from pydantic import Field

from . import records
from .config_base import ConfigBase
from .em_estimator import fresnel_forward, prca_area
from .errors import InvalidConfigError
from .fmcw_sim import SimTarget
from .radar_core import RadarConfig, TargetDetection
from .yaml_utils import is_yaml_path


ExpectedClass = Literal["metal", "ceramic", "glass", "plastic", "other"]

SEVEN_OBJECTS = "seven_objects.yaml"
CALIBRATION_SPHERE = "calibration_sphere.yaml"


class Scenario(ConfigBase):
    """Point targets of one simulated frame."""

    targets: list[SimTarget]

    @classmethod
    def load(cls, path: Path | str) -> "Scenario":
        """YAML with a `targets` list, or `key = value` blocks of one target each."""
        if is_yaml_path(path):
            return cls.load_from_yaml(path)
        blocks = records.parse_records(Path(path).read_text(encoding="utf-8"))
        if not blocks:
            raise InvalidConfigError(f"{path}: scenario has no targets")
        return cls.model_validate({"targets": blocks})


class SimulatedObject(ConfigBase):
    """
    A planar object described either by its permittivity or as a perfect
    reflector; its RCS is derived from the reflection cell it fills.
    """

    _mutually_exclusive_sets = [{"epsilon_r", "perfect_reflector"}]

    label: str
    material: ExpectedClass
    range: Annotated[float, Field(gt=0, description="m")]
    angle_deg: Annotated[float, Field(gt=-90, lt=90)] = 0.0
    velocity: float = 0.0
    epsilon_r: Annotated[float | None, Field(ge=1)] = None
    perfect_reflector: bool = False
    glint: Annotated[
        float,
        Field(ge=1, description="Reflectivity of a perfect reflector relative to rho_ref"),
    ] = 1.5

    @property
    def angle(self) -> float:
        return math.radians(self.angle_deg)

    def reflectivity(self) -> float:
        """Per-unit-area reflectivity relative to `rho_ref`."""
        if self.perfect_reflector:
            return self.glint
        return fresnel_forward(self.epsilon_r, self.angle) ** 2

    def to_sim_target(self, config: RadarConfig, rho_ref: float = 1.0) -> SimTarget:
        cell = prca_area(
            TargetDetection(
                range_R=self.range, velocity_V=self.velocity, angle_theta=self.angle, snr_linear=1.0
            ),
            config,
        )
        return SimTarget(
            range=self.range,
            velocity=self.velocity,
            angle=self.angle,
            rcs=self.reflectivity() * rho_ref * cell.area_Ar,
            label=self.label,
        )


class CalibrationScene(ConfigBase):
    sphere_diameter: Annotated[float, Field(gt=0, description="m")] = 0.063
    range: Annotated[float, Field(gt=0, description="m")] = 1.0
    angle_deg: Annotated[float, Field(gt=-90, lt=90)] = 0.0

    def to_sim_target(self) -> SimTarget:
        return SimTarget(
            range=self.range,
            angle=math.radians(self.angle_deg),
            rcs=math.pi * (self.sphere_diameter / 2.0) ** 2,
            label=f"sphere {self.sphere_diameter * 1000:g} mm",
        )


class Suite(ConfigBase):
    """Calibration sphere plus the objects to identify."""

    calibration: CalibrationScene = CalibrationScene()
    objects: Annotated[list[SimulatedObject], Field(min_length=1)]

    @pydantic.model_validator(mode="after")
    def check_unique_labels(self) -> "Suite":
        labels = [o.label for o in self.objects]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"duplicate object labels: {', '.join(duplicates)}")
        return self


def packaged_scenario(name: str) -> Path:
    return Path(str(resources.files("radarmat") / "scenarios" / name))


def default_suite() -> Suite:
    return Suite.load_from_yaml(packaged_scenario(SEVEN_OBJECTS))
