from .config_base import ConfigBase
from .radar_core import EMParameters, RadarConfig, RadarCube, TargetDetection
from .errors import RadarMatError
from pydantic import Field

__all__ = [
    "ConfigBase",
    "Field",
    "RadarConfig",
    "RadarCube",
    "TargetDetection",
    "EMParameters",
    "RadarMatError",
]
