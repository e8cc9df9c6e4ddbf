class RadarMatError(Exception):
    """Base class of every error raised by radarmat."""


class InvalidConfigError(RadarMatError, ValueError):
    pass


class DomainError(RadarMatError, ValueError):
    """An argument lies outside the domain of a physical formula."""


class InvalidCubeError(RadarMatError, ValueError):
    pass


class TargetOutOfRangeError(RadarMatError, ValueError):
    """A simulated target would alias in range or velocity."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedOperationError(RadarMatError):
    pass


class AmbiguousDoAError(RadarMatError):
    pass


class DegenerateGeometryError(RadarMatError, ValueError):
    pass


class MissingCalibrationError(RadarMatError):
    pass


class FresnelBranchError(RadarMatError, ValueError):
    pass


class SingularReflectionError(RadarMatError, ValueError):
    """Gamma_f >= 1: a perfect conductor has no finite permittivity."""


class InversionFailureError(RadarMatError):
    pass


class EstimationError(RadarMatError):
    """Wraps a failure of one stage of the EM parameter chain."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class UnembeddableError(RadarMatError, ValueError):
    pass


class EmptyIndexError(RadarMatError):
    pass


class EmbedderMismatchError(RadarMatError):
    pass


class IndexFormatError(RadarMatError):
    pass


class EndpointUnreachableError(RadarMatError):
    pass


class EndpointError(RadarMatError):
    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"endpoint returned HTTP {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt


class CaptureFormatError(RadarMatError):
    pass


class CalibrationAmbiguityError(RadarMatError):
    pass


class NoTargetDetectedError(RadarMatError):
    pass
