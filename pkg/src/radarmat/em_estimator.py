"""
Electromagnetic parameter estimation for a detected target.

The chain runs SNR -> RCS (through the sphere-calibrated system constant K) ->
per-unit-area reflectivity over the peak reflection cell area -> Fresnel
reflection coefficient for vertical polarization -> real relative
permittivity.
"""

import logging
import math
from datetime import datetime, timezone
from typing import Annotated, NamedTuple

import pydantic
from pydantic import Field

from .config_base import ConfigBase
from .dsp_pipeline import beam_pattern
from .errors import (
    DegenerateGeometryError,
    DomainError,
    EstimationError,
    FresnelBranchError,
    InversionFailureError,
    MissingCalibrationError,
    RadarMatError,
    SingularReflectionError,
)
from .fmcw_sim import sphere_rcs
from .radar_core import (
    EMParameters,
    RadarConfig,
    TargetDetection,
    range_bin_size,
)


logger = logging.getLogger(__name__)

CLAMP_TOLERANCE = 1e-9
INVERSION_TOLERANCE = 1e-6
HIGH_GAMMA = 0.98


class Calibration(ConfigBase):
    """System constant K of the radar equation and the perfect-reflector reflectivity."""

    model_config = pydantic.ConfigDict(frozen=True)

    K: Annotated[float, Field(gt=0, description="SNR * R^4 / sigma, m^2")]
    rho_ref: Annotated[
        float, Field(gt=0, description="Per-unit-area reflectivity of a perfect reflector")
    ] = 1.0
    source: Annotated[str, Field(description="Provenance of the calibration")] = ""


class PRCA(pydantic.BaseModel):
    """Peak reflection cell: one range bin deep, one half-power beam wide."""

    model_config = pydantic.ConfigDict(frozen=True)

    range_extent: Annotated[float, Field(ge=0, description="m")]
    cross_range_extent: Annotated[float, Field(ge=0, description="m")]

    @pydantic.computed_field
    @property
    def area_Ar(self) -> float:
        return self.range_extent * self.cross_range_extent


class GammaEstimate(NamedTuple):
    gamma_f: float
    clamped: bool


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


def calibrate(
    snr: float,
    range_R: float,
    sphere_diameter: float,
    *,
    wavelength_m: float | None = None,
) -> Calibration:
    """K from a metal sphere of known diameter measured at `range_R`."""
    _require_positive(snr=snr, range_R=range_R, sphere_diameter=sphere_diameter)
    sigma_c = sphere_rcs(sphere_diameter, wavelength_m)
    K = snr * range_R**4 / sigma_c
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    logger.info("calibrated K=%.6g from a %.4g m sphere at %.4g m", K, sphere_diameter, range_R)
    return Calibration(
        K=K,
        source=f"sphere d={sphere_diameter:g} m at R={range_R:g} m, {stamp}",
    )


def rcs_from_snr(snr: float, range_R: float, cal: Calibration | None) -> float:
    if cal is None:
        raise MissingCalibrationError("no calibration available; run `radarmat calibrate` first")
    _require_positive(snr=snr, range_R=range_R)
    return snr * (range_R**4 / cal.K)


def prca_area(
    detection: TargetDetection,
    config: RadarConfig,
    hpbw: float | None = None,
) -> PRCA:
    """
    The peak reflection cell of `detection`.

    `hpbw` defaults to the half-power width of the array steered to the
    detection angle.
    """
    if detection.range_R <= 0:
        raise DegenerateGeometryError("a target at zero range has no reflection cell")
    if hpbw is None:
        hpbw = beam_pattern(config, detection.angle_theta).hpbw
    return PRCA(
        range_extent=range_bin_size(config),
        cross_range_extent=detection.range_R * hpbw,
    )


def power_reflection(sigma: float, prca: PRCA | float) -> float:
    area = prca.area_Ar if isinstance(prca, PRCA) else float(prca)
    if not area > 0:
        raise DegenerateGeometryError(f"reflection cell area must be positive, got {area}")
    if sigma < 0:
        raise DomainError(f"RCS must be non-negative, got {sigma}")
    return sigma / area


def gamma_from_rho(rho: float, cal: Calibration) -> GammaEstimate:
    if rho < 0:
        raise DomainError(f"reflectivity must be non-negative, got {rho}")
    ratio = rho / cal.rho_ref
    clamped = ratio >= 1.0 - CLAMP_TOLERANCE
    if clamped:
        logger.debug("reflectivity ratio %.4g clamped to 1", ratio)
    return GammaEstimate(math.sqrt(min(max(ratio, 0.0), 1.0)), clamped)


def fresnel_forward(epsilon_r: float, theta: float) -> float:
    """
    Vertical-polarization Fresnel reflection coefficient of a planar interface.

    The value is signed: it crosses zero at Brewster's angle.
    """
    if epsilon_r < 1:
        raise DomainError(f"relative permittivity must be >= 1, got {epsilon_r}")
    if abs(theta) >= math.pi / 2:
        raise DomainError(f"incidence angle must satisfy |theta| < pi/2, got {theta}")
    radicand = epsilon_r - math.sin(theta) ** 2
    if radicand < 0:
        raise FresnelBranchError(f"epsilon_r={epsilon_r} < sin^2(theta) has no real branch")
    a = epsilon_r * math.cos(theta)
    b = math.sqrt(radicand)
    return (a - b) / (a + b)


def _boresight_permittivity(gamma_f: float) -> float:
    return ((1.0 + gamma_f) / (1.0 - gamma_f)) ** 2


def _fresnel_roots(gamma: float, theta: float) -> list[tuple[float, float]]:
    """Permittivities >= 1 whose signed coefficient at `theta` is `gamma`, with residuals."""
    g_plus, g_minus = gamma + 1.0, gamma - 1.0
    discriminant = 1.0 - (math.sin(2.0 * theta) * g_minus / g_plus) ** 2
    if discriminant < 0:
        return []
    root = math.sqrt(discriminant)
    scale = g_plus**2 / (2.0 * math.cos(theta) ** 2 * g_minus**2)

    roots = []
    for candidate in (scale * (1.0 + root), scale * (1.0 - root)):
        if candidate < 1.0 - 1e-12:
            continue
        candidate = max(candidate, 1.0)
        residual = abs(fresnel_forward(candidate, theta) - gamma)
        if residual < INVERSION_TOLERANCE:
            roots.append((candidate, residual))
    return sorted(roots, key=lambda r: r[1])


def brewster_alternatives(gamma_f: float, theta: float) -> list[float]:
    """
    Permittivities that reflect with magnitude `gamma_f` from beyond their
    Brewster angle, where the coefficient is negative.

    A non-empty result means `permittivity_from_gamma` picked one of several
    materials consistent with the measured magnitude.
    """
    if gamma_f <= 0 or theta == 0:
        return []
    return sorted(eps for eps, _ in _fresnel_roots(-gamma_f, abs(theta)))


def permittivity_from_gamma(gamma_f: float, theta: float) -> float:
    """
    Invert the vertical-polarization Fresnel equation for real permittivity.

    Squaring the equation admits a spurious root; both roots of the quadratic
    are tried and the one reproducing `gamma_f` is returned. The non-negative
    branch is assumed; see `brewster_alternatives` for incidence past Brewster.
    """
    if gamma_f >= 1:
        raise SingularReflectionError(
            f"gamma_f={gamma_f} describes a perfect conductor with no finite permittivity"
        )
    if gamma_f < 0:
        raise DomainError(f"gamma_f must be non-negative, got {gamma_f}")
    if abs(theta) >= math.pi / 2:
        raise DomainError(f"incidence angle must satisfy |theta| < pi/2, got {theta}")
    if gamma_f >= HIGH_GAMMA:
        logger.warning("gamma_f=%.4f is close to 1; the permittivity is poorly conditioned", gamma_f)

    if theta == 0:
        return _boresight_permittivity(gamma_f)

    roots = _fresnel_roots(gamma_f, theta)
    if not roots:
        raise InversionFailureError(
            f"no permittivity branch reproduces gamma_f={gamma_f} at theta={theta}"
        )
    epsilon_r = roots[0][0]
    alternatives = brewster_alternatives(gamma_f, theta)
    if alternatives:
        logger.warning(
            "gamma_f=%.4f at %.1f deg is also reached past Brewster by epsilon_r=%s; returning %.4g",
            gamma_f,
            math.degrees(theta),
            ", ".join(f"{eps:.4g}" for eps in alternatives),
            epsilon_r,
        )
    return epsilon_r


def calibrate_reference(
    cal: Calibration,
    detection: TargetDetection,
    config: RadarConfig,
    hpbw: float | None = None,
) -> Calibration:
    """Set `rho_ref` from a measurement of a perfect reflector (e.g. a flat metal plate)."""
    sigma = rcs_from_snr(detection.snr_linear, detection.range_R, cal)
    rho = power_reflection(sigma, prca_area(detection, config, hpbw))
    logger.info("reference reflectivity rho_ref=%.6g", rho)
    return cal.model_copy(
        update={"rho_ref": rho, "source": f"{cal.source}; reference at R={detection.range_R:.3f} m"}
    )


def estimate_em_parameters(
    detection: TargetDetection,
    cal: Calibration | None,
    config: RadarConfig,
    hpbw: float | None = None,
) -> EMParameters:
    if cal is None:
        raise MissingCalibrationError("no calibration available; run `radarmat calibrate` first")

    stage = "rcs"
    try:
        sigma = rcs_from_snr(detection.snr_linear, detection.range_R, cal)
        stage = "prca"
        prca = prca_area(detection, config, hpbw)
        stage = "reflectivity"
        rho = power_reflection(sigma, prca)
        stage = "fresnel"
        gamma_f, clamped = gamma_from_rho(rho, cal)

        warnings: list[str] = []
        if clamped:
            warnings.append(
                f"reflectivity ratio {rho / cal.rho_ref:.3f} clamped to 1: metal-like"
            )
            logger.info("metal-like target at R=%.3f m (rho=%.4g)", detection.range_R, rho)
            return EMParameters(
                detection=detection,
                rcs_sigma=sigma,
                rho=rho,
                gamma_f=1.0,
                epsilon_r=math.inf,
                metal_like_flag=True,
                warnings=tuple(warnings),
            )

        stage = "permittivity"
        epsilon_r = permittivity_from_gamma(gamma_f, detection.angle_theta)
        if gamma_f >= HIGH_GAMMA:
            warnings.append(f"gamma_f={gamma_f:.4f} near 1: epsilon_r is unreliable")
        alternatives = brewster_alternatives(gamma_f, detection.angle_theta)
        if alternatives:
            warnings.append(
                f"incidence past Brewster angle: epsilon_r "
                + ", ".join(f"{eps:.4g}" for eps in alternatives)
                + f" also gives gamma_f={gamma_f:.4f}"
            )
    except RadarMatError as e:
        raise EstimationError(stage, e) from e

    logger.debug(
        "sigma=%.4g m^2 A_r=%.4g m^2 rho=%.4g gamma_f=%.4f epsilon_r=%.4g",
        sigma,
        prca.area_Ar,
        rho,
        gamma_f,
        epsilon_r,
    )
    return EMParameters(
        detection=detection,
        rcs_sigma=sigma,
        rho=rho,
        gamma_f=gamma_f,
        epsilon_r=epsilon_r,
        metal_like_flag=False,
        warnings=tuple(warnings),
    )

