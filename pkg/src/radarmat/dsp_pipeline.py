"""
Radar cube preprocessing: range-Doppler and range-angle maps, target detection
and beamforming direction-of-arrival refinement.

Both FFT axes use periodic Hann windows. Channels are accumulated
non-coherently for the RD map; the RA map beamforms the Doppler-integrated
spatial covariance of each range bin.
"""

import functools
import logging
import math
from dataclasses import dataclass
from typing import Annotated

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import Field
from scipy import ndimage, signal, stats

from .config_base import ConfigBase
from .errors import AmbiguousDoAError, UnsupportedOperationError
from .radar_core import (
    RadarConfig,
    RadarCube,
    TargetDetection,
    angle_grid,
    doppler_bin_size,
    linear_from_db,
    range_bin_size,
    steering_vector,
)


logger = logging.getLogger(__name__)

ENVELOPE_OVERSAMPLE = 16
BEAM_PATTERN_POINTS = 18001


class DetectionSettings(ConfigBase):
    threshold_db: Annotated[
        float, Field(gt=0, description="Detection threshold above the noise floor, dB")
    ] = 13.0
    sidelobe_margin_db: Annotated[
        float,
        Field(ge=0, description="Margin above the window sidelobe envelope, dB"),
    ] = 6.0
    coarse_angle_points: Annotated[
        int, Field(ge=3, description="Points of the sine-space RA grid")
    ] = 513
    fine_step_deg: Annotated[
        float, Field(gt=0, description="Fine DoA scan step, degrees")
    ] = 0.1
    fine_span_deg: Annotated[
        float, Field(gt=0, description="Half-width of the fine DoA scan, degrees")
    ] = 1.0
    dominance_db: Annotated[
        float,
        Field(ge=0, description="Required DoA peak height over the scan median, dB"),
    ] = 3.0


@dataclass(frozen=True, eq=False)
class RDMap:
    """Non-coherent range-Doppler power, shape [n_range_bins][n_doppler_bins]."""

    power: np.ndarray
    noise_floor: float
    config: RadarConfig

    @property
    def zero_doppler_bin(self) -> int:
        return self.power.shape[1] // 2


@dataclass(frozen=True, eq=False)
class RAMap:
    """Doppler-integrated range-angle power, shape [n_range_bins][n_angle_bins]."""

    power: np.ndarray
    angle_grid: np.ndarray


@dataclass(frozen=True, eq=False)
class BeamPattern:
    angles: np.ndarray
    gains: np.ndarray
    hpbw: float


@functools.lru_cache(maxsize=16)
def hann_window(n: int) -> np.ndarray:
    window = signal.get_window("hann", n)
    window.flags.writeable = False
    return window


def window_response(window: np.ndarray, offset: float) -> float:
    """Power response of `window` to a tone `offset` bins off centre, relative to on-bin."""
    n = np.arange(len(window))
    response = np.sum(window * np.exp(-2j * np.pi * offset * n / len(window)))
    return float(abs(response) ** 2 / np.sum(window) ** 2)


def processing_gain(config: RadarConfig) -> float:
    """SNR gain of the two windowed FFTs for a tone centred on a bin."""
    gain = 1.0
    for n in (config.n_samples, config.n_chirps):
        w = hann_window(n)
        gain *= np.sum(w) ** 2 / np.sum(w**2)
    return float(gain)


@functools.lru_cache(maxsize=16)
def sidelobe_envelope(n: int) -> np.ndarray:
    """
    Upper bound on the power leaked `d` bins away from the peak bin of a tone,
    relative to the observed peak, for every circular bin distance d in [0, n).
    """
    oversample = ENVELOPE_OVERSAMPLE
    half = oversample // 2
    spectrum = np.abs(np.fft.fft(hann_window(n), n * oversample)) ** 2
    spectrum /= spectrum[0]
    padded = np.concatenate([spectrum[-half:], spectrum, spectrum[:half]])
    band_max = sliding_window_view(padded, oversample + 1).max(axis=1)[::oversample]
    # worst-case scalloping of the observed peak
    envelope = band_max / spectrum[half]
    envelope.flags.writeable = False
    return envelope


def median_to_mean(n_channels: int) -> float:
    """Median over mean of a non-coherent sum of `n_channels` exponential noise powers."""
    return float(stats.gamma(n_channels).median() / n_channels)


def range_doppler_spectra(cube: RadarCube) -> np.ndarray:
    """Windowed 2-D FFT of every channel, shape [channel][range_bin][doppler_bin]."""
    config = cube.config
    x = cube.data.astype(np.complex128)
    x = np.fft.fft(x * hann_window(config.n_samples)[None, None, :], axis=2)
    x = np.fft.fft(x * hann_window(config.n_chirps)[None, :, None], axis=1)
    x = np.fft.fftshift(x, axes=1)
    return np.ascontiguousarray(x.transpose(0, 2, 1))


def range_doppler_map(cube: RadarCube, *, spectra: np.ndarray | None = None) -> RDMap:
    if spectra is None:
        spectra = range_doppler_spectra(cube)
    power = np.sum(np.abs(spectra) ** 2, axis=0)
    noise_floor = float(np.median(power))
    return RDMap(power=power, noise_floor=noise_floor, config=cube.config)


def range_angle_map(
    cube: RadarCube,
    angles: np.ndarray | None = None,
    *,
    spectra: np.ndarray | None = None,
) -> RAMap:
    n_channels = cube.config.n_channels
    if n_channels < 2:
        raise UnsupportedOperationError("a range-angle map needs at least two channels")
    if angles is None:
        angles = angle_grid(cube.config, DetectionSettings().coarse_angle_points)
    if spectra is None:
        spectra = range_doppler_spectra(cube)

    covariance = np.einsum("mrd,nrd->rmn", spectra, spectra.conj())
    weights = steering_vector(n_channels, np.asarray(angles)) / n_channels
    power = np.einsum("am,rmn,an->ra", weights.conj(), covariance, weights).real
    return RAMap(power=np.maximum(power, 0.0), angle_grid=np.asarray(angles))


def half_power_width(angles: np.ndarray, gains: np.ndarray) -> float:
    peak = int(np.argmax(gains))
    half = gains[peak] / 2.0

    def crossing(indices) -> float | None:
        prev = peak
        for i in indices:
            if gains[i] < half:
                # linear interpolation between the last point above and this one
                t = (gains[prev] - half) / (gains[prev] - gains[i])
                return angles[prev] + t * (angles[i] - angles[prev])
            prev = i
        return None

    left = crossing(range(peak - 1, -1, -1))
    right = crossing(range(peak + 1, len(gains)))
    left = angles[0] if left is None else left
    right = angles[-1] if right is None else right
    return float(right - left)


def beam_pattern(
    config: RadarConfig,
    steering_angle: float = 0.0,
    n_points: int = BEAM_PATTERN_POINTS,
) -> BeamPattern:
    """Delay-and-sum array factor of the ULA steered to `steering_angle`."""
    angles = np.radians(np.linspace(-90.0, 90.0, n_points))
    m = config.n_channels
    response = steering_vector(m, angles) @ steering_vector(m, steering_angle).conj() / m
    gains = np.abs(response) ** 2
    gains /= gains.max()
    return BeamPattern(angles=angles, gains=gains, hpbw=half_power_width(angles, gains))


def hann_offset(p_peak: float, p_lower: float, p_upper: float) -> float:
    """
    Fractional tone position relative to a Hann-windowed peak bin, in bins,
    from the peak and its two neighbours.
    """
    if p_peak <= 0:
        return 0.0
    sign = 1.0 if p_upper >= p_lower else -1.0
    ratio = math.sqrt(max(p_upper, p_lower) / p_peak)
    delta = (2.0 * ratio - 1.0) / (1.0 + ratio)
    return sign * min(max(delta, 0.0), 0.5)


def _refine_peak(rd: RDMap, r: int, d: int) -> tuple[float, float, float]:
    """(range offset, doppler offset, scalloping-corrected peak power)."""
    power = rd.power
    n_range, n_doppler = power.shape
    p = float(power[r, d])
    dr = hann_offset(p, power[(r - 1) % n_range, d], power[(r + 1) % n_range, d])
    dd = hann_offset(p, power[r, (d - 1) % n_doppler], power[r, (d + 1) % n_doppler])
    loss = window_response(hann_window(n_range), dr) * window_response(
        hann_window(n_doppler), dd
    )
    return dr, dd, p / loss


def _snr(rd: RDMap, corrected_peak: float) -> float:
    floor = rd.noise_floor
    if floor <= 0:
        positive = rd.power[rd.power > 0]
        floor = float(positive.min())
    noise_mean = floor / median_to_mean(rd.config.n_channels)
    return corrected_peak / noise_mean / processing_gain(rd.config)


def detect_targets(
    rd: RDMap,
    ra: RAMap | None,
    config: RadarConfig,
    settings: DetectionSettings | None = None,
) -> list[TargetDetection]:
    """
    Threshold plus 3x3 local-maximum detection on the RD map.

    A candidate whose power stays within the window sidelobe envelope of a
    stronger detection is leakage of that detection and is dropped.
    """
    settings = settings or DetectionSettings()
    power = rd.power
    if not np.any(power > 0):
        return []

    threshold = rd.noise_floor * linear_from_db(settings.threshold_db)
    local_max = power == ndimage.maximum_filter(power, size=3, mode="wrap")
    rows, cols = np.nonzero(local_max & (power > threshold))
    if len(rows) == 0:
        return []

    values = power[rows, cols]
    order = np.argsort(-values, kind="stable")
    rows, cols, values = rows[order], cols[order], values[order]

    n_range, n_doppler = power.shape
    env_range = sidelobe_envelope(n_range)
    env_doppler = sidelobe_envelope(n_doppler)
    margin = linear_from_db(settings.sidelobe_margin_db)

    accepted: list[tuple[int, int]] = []
    alive = np.ones(len(values), dtype=bool)
    while alive.any():
        i = int(np.flatnonzero(alive)[0])
        r0, d0 = int(rows[i]), int(cols[i])
        accepted.append((r0, d0))
        bound = (
            values[i]
            * env_range[(rows - r0) % n_range]
            * env_doppler[(cols - d0) % n_doppler]
            * margin
        )
        alive &= values > bound
        alive[i] = False

    dr_size = range_bin_size(config)
    dv_size = doppler_bin_size(config)
    detections = []
    for r, d in accepted:
        off_r, off_d, corrected = _refine_peak(rd, r, d)
        if ra is not None:
            a = int(np.argmax(ra.power[r]))
            theta = float(ra.angle_grid[a])
        else:
            a, theta = 0, 0.0
        detections.append(
            TargetDetection(
                range_R=max(0.0, (r + off_r) * dr_size),
                velocity_V=(d - rd.zero_doppler_bin + off_d) * dv_size,
                angle_theta=theta,
                snr_linear=_snr(rd, corrected),
                peak_bin=(r, d, a),
            )
        )

    detections.sort(key=lambda det: -det.snr_linear)
    logger.debug(
        "%d detection(s) above %.1f dB (noise floor %.3e)",
        len(detections),
        settings.threshold_db,
        rd.noise_floor,
    )
    return detections


def beamform_doa(
    cube: RadarCube,
    peak_bin: tuple[int, ...],
    settings: DetectionSettings | None = None,
    *,
    spectra: np.ndarray | None = None,
) -> float:
    """
    Direction of arrival of the target in the (range, Doppler) cell of
    `peak_bin`: a coarse sine-space scan followed by a fine scan on the
    `fine_step_deg` lattice around the coarse maximum.
    """
    settings = settings or DetectionSettings()
    config = cube.config
    if config.n_channels < 2:
        raise UnsupportedOperationError("direction finding needs at least two channels")
    if spectra is None:
        spectra = range_doppler_spectra(cube)

    r, d = peak_bin[0], peak_bin[1]
    snapshot = spectra[:, r, d]
    m = config.n_channels

    def scan(angles: np.ndarray) -> np.ndarray:
        return np.abs(steering_vector(m, angles).conj() @ snapshot / m) ** 2

    coarse = angle_grid(config, settings.coarse_angle_points)
    coarse_power = scan(coarse)
    peak = float(coarse_power.max())
    median = float(np.median(coarse_power))
    if peak <= 0 or peak < median * linear_from_db(settings.dominance_db):
        raise AmbiguousDoAError(
            f"no dominant direction in cell (range_bin={r}, doppler_bin={d})"
        )

    step = settings.fine_step_deg
    centre = round(math.degrees(coarse[int(np.argmax(coarse_power))]) / step) * step
    n_span = int(round(settings.fine_span_deg / step))
    fine_deg = np.clip(centre + step * np.arange(-n_span, n_span + 1), -90.0, 90.0)
    fine_power = scan(np.radians(fine_deg))
    return math.radians(float(fine_deg[int(np.argmax(fine_power))]))


def locate_targets(
    cube: RadarCube,
    settings: DetectionSettings | None = None,
) -> tuple[list[TargetDetection], RDMap, RAMap | None]:
    """The full preprocessing chain: RD and RA maps, detection, fine DoA."""
    settings = settings or DetectionSettings()
    config = cube.config
    spectra = range_doppler_spectra(cube)
    rd = range_doppler_map(cube, spectra=spectra)
    ra = None
    if config.n_channels >= 2:
        ra = range_angle_map(
            cube, angle_grid(config, settings.coarse_angle_points), spectra=spectra
        )

    detections = []
    for det in detect_targets(rd, ra, config, settings):
        if ra is not None:
            try:
                theta = beamform_doa(cube, det.peak_bin, settings, spectra=spectra)
                det = det.model_copy(update={"angle_theta": theta})
            except AmbiguousDoAError as e:
                logger.warning("%s; keeping the coarse angle", e)
        detections.append(det)
        logger.info(
            "target R=%.3f m V=%.3f m/s theta=%.1f deg SNR=%.1f dB",
            det.range_R,
            det.velocity_V,
            math.degrees(det.angle_theta),
            det.snr_db,
        )
    return detections, rd, ra
