"""Per-channel calibration from a delay sweep.

A sweep of frames with known stage delays yields one interferogram per
channel (roi means vs delay). Each is fit with a fixed-frequency sinusoid;
the fits define affine per-channel corrections that equalize mean count rate
and modulation amplitude across the four channels, and a quality report
(phase-vs-delay linearity and visibility statistics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CalibrationError,
    QuadratureFrame,
    Roi,
    ValidationError,
    field_stats,
    wrap_phase,
)

IDENTITY_AFFINE = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)


@dataclass(frozen=True)
class Interferogram:
    """Per-channel roi-mean count rates as a function of stage delay."""

    delays: np.ndarray
    means: np.ndarray  # shape (4, n)

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        m = np.asarray(self.means, dtype=float)
        if d.ndim != 1 or m.shape != (4, d.size):
            raise ValidationError("interferogram needs delays (n,) and means (4, n)")
        diffs = np.diff(d)
        if d.size > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValidationError("delays must be strictly monotone")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "means", m)


@dataclass(frozen=True)
class SinusoidFit:
    """Fit of ``I(d) = offset + amplitude * cos(kappa*d + phase_origin)``."""

    offset: float
    amplitude: float
    phase_origin: float
    visibility: float
    residual_rms: float

    def __post_init__(self):
        if not self.offset > 0:
            raise ValidationError("fit offset must be positive")
        if self.amplitude < 0:
            raise ValidationError("fit amplitude must be non-negative")

    def evaluate(self, delays, delay_to_phase: float) -> np.ndarray:
        arg = delay_to_phase * np.asarray(delays, dtype=float) + self.phase_origin
        return self.offset + self.amplitude * np.cos(arg)


@dataclass(frozen=True)
class QualityReport:
    """Sweep-level quality metrics: phase linearity and visibility stability."""

    r_squared: float
    visibility_mean: float
    visibility_std: float

    def __str__(self):
        return (
            f"r2={self.r_squared:.12g} "
            f"vis_mean={self.visibility_mean:.12g} "
            f"vis_std={self.visibility_std:.12g}"
        )


@dataclass(frozen=True)
class ChannelCalibration:
    """Registration, correction and fit state for the four channels."""

    rois: tuple[Roi, Roi, Roi, Roi]
    affines: tuple[tuple, tuple, tuple, tuple] = (IDENTITY_AFFINE,) * 4
    alphas: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    betas: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    fits: tuple[SinusoidFit, ...] | None = None

    def __post_init__(self):
        if len(self.rois) != 4 or len(self.affines) != 4:
            raise ValidationError("calibration requires four rois and affines")
        if len(self.alphas) != 4 or len(self.betas) != 4:
            raise ValidationError("calibration requires four alpha/beta pairs")
        if min(self.alphas) <= 0:
            raise ValidationError("gain corrections must be positive")
        affines = tuple(tuple(float(v) for v in a) for a in self.affines)
        for a in affines:
            if len(a) != 6:
                raise ValidationError("each affine needs 6 coefficients")
        object.__setattr__(self, "affines", affines)
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        w, h = self.rois[0].width, self.rois[0].height
        for r in self.rois:
            if (r.width, r.height) != (w, h):
                raise ValidationError("all channel rois must share the same size")

    @classmethod
    def identity(cls, shape: tuple[int, int], roi: Roi | None = None) -> "ChannelCalibration":
        """No-op calibration covering the whole frame (or a given roi)."""
        rows, cols = shape
        roi = roi or Roi(0, 0, cols, rows)
        return cls(rois=(roi,) * 4)


def extract_interferogram(frames, rois) -> Interferogram:
    """Roi-mean interferograms of a delay sweep.

    Every frame must carry delay metadata and the sweep must be ordered with
    strictly monotone delays.
    """
    frames = list(frames)
    if not frames:
        raise ValidationError("no frames supplied")
    rois = tuple(rois)
    if len(rois) != 4:
        raise ValidationError("four rois are required")
    delays = []
    for f in frames:
        if f.delay is None:
            raise ValidationError("frame is missing delay metadata")
        delays.append(f.delay)
    means = np.empty((4, len(frames)))
    for j, f in enumerate(frames):
        for k in range(4):
            means[k, j] = field_stats(f.channels[k], rois[k])[0]
    return Interferogram(np.asarray(delays), means)


def fit_sinusoid(delays, means, delay_to_phase: float, kappa_search: bool = False) -> SinusoidFit:
    """Least-squares sinusoid fit with known phase-per-delay ``kappa``.

    Solves the linear system ``I = A0 + B*cos(kappa*d) + C*sin(kappa*d)``,
    then ``A1 = hypot(B, C)`` and ``phase_origin = atan2(-C, B)``. With
    ``kappa_search`` the fit is repeated on a +-10% grid of 101 kappa values
    and the minimum-residual kappa wins (robustness against a miscalibrated
    stage; the grid is coarse by design).
    """
    d = np.asarray(delays, dtype=float)
    y = np.asarray(means, dtype=float)
    if d.ndim != 1 or d.shape != y.shape:
        raise ValidationError("delays and means must be 1D arrays of equal length")
    if d.size < 3:
        raise CalibrationError("sinusoid fit needs at least 3 samples")
    if not delay_to_phase > 0:
        raise ValidationError("delay_to_phase must be positive")
    span = (d.max() - d.min()) * delay_to_phase
    if span < math.pi * (1.0 - 1e-12):
        raise CalibrationError("delay sweep must span at least half a phase period")

    if kappa_search:
        kappas = delay_to_phase * np.linspace(0.9, 1.1, 101)
        fits = [_fit_fixed_kappa(d, y, k) for k in kappas]
        best = min(range(len(fits)), key=lambda i: fits[i].residual_rms)
        return _fit_fixed_kappa(d, y, float(kappas[best]))
    return _fit_fixed_kappa(d, y, delay_to_phase)


def _fit_fixed_kappa(d: np.ndarray, y: np.ndarray, kappa: float) -> SinusoidFit:
    arg = kappa * d
    design = np.column_stack([np.ones_like(d), np.cos(arg), np.sin(arg)])
    coeffs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 3:
        raise CalibrationError(
            "rank-deficient sweep: all delays coincide modulo one phase period"
        )
    a0, b, c = (float(v) for v in coeffs)
    if a0 <= 0:
        raise CalibrationError("channel shows no counts (non-positive mean level)")
    amplitude = math.hypot(b, c)
    theta = math.atan2(-c, b) if amplitude > 0 else 0.0
    residual = y - design @ coeffs
    rms = float(np.sqrt(np.mean(residual**2)))
    visibility = min(max(amplitude / a0, 0.0), 1.0)
    return SinusoidFit(
        offset=a0,
        amplitude=amplitude,
        phase_origin=wrap_phase(theta),
        visibility=visibility,
        residual_rms=rms,
    )


def derive_corrections(fits) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Affine per-channel corrections equalizing mean and modulation.

    With target mean ``M = mean(offsets)`` and target amplitude
    ``A = mean(amplitudes)``: ``alpha_k = A / A1_k`` and
    ``beta_k = M - alpha_k * A0_k``, so all corrected channels share mean M,
    amplitude A and hence visibility A/M.
    """
    fits = tuple(fits)
    if len(fits) != 4:
        raise ValidationError("four channel fits are required")
    amplitudes = np.array([f.amplitude for f in fits])
    offsets = np.array([f.offset for f in fits])
    if amplitudes.min() <= 0:
        raise CalibrationError("a channel shows no interference (zero fit amplitude)")
    target_mean = float(offsets.mean())
    target_amp = float(amplitudes.mean())
    alphas = tuple(float(target_amp / a) for a in amplitudes)
    betas = tuple(float(target_mean - al * off) for al, off in zip(alphas, offsets))
    return alphas, betas


def calibrate_sweep(
    frames,
    rois,
    delay_to_phase: float,
    kappa_search: bool = False,
    affines=(IDENTITY_AFFINE,) * 4,
    register_rois=None,
) -> ChannelCalibration:
    """Full calibration from a sweep: interferograms, fits, corrections.

    ``rois`` are the statistics regions the interferograms are averaged over.
    ``register_rois``, when given, become the calibration's channel crop
    regions instead (use this when the reconstruction grid should cover more
    of the frame than the small averaging area).
    """
    gram = extract_interferogram(frames, rois)
    fits = tuple(
        fit_sinusoid(gram.delays, gram.means[k], delay_to_phase, kappa_search)
        for k in range(4)
    )
    alphas, betas = derive_corrections(fits)
    return ChannelCalibration(
        rois=tuple(register_rois) if register_rois is not None else tuple(rois),
        affines=affines,
        alphas=alphas,
        betas=betas,
        fits=fits,
    )


def quality_report(frames, calib: ChannelCalibration, rois=None) -> QualityReport:
    """Phase linearity and visibility stability of a corrected sweep.

    Per frame, the corrected roi means feed the quadrature formulas; the
    resulting phases are unwrapped along increasing delay and regressed
    linearly against delay (coefficient of determination r^2). Frame order
    does not matter: frames are sorted by delay internally.

    ``rois`` overrides the averaging regions (default: the calibration's
    channel rois); a single Roi applies to all four channels.
    """
    from .recon import quadrature_phase, quadrature_visibility
    from .dynamics import temporal_unwrap

    if rois is None:
        rois = calib.rois
    elif isinstance(rois, Roi):
        rois = (rois,) * 4
    else:
        rois = tuple(rois)

    frames = sorted(frames, key=lambda f: _required_delay(f))
    if len(frames) < 3:
        raise CalibrationError("quality report needs at least 3 frames")
    delays = np.array([f.delay for f in frames])
    if np.unique(delays).size < 3:
        raise CalibrationError("quality report needs at least 3 distinct delays")

    phases = np.empty(len(frames))
    visibilities = np.empty(len(frames))
    for j, f in enumerate(frames):
        m = np.array(
            [
                calib.alphas[k] * field_stats(f.channels[k], rois[k])[0]
                + calib.betas[k]
                for k in range(4)
            ]
        )
        phase, _ = quadrature_phase(m[0], m[1], m[2], m[3])
        vis, _ = quadrature_visibility(m[0], m[1], m[2], m[3])
        phases[j] = phase
        visibilities[j] = vis

    unwrapped = temporal_unwrap(phases)
    slope, intercept = np.polyfit(delays, unwrapped, 1)
    residual = unwrapped - (slope * delays + intercept)
    ss_res = float(np.sum(residual**2))
    ss_tot = float(np.sum((unwrapped - unwrapped.mean()) ** 2))
    if ss_tot == 0.0:
        raise CalibrationError("degenerate regression: no phase variation across the sweep")
    r_squared = 1.0 - ss_res / ss_tot
    return QualityReport(
        r_squared=r_squared,
        visibility_mean=float(visibilities.mean()),
        visibility_std=float(visibilities.std()),
    )


def _required_delay(frame: QuadratureFrame) -> float:
    if frame.delay is None:
        raise ValidationError("frame is missing delay metadata")
    return frame.delay


# --------------------------------------------------------------------------
# Text serialization (exact decimal round trip)
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def calibration_to_text(calib: ChannelCalibration) -> str:
    lines = ["# quadim channel calibration", "channels = 4"]
    for k in range(4):
        lines.append(f"roi_{k} = {calib.rois[k].as_text()}")
        lines.append(f"affine_{k} = " + " ".join(_fmt(v) for v in calib.affines[k]))
        lines.append(f"alpha_{k} = {_fmt(calib.alphas[k])}")
        lines.append(f"beta_{k} = {_fmt(calib.betas[k])}")
        if calib.fits is not None:
            f = calib.fits[k]
            lines.append(f"fit_offset_{k} = {_fmt(f.offset)}")
            lines.append(f"fit_amplitude_{k} = {_fmt(f.amplitude)}")
            lines.append(f"fit_phase_{k} = {_fmt(f.phase_origin)}")
            lines.append(f"fit_visibility_{k} = {_fmt(f.visibility)}")
            lines.append(f"fit_residual_rms_{k} = {_fmt(f.residual_rms)}")
    return "\n".join(lines) + "\n"


def calibration_from_text(text: str, source: str = "calib") -> ChannelCalibration:
    from .fileio import parse_kv_text

    kv = parse_kv_text(text, source=source)
    try:
        rois, affines, alphas, betas = [], [], [], []
        fits = []
        have_fits = "fit_offset_0" in kv
        for k in range(4):
            rois.append(Roi.from_text(kv[f"roi_{k}"]))
            affines.append(tuple(float(v) for v in kv[f"affine_{k}"].split()))
            alphas.append(float(kv[f"alpha_{k}"]))
            betas.append(float(kv[f"beta_{k}"]))
            if have_fits:
                fits.append(
                    SinusoidFit(
                        offset=float(kv[f"fit_offset_{k}"]),
                        amplitude=float(kv[f"fit_amplitude_{k}"]),
                        phase_origin=float(kv[f"fit_phase_{k}"]),
                        visibility=float(kv[f"fit_visibility_{k}"]),
                        residual_rms=float(kv[f"fit_residual_rms_{k}"]),
                    )
                )
    except KeyError as exc:
        raise ValidationError(f"{source}: missing calibration key {exc}") from exc
    return ChannelCalibration(
        rois=tuple(rois),
        affines=tuple(affines),
        alphas=tuple(alphas),
        betas=tuple(betas),
        fits=tuple(fits) if have_fits else None,
    )


def save_calibration(path, calib: ChannelCalibration):
    from .fileio import atomic_write_text

    atomic_write_text(path, calibration_to_text(calib))


def load_calibration(path) -> ChannelCalibration:
    from pathlib import Path

    p = Path(path)
    try:
        text = p.read_text(encoding="ascii")
    except OSError as exc:
        raise ValidationError(f"cannot read calibration file {p}: {exc}") from exc
    return calibration_from_text(text, source=str(p))
