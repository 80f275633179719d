"""Forward model: synthesize quadrature frames from a sample.

The detected count rate in channel k follows

    rate_k = gain_k * base_rate * (1 + V*(1-L)*cos(phi + phi_base + k*pi/2)) + offset_k

with the sample phase ``phi`` and loss ``L`` taken pixel-wise from the sample
maps and ``V`` the no-sample system visibility. In Poisson mode the channel
stores ``counts/exposure`` with counts drawn from a seeded counter-based
generator, so frames are bit-reproducible given (seed, frame index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    TWO_PI,
    ComplexSample,
    QuadratureFrame,
    Roi,
    ScalarField,
    SystemParams,
    ValidationError,
    as_values,
)

# Internal stream tag for the interferometer drift walk (kept distinct from
# the per-channel Poisson streams).
_DRIFT_STREAM = 0x0D21F


def detection_rate(sample_phase, loss, global_phase, visibility):
    """Relative detection rate ``1 + V*(1-L)*cos(phi + phi_g)``.

    Parameters
    ----------
    sample_phase : scalar or array
        Sample-induced phase on the idler [rad].
    loss : scalar or array
        Idler loss in [0, 1].
    global_phase : scalar or array
        Interferometer global phase [rad].
    visibility : float
        System visibility in [0, 1].

    Returns
    -------
    Relative rate in ``[1 - V*(1-L), 1 + V*(1-L)]``, dimensionless.
    """
    loss_arr = np.asarray(loss, dtype=float)
    if loss_arr.min() < 0.0 or loss_arr.max() > 1.0:
        raise ValidationError("loss must lie in [0, 1]")
    if not 0.0 <= visibility <= 1.0:
        raise ValidationError("visibility must lie in [0, 1]")
    phi = np.asarray(sample_phase, dtype=float)
    rate = 1.0 + visibility * (1.0 - loss_arr) * np.cos(phi + global_phase)
    if rate.ndim == 0:
        return float(rate)
    return rate


def _poisson_generator(seed: int, frame_index: int, channel: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(frame_index), int(channel)])
    return np.random.Generator(np.random.Philox(ss))


def simulate_frame(
    sample: ComplexSample,
    params: SystemParams,
    global_phase_base: float = 0.0,
    exposure: float = 0.5,
    *,
    timestamp: float = 0.0,
    delay: float | None = None,
    frame_index: int = 0,
    seed: int | None = None,
) -> QuadratureFrame:
    """Simulate the four phase-quadrature channels of one acquisition.

    Channel k sees global phase ``global_phase_base + k*pi/2``. Noiseless mode
    stores the exact rates [counts/s]; Poisson mode draws integer counts over
    ``exposure`` and stores ``counts/exposure``.
    """
    if not exposure > 0:
        raise ValidationError("exposure must be positive")
    phase = sample.phase.values
    loss = sample.loss.values
    if phase.shape != loss.shape:
        raise ValidationError("sample phase/loss dimension mismatch")
    seed = params.rng_seed if seed is None else int(seed)

    channels = []
    v = params.system_visibility
    for k in range(4):
        rate = params.channel_gains[k] * params.base_rate * detection_rate(
            phase, loss, global_phase_base + k * math.pi / 2.0, v
        ) + params.channel_offsets[k]
        if params.noise == "poisson":
            rng = _poisson_generator(seed, frame_index, k)
            counts = rng.poisson(rate * exposure)
            values = counts.astype(np.float64) / exposure
        else:
            values = rate
        channels.append(ScalarField(values, sample.pitch))

    return QuadratureFrame(
        channels=tuple(channels),
        exposure=exposure,
        timestamp=timestamp,
        delay=delay,
    )


def simulate_delay_sweep(
    sample: ComplexSample,
    params: SystemParams,
    delays,
    exposure: float = 0.5,
    seed: int | None = None,
) -> list[QuadratureFrame]:
    """Simulate a calibration sweep over translation-stage delays [um].

    The stage sets the common base phase ``delay_to_phase * delay``; each frame
    carries its delay in the metadata.
    """
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        raise ValidationError("delay sweep requires at least one delay")
    if not np.all(np.isfinite(delays)):
        raise ValidationError("delays must be finite")
    frames = []
    for i, d in enumerate(delays):
        frames.append(
            simulate_frame(
                sample,
                params,
                global_phase_base=params.delay_to_phase * d,
                exposure=exposure,
                timestamp=i * exposure,
                delay=d,
                frame_index=i,
                seed=seed,
            )
        )
    return frames


def simulate_sequence(
    samples,
    params: SystemParams,
    frame_interval: float,
    exposure: float = 0.5,
    seed: int | None = None,
    drift_std: float = 0.0,
) -> list[QuadratureFrame]:
    """Simulate a time sequence of frames, optionally with interferometer drift.

    ``drift_std`` is the per-frame standard deviation of a random global-phase
    walk, mimicking slow drifts of the interferometer that the reference
    region is meant to cancel.
    """
    samples = list(samples)
    if not samples:
        raise ValidationError("sequence requires at least one sample")
    if not frame_interval > 0:
        raise ValidationError("frame_interval must be positive")
    if drift_std < 0:
        raise ValidationError("drift_std must be non-negative")
    seed = params.rng_seed if seed is None else int(seed)
    if drift_std > 0:
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([int(seed), _DRIFT_STREAM]))
        )
        drift = np.cumsum(rng.normal(0.0, drift_std, len(samples)))
    else:
        drift = np.zeros(len(samples))
    frames = []
    for i, s in enumerate(samples):
        frames.append(
            simulate_frame(
                s,
                params,
                global_phase_base=float(drift[i]),
                exposure=exposure,
                timestamp=i * frame_interval,
                frame_index=i,
                seed=seed,
            )
        )
    return frames


# --------------------------------------------------------------------------
# Stepped phase mask
# --------------------------------------------------------------------------

def spiral_order(rows: int, cols: int) -> list[tuple[int, int]]:
    """Clockwise inward spiral over a grid, starting at the top-left cell.

    For a 3x3 grid the path runs around the ring and ends at the center,
    which gives the mask its helical thickness profile.
    """
    order = []
    top, bottom, left, right = 0, rows - 1, 0, cols - 1
    while top <= bottom and left <= right:
        for c in range(left, right + 1):
            order.append((top, c))
        top += 1
        for r in range(top, bottom + 1):
            order.append((r, right))
        right -= 1
        if top <= bottom:
            for c in range(right, left - 1, -1):
                order.append((bottom, c))
            bottom -= 1
        if left <= right:
            for r in range(bottom, top - 1, -1):
                order.append((r, left))
            left += 1
    return order


def phase_from_thickness(thickness_um, effective_index: float, wavelength_um: float):
    """Optical phase of a transparent step: ``2*pi*(n-1)*t / lambda``."""
    return TWO_PI * (effective_index - 1.0) * np.asarray(thickness_um, dtype=float) / wavelength_um


def effective_index_for_increment(
    increment_rad: float, thickness_step_um: float, wavelength_um: float
) -> float:
    """Effective index that makes one thickness step worth ``increment_rad``."""
    if not thickness_step_um > 0:
        raise ValidationError("thickness step must be positive")
    return 1.0 + increment_rad * wavelength_um / (TWO_PI * thickness_step_um)


@dataclass(frozen=True)
class MaskSpec:
    """Stepped phase mask: a grid of square plateaus of increasing thickness.

    ``effective_index=None`` resolves to the index that makes the plateau
    phase increments exactly ``0.3*pi`` at the given wavelength (the published
    resist index near 1.49 would give ~0.21*pi with a single idler pass; the
    index is deliberately a free parameter).
    """

    rows: int = 3
    cols: int = 3
    cell_size: float = 1500.0
    thickness_min: float = 1.56
    thickness_max: float = 2.87
    effective_index: float | None = None
    marker: bool = True

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("mask grid must have at least one cell")
        if not 0 < self.thickness_min <= self.thickness_max:
            raise ValidationError("need thickness_max >= thickness_min > 0")
        if not self.cell_size > 0:
            raise ValidationError("cell_size must be positive")
        if self.effective_index is not None and not self.effective_index > 1:
            raise ValidationError("effective_index must exceed 1")

    @property
    def steps(self) -> int:
        return self.rows * self.cols

    def thicknesses(self) -> np.ndarray:
        """Plateau thicknesses [um], linearly spaced along the spiral."""
        if self.steps == 1:
            return np.array([self.thickness_min])
        return np.linspace(self.thickness_min, self.thickness_max, self.steps)

    def resolve_index(self, wavelength_um: float, increment_rad: float = 0.3 * math.pi) -> float:
        if self.effective_index is not None:
            return self.effective_index
        if self.steps == 1 or self.thickness_max == self.thickness_min:
            raise ValidationError(
                "effective_index=None needs distinct thicknesses to target an increment"
            )
        step = (self.thickness_max - self.thickness_min) / (self.steps - 1)
        return effective_index_for_increment(increment_rad, step, wavelength_um)


@dataclass(frozen=True)
class MaskPlateau:
    """One plateau of a generated mask, in helical (spiral) order."""

    step: int
    row: int
    col: int
    roi: Roi
    thickness: float
    phase: float

    def interior(self, inset_frac: float = 0.25) -> Roi:
        """Sub-roi inset on every side, for statistics away from edges."""
        dx = int(round(self.roi.width * inset_frac))
        dy = int(round(self.roi.height * inset_frac))
        dx = min(dx, (self.roi.width - 1) // 2)
        dy = min(dy, (self.roi.height - 1) // 2)
        return Roi(self.roi.x0 + dx, self.roi.y0 + dy, self.roi.width - 2 * dx, self.roi.height - 2 * dy)


def _mask_grid_origin(spec: MaskSpec, width: int, height: int, pitch: float):
    cell_px = int(round(spec.cell_size / pitch))
    if cell_px < 1:
        raise ValidationError("mask cell smaller than one pixel at this pitch")
    grid_w, grid_h = spec.cols * cell_px, spec.rows * cell_px
    if grid_w > width or grid_h > height:
        raise ValidationError(
            f"mask grid {grid_w}x{grid_h} px exceeds the {width}x{height} field"
        )
    return (width - grid_w) // 2, (height - grid_h) // 2, cell_px


def mask_plateaus(
    spec: MaskSpec,
    width: int,
    height: int,
    pitch: float,
    wavelength_um: float,
) -> list[MaskPlateau]:
    """Plateau geometry and ground-truth phases, in helical order."""
    x_org, y_org, cell_px = _mask_grid_origin(spec, width, height, pitch)
    n_eff = spec.resolve_index(wavelength_um)
    thicknesses = spec.thicknesses()
    plateaus = []
    for step, (r, c) in enumerate(spiral_order(spec.rows, spec.cols)):
        roi = Roi(x_org + c * cell_px, y_org + r * cell_px, cell_px, cell_px)
        t = float(thicknesses[step])
        plateaus.append(
            MaskPlateau(
                step=step,
                row=r,
                col=c,
                roi=roi,
                thickness=t,
                phase=float(phase_from_thickness(t, n_eff, wavelength_um)),
            )
        )
    return plateaus


def make_phase_mask(
    spec: MaskSpec,
    width: int,
    height: int,
    pitch: float,
    wavelength_um: float,
) -> ComplexSample:
    """Render the stepped phase mask as a lossless sample.

    Returns a phase-only object: plateaus carry ``2*pi*(n_eff-1)*t/lambda``,
    the background is zero phase. The optional orientation marker is a small
    cube left of the grid and takes the maximum thickness; it is not part of
    the plateau sequence.
    """
    x_org, y_org, cell_px = _mask_grid_origin(spec, width, height, pitch)
    phase = np.zeros((height, width))
    for p in mask_plateaus(spec, width, height, pitch, wavelength_um):
        phase[p.roi.slices] = p.phase
    if spec.marker:
        n_eff = spec.resolve_index(wavelength_um)
        side = max(1, cell_px // 3)
        gap = max(1, cell_px // 3)
        mx = x_org - gap - side
        my = y_org + (spec.rows * cell_px - side) // 2
        if mx >= 0:
            marker_phase = float(phase_from_thickness(spec.thickness_max, n_eff, wavelength_um))
            phase[my : my + side, mx : mx + side] = marker_phase
    return ComplexSample.phase_only(phase, pitch)


# --------------------------------------------------------------------------
# Dynamic-sample timelines
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DryingFilmSpec:
    """Evaporating film: vertically graded phase that shrinks linearly in time.

    The film occupies ``region``; initial phase and evaporation rate are
    interpolated linearly from the region's top row to its bottom row, so a
    gravity-fed film (thicker and slower-drying at the bottom) is one spec.
    The film contribution at a pixel is ``max(0, phi0(y) - rate(y)*t)``.
    """

    region: Roi
    phase_top: float
    phase_bottom: float
    rate_top: float
    rate_bottom: float

    def __post_init__(self):
        if self.phase_top < 0 or self.phase_bottom < 0:
            raise ValidationError("initial film phase must be non-negative")
        if self.rate_top < 0 or self.rate_bottom < 0:
            raise ValidationError("evaporation rates must be non-negative")

    def initial_phase_at(self, row: int) -> float:
        return float(self._lerp(self.phase_top, self.phase_bottom, row))

    def rate_at(self, row: int) -> float:
        return float(self._lerp(self.rate_top, self.rate_bottom, row))

    def _lerp(self, top: float, bottom: float, row: int):
        if self.region.height == 1:
            return top
        frac = (row - self.region.y0) / (self.region.height - 1)
        return top + (bottom - top) * frac


TIMELINE_KINDS = ("drying_film", "scripted")


@dataclass(frozen=True)
class TimelineSpec:
    """Recipe for a sequence of evolving samples."""

    kind: str
    frames: int
    frame_interval: float
    film: DryingFilmSpec | None = None
    deltas: tuple | None = None

    def __post_init__(self):
        if self.kind not in TIMELINE_KINDS:
            raise ValidationError(f"timeline kind must be one of {TIMELINE_KINDS}")
        if self.frames < 1:
            raise ValidationError("timeline needs at least one frame")
        if not self.frame_interval > 0:
            raise ValidationError("frame_interval must be positive")
        if self.kind == "drying_film" and self.film is None:
            raise ValidationError("drying_film timeline requires a DryingFilmSpec")
        if self.kind == "scripted":
            if self.deltas is None or len(self.deltas) != self.frames:
                raise ValidationError("scripted timeline requires one phase delta per frame")


def make_timeline(spec: TimelineSpec, base: ComplexSample) -> list[ComplexSample]:
    """Per-frame samples at t = k * frame_interval for k = 0..frames-1."""
    height, width = base.shape
    samples = []
    if spec.kind == "drying_film":
        film = spec.film
        film.region.require_inside(base.shape)
        rows = np.arange(film.region.y0, film.region.y0 + film.region.height)
        phi0 = np.array([film.initial_phase_at(r) for r in rows])[:, None]
        rate = np.array([film.rate_at(r) for r in rows])[:, None]
        for k in range(spec.frames):
            t = k * spec.frame_interval
            contribution = np.zeros((height, width))
            contribution[film.region.slices] = np.maximum(0.0, phi0 - rate * t)
            phase = base.phase.values + contribution
            samples.append(ComplexSample(base.phase.with_values(phase), base.loss))
    else:
        for delta in spec.deltas:
            dv = as_values(delta)
            if dv.shape != base.shape:
                raise ValidationError("scripted phase delta dimensions do not match the sample")
            phase = base.phase.values + dv
            samples.append(ComplexSample(base.phase.with_values(phase), base.loss))
    return samples
