"""Time-series analysis of frame sequences.

Probe pixels are tracked through a sequence of reconstructions: the wrapped
phase is averaged circularly over a small window, referenced against an
object-free region (cancelling interferometer drift) and unwrapped in time.
An accumulated phase change converts to physical layer thickness through the
material's refractive index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calib import ChannelCalibration
from .core import Roi, TWO_PI, ValidationError, wrap_phase
from .recon import DEFAULT_REL_THRESHOLD, DEFAULT_SIGMA_PX, reconstruct_frame

DEFAULT_PROBE_WINDOW = 5


@dataclass(frozen=True)
class MaterialParams:
    """Refractive index and wavelength for phase-to-thickness conversion."""

    refractive_index: float
    wavelength: float

    def __post_init__(self):
        if not self.refractive_index > 1:
            raise ValidationError("refractive index must exceed 1")
        if not self.wavelength > 0:
            raise ValidationError("wavelength must be positive")


def thickness_from_phase(delta_phase, material: MaterialParams):
    """Layer thickness [um] producing a phase change: ``t = dphi*lambda / (2*pi*(n-1))``."""
    if not material.refractive_index > 1:
        raise ValidationError("refractive index must exceed 1")
    t = (
        np.asarray(delta_phase, dtype=float)
        * material.wavelength
        / (TWO_PI * (material.refractive_index - 1.0))
    )
    if t.ndim == 0:
        return float(t)
    return t


def temporal_unwrap(series):
    """Unwrap a phase series in time.

    The first element is kept; every later element is shifted by the multiple
    of 2*pi that brings each consecutive difference into ``(-pi, pi]``.
    """
    s = np.asarray(series, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("temporal_unwrap requires a non-empty 1D series")
    if s.size == 1:
        return s.copy()
    steps = wrap_phase(np.diff(s))
    return np.concatenate([[s[0]], s[0] + np.cumsum(steps)])


def circular_mean(phases) -> float:
    """Mean direction of a set of angles, in ``(-pi, pi]``."""
    ph = np.asarray(phases, dtype=float)
    if ph.size == 0:
        raise ValidationError("circular mean of an empty set")
    return wrap_phase(math.atan2(float(np.sin(ph).mean()), float(np.cos(ph).mean())))


@dataclass(frozen=True)
class ProbeSeries:
    """Referenced, temporally unwrapped phase at named probe pixels."""

    names: tuple[str, ...]
    coords: tuple[tuple[int, int], ...]
    times: np.ndarray
    values: np.ndarray  # shape (n_probes, n_times)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.shape != (len(self.names), t.size):
            raise ValidationError("probe series needs values shaped (n_probes, n_times)")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValidationError("times must be strictly increasing")
        if len(self.coords) != len(self.names):
            raise ValidationError("one coordinate pair per probe name")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "coords", tuple((int(x), int(y)) for x, y in self.coords))

    def series(self, name: str) -> np.ndarray:
        try:
            i = self.names.index(name)
        except ValueError as exc:
            raise ValidationError(f"unknown probe {name!r}") from exc
        return self.values[i]

    def to_csv_text(self, material: MaterialParams | None = None) -> str:
        header = "time_s,probe_name,phase_rad"
        if material is not None:
            header += ",thickness_um"
        lines = [header]
        for j, t in enumerate(self.times):
            for i, name in enumerate(self.names):
                row = f"{t:.17g},{name},{self.values[i, j]:.17g}"
                if material is not None:
                    row += f",{thickness_from_phase(self.values[i, j], material):.17g}"
                lines.append(row)
        return "\n".join(lines) + "\n"


def _window_roi(x: int, y: int, window: int, shape: tuple[int, int]) -> Roi:
    half = window // 2
    rows, cols = shape
    x0 = max(0, x - half)
    y0 = max(0, y - half)
    x1 = min(cols, x + half + 1)
    y1 = min(rows, y + half + 1)
    return Roi(x0, y0, x1 - x0, y1 - y0)


def track_probes(
    frames,
    calib: ChannelCalibration,
    probes,
    reference_roi: Roi,
    *,
    probe_window: int = DEFAULT_PROBE_WINDOW,
    sigma: float = DEFAULT_SIGMA_PX,
    rel_threshold: float = DEFAULT_REL_THRESHOLD,
) -> ProbeSeries:
    """Track referenced probe phases through a sequence of frames.

    Per frame the wrapped phase map is reconstructed (no 2D unwrap), each
    probe value is the circular mean of the wrapped phase over its window,
    the circular-mean phase of ``reference_roi`` is subtracted, and finally
    every probe's series is unwrapped in time.

    ``probes`` is an iterable of ``(name, x, y)`` pixel positions.
    """
    frames = list(frames)
    if not frames:
        raise ValidationError("track_probes requires at least one frame")
    if probe_window < 1:
        raise ValidationError("probe window must be at least 1 pixel")
    probes = [(str(n), int(x), int(y)) for n, x, y in probes]
    if not probes:
        raise ValidationError("no probes supplied")

    times = np.array([f.timestamp for f in frames], dtype=float)
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise ValidationError("frame timestamps must be strictly increasing")

    grid_shape = (calib.rois[0].height, calib.rois[0].width)
    for name, x, y in probes:
        if not (0 <= x < grid_shape[1] and 0 <= y < grid_shape[0]):
            raise ValidationError(f"probe {name!r} at ({x}, {y}) lies outside the field")
    reference_roi.require_inside(grid_shape)

    raw = np.empty((len(probes), len(frames)))
    for j, frame in enumerate(frames):
        result = reconstruct_frame(frame, calib, sigma, rel_threshold=rel_threshold)
        phase = result.phase.values
        valid = result.valid
        ref_sel = valid[reference_roi.slices]
        if not ref_sel.any():
            raise ValidationError(f"reference roi fully invalid in frame {j}")
        ref_phase = circular_mean(phase[reference_roi.slices][ref_sel])
        for i, (name, x, y) in enumerate(probes):
            win = _window_roi(x, y, probe_window, grid_shape)
            sel = valid[win.slices]
            if not sel.any():
                raise ValidationError(f"probe {name!r} window fully invalid in frame {j}")
            probe_phase = circular_mean(phase[win.slices][sel])
            raw[i, j] = wrap_phase(probe_phase - ref_phase)

    values = np.vstack([temporal_unwrap(raw[i]) for i in range(len(probes))])
    return ProbeSeries(
        names=tuple(n for n, _, _ in probes),
        coords=tuple((x, y) for _, x, y in probes),
        times=times,
        values=values,
    )
