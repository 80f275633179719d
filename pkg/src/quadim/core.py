"""Core domain types and field arithmetic for quadrature imaging.

Conventions used throughout the package:

* images are row-major 2D float64 arrays indexed ``[row, col]`` (i.e. ``[y, x]``)
* wrapped phase lives in the half-open interval ``(-pi, pi]``
* pixel pitch is metadata only; algorithms work in pixel units and physical
  units enter solely through thickness and delay conversions

All types are immutable once constructed and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Default synthetic frame geometry: 256 px at 43 um/px is roughly an 11 mm
# field of view.
DEFAULT_SIZE = 256
DEFAULT_PITCH_UM = 43.0

# Global phases of the four simultaneously recorded channels: k * pi/2.
GLOBAL_PHASES = tuple(k * math.pi / 2.0 for k in range(4))


class QuadimError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(QuadimError, ValueError):
    """Invalid argument or malformed domain object."""


class DataFormatError(QuadimError):
    """Malformed on-disk data (rasters, frame directories, text files)."""


class CalibrationError(QuadimError):
    """Calibration cannot be derived from the supplied sweep."""


def wrap_phase(x):
    """Wrap phase to ``(-pi, pi]``.

    Accepts a scalar or an array; returns the same shape. The mapping is
    idempotent and ``wrap_phase(x + 2*pi*k) == wrap_phase(x)`` for integer k.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("wrap_phase requires finite input")
    wrapped = math.pi - np.mod(math.pi - arr, TWO_PI)
    if arr.ndim == 0:
        return float(wrapped)
    return wrapped


def as_values(obj) -> np.ndarray:
    """Return the float array behind a ScalarField or array-like."""
    if isinstance(obj, ScalarField):
        return obj.values
    return np.asarray(obj, dtype=float)


@dataclass(frozen=True)
class Roi:
    """Rectangular region of interest in pixel coordinates.

    ``x0``/``y0`` are the column/row of the top-left pixel; the region covers
    ``width`` columns and ``height`` rows.
    """

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        for name in ("x0", "y0", "width", "height"):
            v = getattr(self, name)
            if int(v) != v:
                raise ValidationError(f"Roi.{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("Roi width and height must be positive")
        if self.x0 < 0 or self.y0 < 0:
            raise ValidationError("Roi origin must be non-negative")

    @property
    def slices(self) -> tuple[slice, slice]:
        return (
            slice(self.y0, self.y0 + self.height),
            slice(self.x0, self.x0 + self.width),
        )

    def fits(self, shape: tuple[int, int]) -> bool:
        rows, cols = shape
        return self.y0 + self.height <= rows and self.x0 + self.width <= cols

    def require_inside(self, shape: tuple[int, int]):
        if not self.fits(shape):
            raise ValidationError(
                f"Roi {self.as_text()} does not fit inside a {shape[1]}x{shape[0]} field"
            )

    @classmethod
    def centered(cls, shape: tuple[int, int], width: int = 100, height: int = 100) -> "Roi":
        rows, cols = shape
        return cls((cols - width) // 2, (rows - height) // 2, width, height)

    def as_text(self) -> str:
        return f"{self.x0} {self.y0} {self.width} {self.height}"

    @classmethod
    def from_text(cls, text: str) -> "Roi":
        parts = text.split()
        if len(parts) != 4:
            raise ValidationError(f"expected 'x0 y0 width height', got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise ValidationError(f"bad Roi value {text!r}: {exc}") from exc


@dataclass(frozen=True)
class ScalarField:
    """2D raster of real values with a pixel pitch in micrometers/pixel."""

    values: np.ndarray
    pitch: float = DEFAULT_PITCH_UM

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError("ScalarField values must be a non-empty 2D array")
        if not np.all(np.isfinite(v)):
            raise ValidationError("ScalarField values must be finite")
        if not (self.pitch > 0 and math.isfinite(self.pitch)):
            raise ValidationError("ScalarField pitch must be positive and finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def roi_values(self, roi: Roi) -> np.ndarray:
        roi.require_inside(self.shape)
        return self.values[roi.slices]

    def with_values(self, values) -> "ScalarField":
        """New field with the same pitch and different values."""
        return ScalarField(values, self.pitch)


def field_stats(f: ScalarField, roi: Roi) -> tuple[float, float]:
    """Mean and population standard deviation over a region of interest."""
    vals = f.roi_values(roi)
    return float(vals.mean()), float(vals.std())


@dataclass(frozen=True)
class ComplexSample:
    """Object in the idler path: phase map [rad] and loss map in [0, 1]."""

    phase: ScalarField
    loss: ScalarField

    def __post_init__(self):
        if self.phase.shape != self.loss.shape:
            raise ValidationError("phase and loss fields must share dimensions")
        if self.phase.pitch != self.loss.pitch:
            raise ValidationError("phase and loss fields must share pitch")
        lo = self.loss.values
        if lo.min() < 0.0 or lo.max() > 1.0:
            raise ValidationError("loss values must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.phase.shape

    @property
    def pitch(self) -> float:
        return self.phase.pitch

    @classmethod
    def uniform(
        cls,
        width: int = DEFAULT_SIZE,
        height: int = DEFAULT_SIZE,
        pitch: float = DEFAULT_PITCH_UM,
    ) -> "ComplexSample":
        """Empty idler path: zero phase, zero loss."""
        zeros = np.zeros((height, width))
        return cls(ScalarField(zeros, pitch), ScalarField(zeros, pitch))

    @classmethod
    def phase_only(cls, phase_values, pitch: float = DEFAULT_PITCH_UM) -> "ComplexSample":
        """Lossless object described by a phase map alone."""
        phase = ScalarField(phase_values, pitch)
        return cls(phase, phase.with_values(np.zeros(phase.shape)))


@dataclass(frozen=True)
class QuadratureFrame:
    """The four simultaneously acquired channel images.

    Channel k carries the interference at global phase ``k*pi/2`` (on top of
    any common base phase). ``delay`` is only present for calibration sweeps.
    """

    channels: tuple[ScalarField, ScalarField, ScalarField, ScalarField]
    exposure: float
    timestamp: float = 0.0
    delay: float | None = None

    def __post_init__(self):
        chans = tuple(self.channels)
        if len(chans) != 4:
            raise ValidationError("QuadratureFrame requires exactly 4 channels")
        shape, pitch = chans[0].shape, chans[0].pitch
        for ch in chans:
            if ch.shape != shape or ch.pitch != pitch:
                raise ValidationError("all four channels must share dimensions and pitch")
            if ch.values.min() < 0.0:
                raise ValidationError("channel values must be non-negative")
        if not self.exposure > 0:
            raise ValidationError("exposure must be positive")
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "exposure", float(self.exposure))
        object.__setattr__(self, "timestamp", float(self.timestamp))
        if self.delay is not None:
            object.__setattr__(self, "delay", float(self.delay))

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels[0].shape

    @property
    def pitch(self) -> float:
        return self.channels[0].pitch


NOISE_MODES = ("none", "poisson")


@dataclass(frozen=True)
class SystemParams:
    """Interferometer model parameters for the forward simulation.

    ``delay_to_phase`` defaults to one phase period per signal wavelength of
    stage travel (single-pass geometry); pass an explicit value for other
    stage layouts.
    """

    base_rate: float = 2.0e4
    system_visibility: float = 0.67
    signal_wavelength: float = 0.808
    idler_wavelength: float = 1.557
    delay_to_phase: float | None = None
    channel_gains: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    channel_offsets: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    noise: str = "none"
    rng_seed: int = 0

    def __post_init__(self):
        if not self.base_rate > 0:
            raise ValidationError("base_rate must be positive")
        if not 0.0 <= self.system_visibility <= 1.0:
            raise ValidationError("system_visibility must lie in [0, 1]")
        if not (self.signal_wavelength > 0 and self.idler_wavelength > 0):
            raise ValidationError("wavelengths must be positive")
        if self.delay_to_phase is None:
            object.__setattr__(self, "delay_to_phase", TWO_PI / self.signal_wavelength)
        if not self.delay_to_phase > 0:
            raise ValidationError("delay_to_phase must be positive")
        gains = tuple(float(g) for g in self.channel_gains)
        offsets = tuple(float(o) for o in self.channel_offsets)
        if len(gains) != 4 or len(offsets) != 4:
            raise ValidationError("four channel gains and offsets are required")
        if min(gains) <= 0:
            raise ValidationError("channel gains must be positive")
        if min(offsets) < 0:
            raise ValidationError("channel offsets must be non-negative")
        object.__setattr__(self, "channel_gains", gains)
        object.__setattr__(self, "channel_offsets", offsets)
        if self.noise not in NOISE_MODES:
            raise ValidationError(f"noise must be one of {NOISE_MODES}")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ValidationError("rng_seed must be a non-negative integer")
        object.__setattr__(self, "rng_seed", int(self.rng_seed))
