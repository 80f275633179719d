"""Run configuration: a flat, line-based ``key = value`` text file.

Unknown keys are rejected; every key has a documented default, and numeric
ranges are validated on load. ``auto`` resolves context-dependent values
(stage conversion from the signal wavelength, mask index from the target
plateau increment, calibration roi centered on the frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .core import (
    DEFAULT_PITCH_UM,
    DEFAULT_SIZE,
    ComplexSample,
    DataFormatError,
    Roi,
    SystemParams,
    ValidationError,
)
from .forward import DryingFilmSpec, MaskSpec, TimelineSpec, TIMELINE_KINDS

_MODES = ("static", "sweep", "timeline")
_SAMPLES = ("uniform", "mask", "files")


def _fmt_float(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "static"
    seed: int = 0
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE
    pitch_um: float = DEFAULT_PITCH_UM
    exposure_s: float = 0.5
    frame_interval_s: float = 0.5

    base_rate_cps: float = 2.0e4
    system_visibility: float = 0.67
    signal_wavelength_um: float = 0.808
    idler_wavelength_um: float = 1.557
    delay_to_phase_rad_per_um: float | None = None  # auto: 2*pi / signal wavelength
    gains: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    offsets_cps: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    noise: str = "none"
    drift_std_rad: float = 0.0

    sample: str = "uniform"
    sample_phase_file: str = ""
    sample_loss_file: str = ""

    mask_rows: int = 3
    mask_cols: int = 3
    mask_cell_um: float = 1500.0
    mask_thickness_min_um: float = 1.56
    mask_thickness_max_um: float = 2.87
    mask_effective_index: float | None = None  # auto: exact 0.3*pi increments
    mask_marker: bool = True

    sweep_start_um: float = 0.0
    sweep_step_um: float = 0.0505

    timeline: str = "drying_film"
    film_region: Roi = Roi(64, 0, 192, 256)
    film_phase_top_rad: float = 10.0 * math.pi
    film_phase_bottom_rad: float = 12.0 * math.pi
    film_rate_top_rad_per_s: float = 4.0
    film_rate_bottom_rad_per_s: float = 5.0
    scripted_dir: str = ""

    sigma_px: float = 1.5
    valid_threshold_rel: float = 1e-6
    probe_window_px: int = 5
    calib_roi: Roi | None = None  # auto: centered 100x100
    reference_roi: Roi = Roi(8, 8, 48, 48)

    # ------------------------------------------------------------------
    # Parsing / serialization
    # ------------------------------------------------------------------

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="ascii")
        except (OSError, UnicodeDecodeError) as exc:
            raise DataFormatError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, source=str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        from .fileio import parse_kv_text

        kv = parse_kv_text(text, source=source)
        kwargs = {}
        gains = list(cls().gains)
        offsets = list(cls().offsets_cps)
        known = {f.name for f in fields(cls)} - {"gains", "offsets_cps"}
        for key, value in kv.items():
            try:
                if key in ("gain_0", "gain_1", "gain_2", "gain_3"):
                    gains[int(key[-1])] = float(value)
                elif key in ("offset_0_cps", "offset_1_cps", "offset_2_cps", "offset_3_cps"):
                    offsets[int(key[7])] = float(value)
                elif key in known:
                    kwargs[key] = cls._parse_value(key, value)
                else:
                    raise DataFormatError(f"{source}: unknown config key {key!r}")
            except (ValueError, ValidationError) as exc:
                raise DataFormatError(f"{source}: bad value for {key!r}: {exc}") from exc
        cfg = cls(gains=tuple(gains), offsets_cps=tuple(offsets), **kwargs)
        cfg.validate(source)
        return cfg

    @classmethod
    def _parse_value(cls, key: str, value: str):
        kind = _FIELD_KINDS[key]
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "auto_float":
            return None if value == "auto" else float(value)
        if kind == "bool":
            if value not in ("true", "false"):
                raise ValueError(f"expected true/false, got {value!r}")
            return value == "true"
        if kind == "roi":
            return Roi.from_text(value)
        if kind == "auto_roi":
            return None if value == "auto" else Roi.from_text(value)
        return value  # plain string

    def to_text(self) -> str:
        lines = ["# quadim run configuration"]
        for key, kind in _FIELD_KINDS.items():
            if key == "gains":
                for k in range(4):
                    lines.append(f"gain_{k} = {_fmt_float(self.gains[k])}")
                continue
            if key == "offsets_cps":
                for k in range(4):
                    lines.append(f"offset_{k}_cps = {_fmt_float(self.offsets_cps[k])}")
                continue
            v = getattr(self, key)
            if kind == "float":
                text = _fmt_float(v)
            elif kind == "auto_float":
                text = "auto" if v is None else _fmt_float(v)
            elif kind == "bool":
                text = "true" if v else "false"
            elif kind == "roi":
                text = v.as_text()
            elif kind == "auto_roi":
                text = "auto" if v is None else v.as_text()
            else:
                text = str(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        from .fileio import atomic_write_text

        atomic_write_text(path, self.to_text())

    # ------------------------------------------------------------------
    # Validation and builders
    # ------------------------------------------------------------------

    def validate(self, source: str = "<config>"):
        def bad(msg):
            raise DataFormatError(f"{source}: {msg}")

        if self.mode not in _MODES:
            bad(f"mode must be one of {_MODES}")
        if self.sample not in _SAMPLES:
            bad(f"sample must be one of {_SAMPLES}")
        if self.timeline not in TIMELINE_KINDS:
            bad(f"timeline must be one of {TIMELINE_KINDS}")
        if self.width < 1 or self.height < 1:
            bad("width and height must be positive")
        if not self.pitch_um > 0:
            bad("pitch_um must be positive")
        if not self.exposure_s > 0:
            bad("exposure_s must be positive")
        if not self.frame_interval_s > 0:
            bad("frame_interval_s must be positive")
        if self.sigma_px < 0:
            bad("sigma_px must be non-negative")
        if self.valid_threshold_rel < 0:
            bad("valid_threshold_rel must be non-negative")
        if self.probe_window_px < 1:
            bad("probe_window_px must be at least 1")
        if self.drift_std_rad < 0:
            bad("drift_std_rad must be non-negative")
        if self.mode == "sweep" and self.sweep_step_um == 0:
            bad("mode=sweep requires a non-zero sweep_step_um")
        if self.sample == "files" and not self.sample_phase_file:
            bad("sample=files requires sample_phase_file")
        if self.mode == "timeline" and self.timeline == "scripted" and not self.scripted_dir:
            bad("scripted timeline requires scripted_dir")
        try:
            self.system_params()
            if self.sample == "mask":
                self.mask_spec()
        except ValidationError as exc:
            bad(str(exc))

    def system_params(self) -> SystemParams:
        return SystemParams(
            base_rate=self.base_rate_cps,
            system_visibility=self.system_visibility,
            signal_wavelength=self.signal_wavelength_um,
            idler_wavelength=self.idler_wavelength_um,
            delay_to_phase=self.delay_to_phase_rad_per_um,
            channel_gains=self.gains,
            channel_offsets=self.offsets_cps,
            noise=self.noise,
            rng_seed=self.seed,
        )

    def mask_spec(self) -> MaskSpec:
        return MaskSpec(
            rows=self.mask_rows,
            cols=self.mask_cols,
            cell_size=self.mask_cell_um,
            thickness_min=self.mask_thickness_min_um,
            thickness_max=self.mask_thickness_max_um,
            effective_index=self.mask_effective_index,
            marker=self.mask_marker,
        )

    def film_spec(self) -> DryingFilmSpec:
        return DryingFilmSpec(
            region=self.film_region,
            phase_top=self.film_phase_top_rad,
            phase_bottom=self.film_phase_bottom_rad,
            rate_top=self.film_rate_top_rad_per_s,
            rate_bottom=self.film_rate_bottom_rad_per_s,
        )

    def timeline_spec(self, frames: int, deltas=None) -> TimelineSpec:
        if self.timeline == "drying_film":
            return TimelineSpec(
                kind="drying_film",
                frames=frames,
                frame_interval=self.frame_interval_s,
                film=self.film_spec(),
            )
        return TimelineSpec(
            kind="scripted",
            frames=frames,
            frame_interval=self.frame_interval_s,
            deltas=deltas,
        )

    def build_sample(self) -> ComplexSample:
        """The base sample described by the config."""
        if self.sample == "uniform":
            return ComplexSample.uniform(self.width, self.height, self.pitch_um)
        if self.sample == "mask":
            from .forward import make_phase_mask

            return make_phase_mask(
                self.mask_spec(),
                self.width,
                self.height,
                self.pitch_um,
                self.idler_wavelength_um,
            )
        from .fileio import read_f32r

        phase = read_f32r(self.sample_phase_file)
        if self.sample_loss_file:
            loss = read_f32r(self.sample_loss_file)
            return ComplexSample(phase, loss)
        return ComplexSample.phase_only(phase.values, phase.pitch)

    def calibration_roi(self, shape: tuple[int, int]) -> Roi:
        if self.calib_roi is not None:
            return self.calib_roi
        rows, cols = shape
        return Roi.centered(shape, min(100, cols), min(100, rows))


_FIELD_KINDS: dict[str, str] = {
    "mode": "str",
    "seed": "int",
    "width": "int",
    "height": "int",
    "pitch_um": "float",
    "exposure_s": "float",
    "frame_interval_s": "float",
    "base_rate_cps": "float",
    "system_visibility": "float",
    "signal_wavelength_um": "float",
    "idler_wavelength_um": "float",
    "delay_to_phase_rad_per_um": "auto_float",
    "gains": "gains",
    "offsets_cps": "offsets",
    "noise": "str",
    "drift_std_rad": "float",
    "sample": "str",
    "sample_phase_file": "str",
    "sample_loss_file": "str",
    "mask_rows": "int",
    "mask_cols": "int",
    "mask_cell_um": "float",
    "mask_thickness_min_um": "float",
    "mask_thickness_max_um": "float",
    "mask_effective_index": "auto_float",
    "mask_marker": "bool",
    "sweep_start_um": "float",
    "sweep_step_um": "float",
    "timeline": "str",
    "film_region": "roi",
    "film_phase_top_rad": "float",
    "film_phase_bottom_rad": "float",
    "film_rate_top_rad_per_s": "float",
    "film_rate_bottom_rad_per_s": "float",
    "scripted_dir": "str",
    "sigma_px": "float",
    "valid_threshold_rel": "float",
    "probe_window_px": "int",
    "calib_roi": "auto_roi",
    "reference_roi": "roi",
}
