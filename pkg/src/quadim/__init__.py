"""Quadrature imaging toolkit.

Simulates the four simultaneously acquired, pi/2-shifted signal channels of a
nonlinear interferometer and recovers phase and visibility images from a
single frame: channel calibration from delay sweeps, quadrature demodulation,
2D phase unwrapping, and dynamic-sample probe tracking.
"""

from .core import (
    GLOBAL_PHASES,
    CalibrationError,
    ComplexSample,
    DataFormatError,
    QuadimError,
    QuadratureFrame,
    Roi,
    ScalarField,
    SystemParams,
    ValidationError,
    field_stats,
    wrap_phase,
)
from .forward import (
    DryingFilmSpec,
    MaskSpec,
    TimelineSpec,
    detection_rate,
    make_phase_mask,
    make_timeline,
    mask_plateaus,
    simulate_delay_sweep,
    simulate_frame,
    simulate_sequence,
)
from .calib import (
    ChannelCalibration,
    Interferogram,
    QualityReport,
    SinusoidFit,
    calibrate_sweep,
    derive_corrections,
    extract_interferogram,
    fit_sinusoid,
    load_calibration,
    quality_report,
    save_calibration,
)
from .recon import (
    ReconResult,
    correct_channels,
    gaussian_blur,
    quadrature_phase,
    quadrature_visibility,
    reconstruct_frame,
    reference_to_region,
    register_channels,
    unwrap_2d,
)
from .dynamics import (
    MaterialParams,
    ProbeSeries,
    circular_mean,
    temporal_unwrap,
    thickness_from_phase,
    track_probes,
)
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "GLOBAL_PHASES",
    "CalibrationError",
    "ChannelCalibration",
    "ComplexSample",
    "DataFormatError",
    "DryingFilmSpec",
    "Interferogram",
    "MaskSpec",
    "MaterialParams",
    "ProbeSeries",
    "QuadimError",
    "QuadratureFrame",
    "QualityReport",
    "ReconResult",
    "Roi",
    "RunConfig",
    "ScalarField",
    "SinusoidFit",
    "SystemParams",
    "TimelineSpec",
    "ValidationError",
    "calibrate_sweep",
    "circular_mean",
    "correct_channels",
    "derive_corrections",
    "detection_rate",
    "extract_interferogram",
    "field_stats",
    "fit_sinusoid",
    "gaussian_blur",
    "load_calibration",
    "make_phase_mask",
    "make_timeline",
    "mask_plateaus",
    "quadrature_phase",
    "quadrature_visibility",
    "quality_report",
    "reconstruct_frame",
    "reference_to_region",
    "register_channels",
    "save_calibration",
    "simulate_delay_sweep",
    "simulate_frame",
    "simulate_sequence",
    "temporal_unwrap",
    "thickness_from_phase",
    "track_probes",
    "unwrap_2d",
    "wrap_phase",
]
