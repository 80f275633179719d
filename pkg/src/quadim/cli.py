"""Command-line interface.

Subcommands: ``simulate | calibrate | reconstruct | track | maskgen | report``.
Exit codes: 0 success, 1 usage error, 2 data/validation error. All numeric
outputs are deterministic given (inputs, seed); re-runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import calib as calib_mod
from . import config as config_mod
from . import dynamics, fileio, forward, recon
from .core import QuadimError, Roi, ValidationError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize quadrature frames")
    p.add_argument("--config", help="run configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--frames", type=int, default=1, help="number of frames")
    p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("calibrate", help="derive channel corrections from a delay sweep")
    p.add_argument("sweep_dir", help="directory of sweep frame_* subdirectories")
    p.add_argument("--config", help="run configuration file")
    p.add_argument("--out", required=True, help="calibration file to write")
    p.add_argument("--kappa-search", action="store_true", help="grid-search the stage conversion")

    p = sub.add_parser("reconstruct", help="single-frame phase/visibility reconstruction")
    p.add_argument("frame_dir", help="frame directory")
    p.add_argument("--calib", required=True, help="calibration file")
    p.add_argument("--config", help="run configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sigma", type=float, help="Gaussian filter sigma in px (default from config)")
    p.add_argument("--unwrap", action="store_true", help="also write the 2D-unwrapped phase")
    p.add_argument("--ref-roi", help="reference region 'x0 y0 w h' for the unwrapped phase")

    p = sub.add_parser("track", help="track probe phases through a frame sequence")
    p.add_argument("frames_dir", help="directory of frame_* subdirectories")
    p.add_argument("--calib", required=True, help="calibration file")
    p.add_argument("--config", help="run configuration file")
    p.add_argument("--probes", required=True, help="probes file with lines 'name x y'")
    p.add_argument("--ref-roi", help="reference region 'x0 y0 w h' (default from config)")
    p.add_argument("--window", type=int, help="probe window in px (default from config)")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument(
        "--thickness-index",
        type=float,
        help="material refractive index: adds a thickness_um column",
    )

    p = sub.add_parser("maskgen", help="write the stepped phase-mask sample")
    p.add_argument("--config", help="run configuration file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", help="render figures from pipeline outputs")
    rsub = p.add_subparsers(dest="report_kind", required=True)
    rp = rsub.add_parser("sweep", help="interferograms and phase/visibility of a sweep")
    rp.add_argument("sweep_dir")
    rp.add_argument("--calib", help="calibration file (enables corrected view)")
    rp.add_argument("--config", help="run configuration file")
    rp.add_argument("--out", required=True)
    rp = rsub.add_parser("frame", help="phase/visibility maps of a reconstruction output")
    rp.add_argument("recon_dir")
    rp.add_argument("--out", required=True)
    rp = rsub.add_parser("track", help="probe series plot from a track CSV")
    rp.add_argument("csv_file")
    rp.add_argument("--out", required=True)

    return parser


def _load_config(path) -> config_mod.RunConfig:
    if path is None:
        return config_mod.RunConfig()
    return config_mod.RunConfig.load(path)


def _read_sweep(sweep_dir):
    frames = [fileio.read_frame_dir(d) for d in fileio.list_frame_dirs(sweep_dir)]
    frames.sort(key=lambda f: (f.delay if f.delay is not None else f.timestamp))
    return frames


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.frames < 1:
        raise ValidationError("--frames must be at least 1")
    seed = cfg.seed if args.seed is None else args.seed
    params = cfg.system_params()
    base = cfg.build_sample()
    out = Path(args.out)

    if cfg.mode == "sweep":
        delays = cfg.sweep_start_um + cfg.sweep_step_um * np.arange(args.frames)
        frames = forward.simulate_delay_sweep(base, params, delays, cfg.exposure_s, seed)
        samples = [base] * args.frames
    elif cfg.mode == "timeline":
        spec = cfg.timeline_spec(args.frames, deltas=_load_scripted(cfg, args.frames))
        samples = forward.make_timeline(spec, base)
        frames = forward.simulate_sequence(
            samples, params, cfg.frame_interval_s, cfg.exposure_s, seed, cfg.drift_std_rad
        )
    else:
        samples = [base] * args.frames
        frames = forward.simulate_sequence(
            samples, params, cfg.frame_interval_s, cfg.exposure_s, seed, cfg.drift_std_rad
        )

    for i, (frame, sample) in enumerate(zip(frames, samples)):
        fileio.write_frame_dir(out / f"frame_{i:04d}", frame, truth=sample)
    fileio.write_manifest(out)
    print(f"wrote {len(frames)} frame(s) to {out}")
    return 0


def _load_scripted(cfg: config_mod.RunConfig, frames: int):
    if cfg.mode != "timeline" or cfg.timeline != "scripted":
        return None
    files = sorted(Path(cfg.scripted_dir).glob("*.f32r"))
    if len(files) < frames:
        raise ValidationError(
            f"scripted_dir {cfg.scripted_dir} holds {len(files)} deltas, need {frames}"
        )
    return tuple(fileio.read_f32r(f).values for f in files[:frames])


# ----------------------------------------------------------------------
# calibrate
# ----------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    cfg = _load_config(args.config)
    frames = _read_sweep(args.sweep_dir)
    if len(frames) < 3:
        raise calib_mod.CalibrationError("calibration needs at least 3 sweep frames")
    stat_roi = cfg.calibration_roi(frames[0].shape)
    rows, cols = frames[0].shape
    full = Roi(0, 0, cols, rows)
    # Interferograms average over the marked statistics area; the stored crop
    # regions cover the whole (pre-split) channel images.
    calibration = calib_mod.calibrate_sweep(
        frames,
        (stat_roi,) * 4,
        cfg.system_params().delay_to_phase,
        kappa_search=args.kappa_search,
        register_rois=(full,) * 4,
    )
    calib_mod.save_calibration(args.out, calibration)
    report = calib_mod.quality_report(frames, calibration, rois=stat_roi)
    print(report)
    return 0


# ----------------------------------------------------------------------
# reconstruct
# ----------------------------------------------------------------------

def cmd_reconstruct(args) -> int:
    cfg = _load_config(args.config)
    frame = fileio.read_frame_dir(args.frame_dir)
    calibration = calib_mod.load_calibration(args.calib)
    sigma = cfg.sigma_px if args.sigma is None else args.sigma
    ref_roi = Roi.from_text(args.ref_roi) if args.ref_roi else None
    result = recon.reconstruct_frame(
        frame,
        calibration,
        sigma,
        unwrap=args.unwrap,
        reference_roi=ref_roi,
        rel_threshold=cfg.valid_threshold_rel,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_f32r(out / "phase.f32r", result.phase)
    fileio.write_f32r(out / "visibility.f32r", result.visibility)
    fileio.write_pgm(out / "mask.pgm", result.valid.astype(np.uint8) * 255, maxval=255)
    if result.unwrapped is not None:
        fileio.write_f32r(out / "unwrapped_phase.f32r", result.unwrapped)
    print(f"wrote reconstruction to {out}")
    return 0


# ----------------------------------------------------------------------
# track
# ----------------------------------------------------------------------

def cmd_track(args) -> int:
    cfg = _load_config(args.config)
    frames = [fileio.read_frame_dir(d) for d in fileio.list_frame_dirs(args.frames_dir)]
    frames.sort(key=lambda f: f.timestamp)
    calibration = calib_mod.load_calibration(args.calib)
    probes = fileio.read_probes_file(args.probes)
    ref_roi = Roi.from_text(args.ref_roi) if args.ref_roi else cfg.reference_roi
    window = cfg.probe_window_px if args.window is None else args.window
    series = dynamics.track_probes(
        frames,
        calibration,
        probes,
        ref_roi,
        probe_window=window,
        sigma=cfg.sigma_px,
        rel_threshold=cfg.valid_threshold_rel,
    )
    material = None
    if args.thickness_index is not None:
        material = dynamics.MaterialParams(args.thickness_index, cfg.idler_wavelength_um)
    fileio.atomic_write_text(args.out, series.to_csv_text(material))
    print(f"wrote {len(series.names) * series.times.size} probe sample(s) to {args.out}")
    return 0


# ----------------------------------------------------------------------
# maskgen
# ----------------------------------------------------------------------

def cmd_maskgen(args) -> int:
    cfg = _load_config(args.config)
    spec = cfg.mask_spec()
    sample = forward.make_phase_mask(
        spec, cfg.width, cfg.height, cfg.pitch_um, cfg.idler_wavelength_um
    )
    plateaus = forward.mask_plateaus(
        spec, cfg.width, cfg.height, cfg.pitch_um, cfg.idler_wavelength_um
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_f32r(out / "mask_phase.f32r", sample.phase)
    fileio.write_f32r(out / "mask_loss.f32r", sample.loss)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "row", "col", "x0", "y0", "width", "height", "thickness_um", "phase_rad"])
    for p in plateaus:
        writer.writerow(
            [p.step, p.row, p.col, p.roi.x0, p.roi.y0, p.roi.width, p.roi.height]
            + [format(p.thickness, ".17g"), format(p.phase, ".17g")]
        )
    fileio.atomic_write_text(out / "plateaus.csv", buf.getvalue())
    print(f"wrote mask sample to {out}")
    return 0


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

def cmd_report(args) -> int:
    from . import report

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.report_kind == "sweep":
        cfg = _load_config(args.config)
        frames = _read_sweep(args.sweep_dir)
        if args.calib:
            calibration = calib_mod.load_calibration(args.calib)
            roi = calibration.rois[0]
        else:
            calibration = calib_mod.ChannelCalibration.identity(
                frames[0].shape, cfg.calibration_roi(frames[0].shape)
            )
            roi = calibration.rois[0]
        gram = calib_mod.extract_interferogram(frames, calibration.rois)
        corrected = gram.means * np.array(calibration.alphas)[:, None] + np.array(
            calibration.betas
        )[:, None]
        phases = np.empty(gram.delays.size)
        vis = np.empty(gram.delays.size)
        for j in range(gram.delays.size):
            m = corrected[:, j]
            phases[j], _ = recon.quadrature_phase(m[0], m[1], m[2], m[3])
            vis[j], _ = recon.quadrature_visibility(m[0], m[1], m[2], m[3])
        phases = dynamics.temporal_unwrap(phases)
        corrected_fits = None
        if calibration.fits is not None:
            corrected_fits = tuple(
                calib_mod.SinusoidFit(
                    offset=calibration.alphas[k] * f.offset + calibration.betas[k],
                    amplitude=calibration.alphas[k] * f.amplitude,
                    phase_origin=f.phase_origin,
                    visibility=f.visibility,
                    residual_rms=calibration.alphas[k] * f.residual_rms,
                )
                for k, f in enumerate(calibration.fits)
            )
        report.render_interferograms(
            calib_mod.Interferogram(gram.delays, corrected),
            out / "interferograms.png",
            fits=corrected_fits,
            delay_to_phase=cfg.system_params().delay_to_phase,
        )
        report.render_phase_visibility_sweep(
            gram.delays, phases, vis, out / "phase_visibility.png"
        )
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delay_um", "mean_ch0", "mean_ch1", "mean_ch2", "mean_ch3", "phase_rad", "visibility"])
        for j, d in enumerate(gram.delays):
            writer.writerow(
                [format(d, ".17g")]
                + [format(corrected[k, j], ".17g") for k in range(4)]
                + [format(phases[j], ".17g"), format(vis[j], ".17g")]
            )
        fileio.atomic_write_text(out / "sweep.csv", buf.getvalue())
    elif args.report_kind == "frame":
        rdir = Path(args.recon_dir)
        phase = fileio.read_f32r(rdir / "phase.f32r")
        visibility = fileio.read_f32r(rdir / "visibility.f32r")
        report.render_map(
            phase, out / "phase.png", "wrapped phase (rad)", "twilight",
            vmin=-np.pi, vmax=np.pi,
        )
        report.render_map(
            visibility, out / "visibility.png", "visibility", "viridis", vmin=0.0
        )
        unwrapped = rdir / "unwrapped_phase.f32r"
        if unwrapped.exists():
            report.render_map(
                fileio.read_f32r(unwrapped), out / "unwrapped_phase.png",
                "unwrapped phase (rad)", "magma",
            )
    else:
        report.render_probe_series(args.csv_file, out / "probes.png")
    print(f"wrote report to {out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "reconstruct": cmd_reconstruct,
    "track": cmd_track,
    "maskgen": cmd_maskgen,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except QuadimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
