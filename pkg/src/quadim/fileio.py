"""On-disk formats.

* ``.f32r``: one ASCII header line ``"width height pitch\\n"`` followed by the
  raw little-endian float32 raster, row-major.
* ``.pgm``: binary PGM (P5); 16-bit samples are big-endian per the Netpbm
  convention. Used for integer count images and boolean masks.
* frame directory: ``ch0..ch3`` rasters plus ``meta.txt`` with line-based
  ``key = value`` entries (``exposure_s``, ``timestamp_s``, optional
  ``delay_um``, ``pitch_um``).

All text is ASCII with LF line endings; writes go through a temp file and an
atomic rename.
"""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .core import DataFormatError, QuadratureFrame, ScalarField, ValidationError


# --------------------------------------------------------------------------
# Atomic writes
# --------------------------------------------------------------------------

def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("ascii"))


# --------------------------------------------------------------------------
# key = value text
# --------------------------------------------------------------------------

def parse_kv_text(text: str, source: str = "<text>") -> dict[str, str]:
    """Parse line-based ``key = value`` text with ``#`` comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise DataFormatError(f"{source}:{lineno}: empty key")
        if key in out:
            raise DataFormatError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_kv_file(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    return parse_kv_text(text, source=str(path))


# --------------------------------------------------------------------------
# .f32r rasters
# --------------------------------------------------------------------------

def f32r_bytes(field: ScalarField) -> bytes:
    header = f"{field.width} {field.height} {field.pitch:.17g}\n".encode("ascii")
    return header + field.values.astype("<f4").tobytes(order="C")


def write_f32r(path, field: ScalarField):
    atomic_write_bytes(path, f32r_bytes(field))


def read_f32r(path) -> ScalarField:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    nl = data.find(b"\n")
    if nl < 0:
        raise DataFormatError(f"{path}: missing f32r header line")
    try:
        w_s, h_s, pitch_s = data[:nl].decode("ascii").split()
        width, height, pitch = int(w_s), int(h_s), float(pitch_s)
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad f32r header: {exc}") from exc
    body = data[nl + 1 :]
    expected = width * height * 4
    if len(body) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} raster bytes, found {len(body)}"
        )
    values = np.frombuffer(body, dtype="<f4").reshape(height, width).astype(np.float64)
    try:
        return ScalarField(values, pitch)
    except ValidationError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# PGM (P5)
# --------------------------------------------------------------------------

def pgm_bytes(values: np.ndarray, maxval: int = 65535) -> bytes:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValidationError("PGM writer needs a 2D array")
    if not 0 < maxval < 65536:
        raise ValidationError("PGM maxval must lie in [1, 65535]")
    rounded = np.rint(arr)
    if rounded.min() < 0 or rounded.max() > maxval:
        raise ValidationError("PGM sample out of range")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    if maxval < 256:
        body = rounded.astype(np.uint8).tobytes(order="C")
    else:
        body = rounded.astype(">u2").tobytes(order="C")
    return header + body


def write_pgm(path, values: np.ndarray, maxval: int = 65535):
    atomic_write_bytes(path, pgm_bytes(values, maxval))


_PGM_TOKEN = re.compile(rb"^(?:\s|#[^\n]*\n)*(\S+)")


def read_pgm(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    pos = 0
    tokens = []
    while len(tokens) < 4:
        m = _PGM_TOKEN.match(data[pos:])
        if not m:
            raise DataFormatError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos += m.end(1)
    if tokens[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad PGM header: {exc}") from exc
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height
    body = data[pos : pos + count * dtype.itemsize]
    if len(body) != count * dtype.itemsize:
        raise DataFormatError(f"{path}: truncated PGM raster")
    return np.frombuffer(body, dtype=dtype).reshape(height, width).astype(np.float64)


# --------------------------------------------------------------------------
# Frame directories
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_frame_dir(dirpath, frame: QuadratureFrame, truth=None):
    """Write a quadrature frame (and optionally its ground truth) to a directory."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for k in range(4):
        write_f32r(dirpath / f"ch{k}.f32r", frame.channels[k])
    lines = [
        f"exposure_s = {_fmt(frame.exposure)}",
        f"timestamp_s = {_fmt(frame.timestamp)}",
        f"pitch_um = {_fmt(frame.pitch)}",
    ]
    if frame.delay is not None:
        lines.append(f"delay_um = {_fmt(frame.delay)}")
    atomic_write_text(dirpath / "meta.txt", "\n".join(lines) + "\n")
    if truth is not None:
        write_f32r(dirpath / "truth_phase.f32r", truth.phase)
        write_f32r(dirpath / "truth_loss.f32r", truth.loss)


def read_frame_dir(dirpath) -> QuadratureFrame:
    dirpath = Path(dirpath)
    meta_path = dirpath / "meta.txt"
    meta = read_kv_file(meta_path)
    try:
        exposure = float(meta["exposure_s"])
        timestamp = float(meta.get("timestamp_s", "0"))
        delay = float(meta["delay_um"]) if "delay_um" in meta else None
        pitch = float(meta["pitch_um"]) if "pitch_um" in meta else None
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{meta_path}: bad or missing metadata: {exc}") from exc

    channels = []
    for k in range(4):
        f32 = dirpath / f"ch{k}.f32r"
        pgm = dirpath / f"ch{k}.pgm"
        if f32.exists():
            channels.append(read_f32r(f32))
        elif pgm.exists():
            if pitch is None:
                raise DataFormatError(f"{meta_path}: pitch_um required for PGM channels")
            channels.append(ScalarField(read_pgm(pgm), pitch))
        else:
            raise DataFormatError(f"{dirpath}: missing channel image ch{k}")
    try:
        return QuadratureFrame(
            channels=tuple(channels), exposure=exposure, timestamp=timestamp, delay=delay
        )
    except ValidationError as exc:
        raise DataFormatError(f"{dirpath}: {exc}") from exc


def read_frame_truth(dirpath):
    """Ground-truth (phase, loss) fields of a simulated frame, if present."""
    dirpath = Path(dirpath)
    phase = dirpath / "truth_phase.f32r"
    loss = dirpath / "truth_loss.f32r"
    if not phase.exists():
        return None
    return read_f32r(phase), (read_f32r(loss) if loss.exists() else None)


def list_frame_dirs(parent) -> list[Path]:
    parent = Path(parent)
    if not parent.is_dir():
        raise DataFormatError(f"{parent} is not a directory")
    dirs = sorted(p for p in parent.iterdir() if p.is_dir() and p.name.startswith("frame_"))
    if not dirs:
        # a bare frame directory is also accepted
        if (parent / "meta.txt").exists():
            return [parent]
        raise DataFormatError(f"{parent}: no frame_* directories found")
    return dirs


# --------------------------------------------------------------------------
# Manifest and probes
# --------------------------------------------------------------------------

def write_manifest(root):
    """Write ``manifest.txt``: sha256 and relative path of every file under root."""
    root = Path(root)
    entries = []
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "manifest.txt":
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            entries.append(f"{digest}  {p.relative_to(root).as_posix()}")
    atomic_write_text(root / "manifest.txt", "\n".join(entries) + "\n")


def read_probes_file(path) -> list[tuple[str, int, int]]:
    """Parse a probes file with lines ``name x y`` (``#`` comments allowed)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    probes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 'name x y', got {raw!r}")
        try:
            probes.append((parts[0], int(parts[1]), int(parts[2])))
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: bad coordinates: {exc}") from exc
    if not probes:
        raise DataFormatError(f"{path}: no probes defined")
    return probes
