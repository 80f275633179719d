"""Figure rendering for the CLI report path.

Renders matplotlib figures to files next to the delimited outputs; nothing
here feeds back into the numeric pipeline. The Agg backend is forced so the
commands run headless, and PNG metadata is stripped for reproducible bytes.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .calib import Interferogram
from .core import ScalarField
from .fileio import atomic_write_bytes

FIG_DPI = 150
_PNG_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=FIG_DPI, metadata=_PNG_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def render_interferograms(
    gram: Interferogram,
    path,
    fits=None,
    delay_to_phase: float | None = None,
):
    """Channel roi means vs delay, with the fitted sinusoids if available."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    colors = ("tab:blue", "tab:orange", "tab:green", "tab:red")
    for k in range(4):
        ax.plot(gram.delays, gram.means[k], "o", ms=4, color=colors[k], label=f"channel {k}")
        if fits is not None and delay_to_phase is not None:
            dense = np.linspace(gram.delays.min(), gram.delays.max(), 400)
            ax.plot(dense, fits[k].evaluate(dense, delay_to_phase), "-", lw=1, color=colors[k])
    ax.set_xlabel("delay (um)")
    ax.set_ylabel("mean count rate (counts/s)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def render_phase_visibility_sweep(delays, phases, visibilities, path):
    """Per-frame quadrature phase and visibility across a delay sweep."""
    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot(delays, phases, "o-", ms=4, color="tab:blue", label="phase")
    ax1.set_xlabel("delay (um)")
    ax1.set_ylabel("unwrapped phase (rad)", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(delays, visibilities, "s--", ms=4, color="tab:red", label="visibility")
    ax2.set_ylabel("visibility", color="tab:red")
    ax2.set_ylim(0, 1)
    fig.tight_layout()
    _save(fig, path)


def render_map(field: ScalarField, path, title: str, cmap: str, vmin=None, vmax=None):
    """One colormapped raster with a colorbar."""
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(field.values, origin="upper", cmap=cmap, vmin=vmin, vmax=vmax)
    ax.set_title(title)
    ax.set_xlabel("x (px)")
    ax.set_ylabel("y (px)")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    _save(fig, path)


def render_probe_series(csv_path, path):
    """Probe phase (or thickness) traces from a track CSV."""
    rows = list(csv.DictReader(open(csv_path, newline="")))
    if not rows:
        raise ValueError(f"{csv_path}: empty probe CSV")
    names = sorted({r["probe_name"] for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in names:
        pts = [(float(r["time_s"]), float(r["phase_rad"])) for r in rows if r["probe_name"] == name]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "-o", ms=3, label=name)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("referenced phase (rad)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
