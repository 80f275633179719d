"""Single-frame reconstruction.

Pipeline order is fixed: register -> correct -> blur (on channels) ->
quadrature phase/visibility -> optional 2D unwrap -> optional referencing to
an object-free region. Filtering the channels rather than the phase map
avoids smoothing across phase wraps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calib import ChannelCalibration, IDENTITY_AFFINE
from .core import (
    TWO_PI,
    QuadratureFrame,
    Roi,
    ScalarField,
    ValidationError,
    as_values,
    wrap_phase,
)

DEFAULT_SIGMA_PX = 1.5
DEFAULT_REL_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ReconResult:
    """Reconstruction output: wrapped phase, visibility, validity, optional unwrap."""

    phase: ScalarField
    visibility: ScalarField
    valid: np.ndarray
    unwrapped: ScalarField | None = None

    def __post_init__(self):
        if self.phase.shape != self.visibility.shape or self.valid.shape != self.phase.shape:
            raise ValidationError("result fields must share dimensions")


# --------------------------------------------------------------------------
# Registration
# --------------------------------------------------------------------------

def invert_affine(affine) -> tuple:
    a, b, tx, c, d, ty = (float(v) for v in affine)
    det = a * d - b * c
    if abs(det) < 1e-12:
        raise ValidationError("affine transform is singular")
    ia, ib = d / det, -b / det
    ic, id_ = -c / det, a / det
    return (ia, ib, -(ia * tx + ib * ty), ic, id_, -(ic * tx + id_ * ty))


def warp_affine(src: np.ndarray, affine, out_shape: tuple[int, int]):
    """Resample ``src`` onto a grid relating to it through ``affine``.

    ``affine = (a, b, tx, c, d, ty)`` maps source pixel coordinates (x, y) to
    output coordinates ``(a*x + b*y + tx, c*x + d*y + ty)``. The output is
    sampled bilinearly at the inverse-mapped grid; samples falling outside the
    source are zero and reported invalid.

    Returns
    -------
    (warped, valid) : tuple of ndarray
    """
    src = np.asarray(src, dtype=float)
    rows, cols = out_shape
    ia, ib, itx, ic, id_, ity = invert_affine(affine)
    xs = np.arange(cols, dtype=float)
    ys = np.arange(rows, dtype=float)
    gx, gy = np.meshgrid(xs, ys)
    sx = ia * gx + ib * gy + itx
    sy = ic * gx + id_ * gy + ity
    h, w = src.shape
    valid = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)

    x0 = np.clip(np.floor(sx).astype(int), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(sy).astype(int), 0, max(h - 2, 0))
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    warped = (
        (1.0 - fy) * ((1.0 - fx) * src[y0, x0] + fx * src[y0, x1])
        + fy * ((1.0 - fx) * src[y1, x0] + fx * src[y1, x1])
    )
    warped[~valid] = 0.0
    return warped, valid


def register_channels(frame: QuadratureFrame, calib: ChannelCalibration):
    """Crop each channel to its roi and warp it onto the common grid.

    Returns
    -------
    (aligned, valid) : list of 4 ndarray, ndarray of bool
        ``valid`` is the AND of the four channels' in-source masks.
    """
    out_shape = (calib.rois[0].height, calib.rois[0].width)
    aligned = []
    valid = np.ones(out_shape, dtype=bool)
    for k in range(4):
        roi = calib.rois[k]
        roi.require_inside(frame.shape)
        cropped = frame.channels[k].values[roi.slices]
        if calib.affines[k] == IDENTITY_AFFINE:
            aligned.append(cropped.copy())
            continue
        warped, ok = warp_affine(cropped, calib.affines[k], out_shape)
        aligned.append(warped)
        valid &= ok
    return aligned, valid


def correct_channels(aligned, calib: ChannelCalibration):
    """Apply the per-channel affine count-rate corrections alpha*x + beta."""
    out = []
    for k in range(4):
        a, b = calib.alphas[k], calib.betas[k]
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValidationError("corrections must be finite")
        out.append(a * as_values(aligned[k]) + b)
    return out


# --------------------------------------------------------------------------
# Quadrature formulas
# --------------------------------------------------------------------------

def quadrature_phase(p0, p1, p2, p3, rel_threshold: float = DEFAULT_REL_THRESHOLD):
    """Pixel-wise phase ``atan2(P3 - P1, P0 - P2)``.

    The two-argument arctangent recovers the full ``(-pi, pi]`` range.
    Pixels whose modulation magnitude falls below ``rel_threshold`` times the
    channel sum are flagged invalid (the phase is undefined there).

    Returns
    -------
    (phase, valid) : tuple of ndarray
    """
    p0, p1, p2, p3 = (as_values(p) for p in (p0, p1, p2, p3))
    if not (p0.shape == p1.shape == p2.shape == p3.shape):
        raise ValidationError("channel dimensions do not match")
    num = p3 - p1
    den = p0 - p2
    modulation = np.hypot(num, den)
    total = p0 + p1 + p2 + p3
    valid = modulation >= rel_threshold * np.abs(total)
    valid &= (modulation > 0) | (total != 0)  # atan2(0, 0) is undefined
    phase = np.arctan2(num, den)
    # atan2 returns -pi for (-0.0, x<0); fold onto the (-pi, pi] convention.
    phase = np.where(phase <= -math.pi, math.pi, phase)
    return phase, valid


def quadrature_visibility(p0, p1, p2, p3):
    """Pixel-wise visibility ``2*sqrt((P3-P1)^2 + (P2-P0)^2) / sum``.

    Equals ``V_sys * (1 - L)`` for ideal quadrature channels. Zero-sum pixels
    are flagged invalid rather than raising.

    Returns
    -------
    (visibility, valid) : tuple of ndarray
    """
    p0, p1, p2, p3 = (as_values(p) for p in (p0, p1, p2, p3))
    if not (p0.shape == p1.shape == p2.shape == p3.shape):
        raise ValidationError("channel dimensions do not match")
    total = p0 + p1 + p2 + p3
    valid = total > 0.0
    num = 2.0 * np.hypot(p3 - p1, p2 - p0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vis = np.where(valid, num / np.where(valid, total, 1.0), 0.0)
    return vis, valid


# --------------------------------------------------------------------------
# Gaussian filter
# --------------------------------------------------------------------------

def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete Gaussian, truncated at radius ceil(3*sigma), unit sum."""
    radius = math.ceil(3.0 * sigma)
    k = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-0.5 * (k / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(f, sigma: float):
    """Separable Gaussian filter with reflect padding.

    The symmetric (edge-repeating) reflection keeps the field mean invariant
    for any kernel size; ``sigma = 0`` is the identity.
    """
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    values = as_values(f)
    if sigma == 0:
        out = values.copy()
    else:
        kernel = gaussian_kernel(sigma)
        radius = (kernel.size - 1) // 2
        h, w = values.shape
        padded = np.pad(values, radius, mode="symmetric")
        rows = np.zeros((h + 2 * radius, w))
        for i, weight in enumerate(kernel):
            rows += weight * padded[:, i : i + w]
        out = np.zeros((h, w))
        for i, weight in enumerate(kernel):
            out += weight * rows[i : i + h, :]
    if isinstance(f, ScalarField):
        return f.with_values(out)
    return out


# --------------------------------------------------------------------------
# 2D phase unwrapping (reliability-sorted region merging)
# --------------------------------------------------------------------------

def _wrapped_second_diffs(w: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Root-sum-square of wrapped second differences along h, v and diagonals.

    Terms involving a missing or masked neighbor contribute zero.
    """
    h_, w_ = w.shape

    def _shift(src, src_valid, sy, sx):
        # dst[r, c] = src[r - sy, c - sx] where available
        dst = np.zeros_like(src)
        dstv = np.zeros_like(src_valid)
        ys = slice(max(0, sy), h_ + min(0, sy))
        xs = slice(max(0, sx), w_ + min(0, sx))
        ys_src = slice(max(0, -sy), h_ + min(0, -sy))
        xs_src = slice(max(0, -sx), w_ + min(0, -sx))
        dst[ys, xs] = src[ys_src, xs_src]
        dstv[ys, xs] = src_valid[ys_src, xs_src]
        return dst, dstv

    total = np.zeros((h_, w_))
    for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
        prev, pv = _shift(w, valid, dy, dx)
        nxt, nv = _shift(w, valid, -dy, -dx)
        ok = pv & nv & valid
        diff = np.zeros((h_, w_))
        sel = np.where(ok)
        if sel[0].size:
            d1 = wrap_phase(prev[sel] - w[sel])
            d2 = wrap_phase(w[sel] - nxt[sel])
            diff[sel] = d1 - d2
        total += diff**2
    return np.sqrt(total)


def unwrap_2d(wrapped, mask=None) -> np.ndarray:
    """Reliability-sorted, noncontinuous-path 2D phase unwrapping.

    Pixel reliability is the inverse of the root-sum-square of wrapped second
    differences (horizontal, vertical, both diagonals). Edges between
    4-neighbors are scored by summed reliabilities and processed in descending
    order (ties broken by row-major edge index: all horizontal edges first,
    then vertical). A union-find structure merges pixel regions, offsetting
    the joining region by the multiple of 2*pi that minimizes the wrapped
    mismatch at the joining edge.

    The result is shifted so the most reliable pixel keeps its wrapped value;
    each connected valid region is unwrapped up to one common 2*pi*k offset.
    Masked pixels pass through unchanged.
    """
    w = as_values(wrapped)
    if mask is None:
        valid = np.ones(w.shape, dtype=bool)
    else:
        valid = np.asarray(mask, dtype=bool)
        if valid.shape != w.shape:
            raise ValidationError("mask dimensions do not match")
    if not valid.any():
        raise ValidationError("unwrap_2d requires at least one valid pixel")

    h, wd = w.shape
    diffs_rss = _wrapped_second_diffs(w, valid)
    with np.errstate(divide="ignore"):
        reliability = 1.0 / diffs_rss

    idx = np.arange(h * wd).reshape(h, wd)
    flat_w = w.ravel()
    flat_rel = reliability.ravel()

    # Horizontal (east) edges first, then vertical (south), each row-major.
    he_ok = valid[:, :-1] & valid[:, 1:]
    ve_ok = valid[:-1, :] & valid[1:, :]
    ep = np.concatenate([idx[:, :-1][he_ok].ravel(), idx[:-1, :][ve_ok].ravel()])
    eq = np.concatenate([idx[:, 1:][he_ok].ravel(), idx[1:, :][ve_ok].ravel()])
    scores = flat_rel[ep] + flat_rel[eq]
    order = np.argsort(-scores, kind="stable")

    delta = flat_w[eq] - flat_w[ep]
    # K(q) - K(p) = -(delta - wrap(delta)) / 2pi, an exact integer
    jumps = np.rint((delta - wrap_phase(delta)) / TWO_PI).astype(np.int64)

    n = h * wd
    parent = np.arange(n, dtype=np.int64)
    rank = np.zeros(n, dtype=np.int8)
    koff = np.zeros(n, dtype=np.int64)  # 2pi multiples relative to parent

    def find(i: int):
        root = i
        acc = 0
        while parent[root] != root:
            acc += koff[root]
            root = parent[root]
        # path compression, re-pointing every node at the root
        node = i
        k_node = acc
        while parent[node] != root:
            nxt = parent[node]
            k_next = k_node - koff[node]
            parent[node] = root
            koff[node] = k_node
            node = nxt
            k_node = k_next
        return root, acc

    for e in order:
        p = int(ep[e])
        q = int(eq[e])
        rp, kp = find(p)
        rq, kq = find(q)
        if rp == rq:
            continue
        # Enforce K(q) - K(p) = -jumps[e], i.e. the unwrapped difference at
        # the joining edge equals the wrapped pixel difference.
        jump = int(jumps[e])
        if rank[rp] < rank[rq]:
            parent[rp] = rq
            koff[rp] = kq - kp + jump
        else:
            parent[rq] = rp
            koff[rq] = kp - kq - jump
            if rank[rp] == rank[rq]:
                rank[rp] += 1

    flat_valid = valid.ravel()
    multiples = np.zeros(n, dtype=np.int64)
    for i in np.flatnonzero(flat_valid):
        _, ki = find(int(i))
        multiples[i] = ki

    rel_masked = np.where(flat_valid, flat_rel, -np.inf)
    anchor = int(np.argmax(rel_masked))
    multiples -= multiples[anchor]

    out = flat_w.copy()
    out[flat_valid] = flat_w[flat_valid] + TWO_PI * multiples[flat_valid]
    return out.reshape(h, wd)


def reference_to_region(unwrapped, roi: Roi, valid=None):
    """Zero the phase on an object-free region: subtract its mean.

    Cancels any global interferometer offset common to the whole field.
    """
    values = as_values(unwrapped)
    roi.require_inside(values.shape)
    region = values[roi.slices]
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        sel = valid[roi.slices]
        if not sel.any():
            raise ValidationError("reference roi contains no valid pixels")
        mean = float(region[sel].mean())
    else:
        mean = float(region.mean())
    out = values - mean
    if isinstance(unwrapped, ScalarField):
        return unwrapped.with_values(out)
    return out


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------

def reconstruct_frame(
    frame: QuadratureFrame,
    calib: ChannelCalibration,
    sigma: float = DEFAULT_SIGMA_PX,
    *,
    unwrap: bool = False,
    reference_roi: Roi | None = None,
    rel_threshold: float = DEFAULT_REL_THRESHOLD,
) -> ReconResult:
    """Run the full single-frame reconstruction pipeline."""
    aligned, valid = register_channels(frame, calib)
    corrected = correct_channels(aligned, calib)
    blurred = [gaussian_blur(c, sigma) for c in corrected]
    phase, ok_phase = quadrature_phase(*blurred, rel_threshold=rel_threshold)
    vis, ok_vis = quadrature_visibility(*blurred)
    valid = valid & ok_phase & ok_vis

    unwrapped_field = None
    if unwrap:
        if not valid.any():
            raise ValidationError("cannot unwrap: no valid pixels")
        unwrapped = unwrap_2d(phase, valid)
        if reference_roi is not None:
            unwrapped = reference_to_region(unwrapped, reference_roi, valid)
        unwrapped_field = ScalarField(unwrapped, frame.pitch)

    return ReconResult(
        phase=ScalarField(phase, frame.pitch),
        visibility=ScalarField(vis, frame.pitch),
        valid=valid,
        unwrapped=unwrapped_field,
    )
