"""Robustness maps that decide where the telephoto detail may be trusted.

Every map is a float array in [0, 1] where 1 means "exclude from fusion".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .coarse_align import Rect
from .imaging import FlowField, InvalidInputError, as_float, downup, sample_bilinear


@dataclass(frozen=True)
class DefocusParams:
    gamma: float = 2.0
    sigma_f: float = 1.0
    k_clusters: int = 3
    kmeans_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0 or self.sigma_f <= 0 or self.k_clusters < 1 or self.kmeans_iters < 0:
            raise InvalidInputError(f"invalid defocus parameters: {self}")


@dataclass(frozen=True)
class OcclusionParams:
    s: float = 0.5

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidInputError("occlusion scale s must be > 0")


@dataclass(frozen=True)
class UncertaintyParams:
    s_max: float = 8.0

    def __post_init__(self):
        if not self.s_max > 0:
            raise InvalidInputError("s_max must be > 0")


@dataclass(frozen=True)
class RejectionParams:
    patch: int = 16
    stride: int = 8
    epsilon0: float = 1e-4

    def __post_init__(self):
        if self.stride < 1 or self.patch < self.stride or self.epsilon0 <= 0:
            raise InvalidInputError(f"invalid rejection parameters: {self}")


@dataclass
class FocusEstimate:
    focus_flow: tuple[float, float]
    cluster_sizes: list[int] = field(default_factory=list)
    chosen_cluster: int = -1
    degenerate: bool = False


def kmeans_flow(vectors, k, iters):
    """Lloyd k-means on ``(N, 2)`` flow vectors, deterministic.

    Centroids start at the vectors sitting at evenly spaced quantiles of the
    flow magnitude, measured from the componentwise median vector so that a
    constant flow offset does not change the seeding. Ties in assignment go to
    the lowest centroid index; empty clusters keep their previous centroid.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(vectors)
    k = min(k, n)
    centered = vectors - np.median(vectors, axis=0)
    mag = np.hypot(centered[:, 0], centered[:, 1])
    order = np.argsort(mag, kind="stable")
    if k == 1:
        picks = [n // 2]
    else:
        picks = [int(round(q * (n - 1))) for q in np.linspace(0.0, 1.0, k)]
    centroids = vectors[order[picks]].copy()
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(max(iters, 1)):
        d = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d, axis=1)
        counts = np.bincount(labels, minlength=k)
        sx = np.bincount(labels, vectors[:, 0], minlength=k)
        sy = np.bincount(labels, vectors[:, 1], minlength=k)
        live = counts > 0
        centroids[live, 0] = sx[live] / counts[live]
        centroids[live, 1] = sy[live] / counts[live]
    # sizes reflect the final centroids
    d = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d, axis=1)
    return centroids, np.bincount(labels, minlength=k), labels


def defocus_map(fwd: FlowField, focus_roi, p: DefocusParams | None = None):
    """Sigmoid of the flow distance to the in-focus cluster (0 = sharp in T).

    ``focus_roi`` is given in flow-resolution pixels.
    """
    p = p or DefocusParams()
    roi = Rect.from_any(focus_roi)
    h, w = fwd.shape
    if roi.empty:
        return np.zeros((h, w), dtype=fwd.u.dtype), FocusEstimate((0.0, 0.0), degenerate=True)
    if not roi.inside(w, h):
        raise InvalidInputError(f"focus ROI {roi} outside flow field {w}x{h}")
    ys, xs = roi.slices()
    vecs = np.stack([fwd.u[ys, xs].ravel(), fwd.v[ys, xs].ravel()], axis=1)
    centroids, sizes, _ = kmeans_flow(vecs, p.k_clusters, p.kmeans_iters)
    chosen = int(np.argmax(sizes))
    fx, fy = centroids[chosen]
    dist = np.hypot(fwd.u - fx, fwd.v - fy)
    mask = expit((dist - p.gamma) / p.sigma_f).astype(fwd.u.dtype)
    return mask, FocusEstimate((float(fx), float(fy)), [int(s) for s in sizes], chosen)


def round_trip_error(fwd: FlowField, bwd: FlowField):
    """``|| x + F_fwd(x) + F_bwd(x + F_fwd(x)) - x ||`` with bilinear, edge-clamped lookup."""
    if fwd.shape != bwd.shape:
        raise InvalidInputError(f"forward {fwd.shape} and backward {bwd.shape} flows differ")
    h, w = fwd.shape
    ys, xs = np.mgrid[0:h, 0:w]
    tx = xs + fwd.u.astype(np.float64)
    ty = ys + fwd.v.astype(np.float64)
    back = np.stack([bwd.u, bwd.v], axis=-1).astype(np.float64)
    b, _ = sample_bilinear(back, tx, ty)
    return np.hypot(fwd.u + b[..., 0], fwd.v + b[..., 1])


def occlusion_map(fwd: FlowField, bwd: FlowField, p: OcclusionParams | None = None):
    p = p or OcclusionParams()
    err = round_trip_error(fwd, bwd)
    return np.minimum(p.s * err, 1.0).astype(fwd.u.dtype)


def flow_uncertainty_map(flow: FlowField, p: UncertaintyParams | None = None):
    """Flow standard deviation in pixels, saturated at ``s_max`` and scaled to [0, 1]."""
    p = p or UncertaintyParams()
    lx = flow.logvar_x.astype(np.float64)
    ly = flow.logvar_y.astype(np.float64)
    s = np.sqrt(np.exp(lx) + np.exp(ly))
    return (np.minimum(s, p.s_max) / p.s_max).astype(flow.u.dtype)


def patch_grid(h, w, p: RejectionParams):
    """Grid shape and per-cell patch origins (may be negative: rows are edge-clamped).

    Cell ``(i, j)`` covers pixels ``[i*stride, (i+1)*stride)`` and its patch is
    the ``patch x patch`` window centered on that cell. An image smaller than
    one patch is a single global patch.
    """
    if h < p.patch or w < p.patch:
        return (1, 1), np.zeros(1, np.intp), np.zeros(1, np.intp), (h, w)
    gh = math.ceil(h / p.stride)
    gw = math.ceil(w / p.stride)
    off = p.stride // 2 - p.patch // 2
    return (gh, gw), np.arange(gh) * p.stride + off, np.arange(gw) * p.stride + off, (p.patch, p.patch)


def rejection_map(y_src, y_ref_warped, focal_ratio, p: RejectionParams | None = None,
                  ref_low=None):
    """Per-patch photometric disagreement between source and band-matched reference.

    The warped reference is first brought to W's optical resolution by a
    bilinear shrink/expand by ``focal_ratio`` (pass ``ref_low`` to reuse that
    result). For each patch the mean-removed difference ``P_delta`` gives
    ``1 - exp(-mean(P_delta^2) / (var_src + epsilon0))``. Returns the coarse
    ``(ceil(H/stride), ceil(W/stride))`` grid.
    """
    p = p or RejectionParams()
    y_src = as_float(y_src)
    y_ref_warped = as_float(y_ref_warped)
    if y_src.ndim != 2 or y_src.shape != y_ref_warped.shape:
        raise InvalidInputError("rejection_map expects two equally sized luma planes")
    if ref_low is None:
        ref_low = downup(y_ref_warped, focal_ratio, "bilinear")
    h, w = y_src.shape
    (gh, gw), r0, c0, (ph, pw) = patch_grid(h, w, p)
    sums = np.empty((len(r0), len(c0), 4))
    _kernels.patch_moments(np.ascontiguousarray(y_src), np.ascontiguousarray(ref_low, y_src.dtype),
                           np.asarray(r0, np.int64), np.asarray(c0, np.int64), ph, pw, sums)
    sum_s, sum_s2, sum_d, sum_d2 = np.moveaxis(sums, 2, 0)
    n = ph * pw
    var_src = np.maximum(sum_s2 / n - (sum_s / n) ** 2, 0.0)
    msd = np.maximum(sum_d2 / n - (sum_d / n) ** 2, 0.0)
    out = 1.0 - np.exp(-msd / (var_src + p.epsilon0))
    return out.reshape(gh, gw).astype(y_src.dtype)
