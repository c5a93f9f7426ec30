"""Coarse-to-fine dense flow with a residual-based uncertainty estimate.

The solver is a combined local-global scheme: a Lucas-Kanade style
structure tensor (Gaussian-integrated, gradient-normalized) as data term and a
quadratic Horn-Schunck smoothness term, minimized with Jacobi sweeps around
repeated warps on every pyramid level.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _kernels
from .imaging import (
    FlowField,
    InvalidInputError,
    as_float,
    bilinear_warp,
    build_pyramid,
    gaussian_blur,
    resample,
    shrink,
)

LOGVAR_MIN = math.log(1e-4)
LOGVAR_MAX = math.log(1e4)
FLO_MAGIC = 202021.25


@dataclass(frozen=True)
class FlowParams:
    flow_width: int = 384
    flow_height: int = 512
    pyramid_levels: int = 5
    scale_factor: float = 0.5
    iterations_per_level: int = 30
    warps_per_level: int = 3
    smoothness_weight: float = 0.1
    integration_sigma: float = 1.0
    max_displacement: float = 64.0
    # odd window of the median filter applied to the flow after every warp; 0 disables
    median_size: int = 5
    # Charbonnier scale (px per px) of a lagged robust weight on the flow gradient; 0 keeps it quadratic
    smoothness_eps: float = 0.0

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise InvalidInputError("pyramid_levels must be >= 1")
        if self.iterations_per_level < 0 or self.warps_per_level < 1:
            raise InvalidInputError("iteration counts must be positive")
        if not 0 < self.scale_factor < 1:
            raise InvalidInputError("scale_factor must be in (0, 1)")
        if self.smoothness_weight <= 0 or self.max_displacement <= 0:
            raise InvalidInputError("smoothness_weight and max_displacement must be > 0")
        if self.flow_width <= 0 or self.flow_height <= 0:
            raise InvalidInputError("flow size must be positive")
        if self.median_size < 0 or (self.median_size and self.median_size % 2 == 0):
            raise InvalidInputError("median_size must be 0 or an odd window")

    def flow_size(self, width: int, height: int) -> tuple[int, int]:
        """Flow resolution for an image of ``width x height``.

        The configured size is oriented to the image aspect (long side matched
        to long side), keeps the image aspect ratio and never exceeds the image.
        """
        long_side = max(self.flow_width, self.flow_height)
        s = min(1.0, long_side / max(width, height))
        return max(1, int(round(width * s))), max(1, int(round(height * s)))


def _gradients(img):
    p = np.pad(img, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def _clamp_magnitude(u, v, limit):
    mag = np.hypot(u, v)
    over = mag > limit
    if np.any(over):
        s = np.where(over, limit / np.maximum(mag, 1e-12), 1.0)
        u, v = u * s, v * s
    return u, v


def _refine_level(src, ref, u, v, p: FlowParams, zeta=0.01, robust_eps=0.5):
    gx_s, gy_s = _gradients(src)
    blur = lambda a: gaussian_blur(a, p.integration_sigma)
    for _ in range(p.warps_per_level):
        warped, valid = bilinear_warp(ref, FlowField(u, v))
        # clamped border samples also corrupt the gradient stencil next to them
        valid = ndimage.minimum_filter(valid, 3, mode="nearest")
        gx_w, gy_w = _gradients(warped)
        ix = 0.5 * (gx_w + gx_s)
        iy = 0.5 * (gy_w + gy_s)
        it = warped - src
        norm = 1.0 / (ix * ix + iy * iy + zeta * zeta)
        # lagged Charbonnier weight on the normalized residual (pixel units)
        weight = valid * norm / np.sqrt(1.0 + norm * it * it / robust_eps**2)
        j11 = blur(weight * ix * ix)
        j12 = blur(weight * ix * iy)
        j22 = blur(weight * iy * iy)
        j13 = blur(weight * ix * it)
        j23 = blur(weight * iy * it)
        if p.smoothness_eps > 0:
            ux, uy = _gradients(u)
            vx, vy = _gradients(v)
            g = 1.0 / np.sqrt(1.0 + (ux * ux + uy * uy + vx * vx + vy * vy) / p.smoothness_eps**2)
        else:
            g = np.ones_like(u)
        du, dv = _kernels.jacobi(u, v, j11, j12, j22, j13, j23, g, p.smoothness_weight,
                                 p.iterations_per_level)
        u, v = u + du, v + dv
        if p.median_size > 1:
            u = _kernels.median_filter(u, p.median_size)
            v = _kernels.median_filter(v, p.median_size)
        u, v = _clamp_magnitude(u, v, p.max_displacement)
    return u, v


def estimate_uncertainty(src, ref, flow: FlowField, window=7, eps=1e-6):
    """Per-axis log-variance from the local warp residual.

    ``logvar_a = ln(mean(r^2) / (mean(d_a ref^2) + eps) + eps)`` over a
    ``window x window`` box, where ``r`` is the residual after warping ``ref``
    and ``d_a`` the central difference of the warped reference along axis
    ``a``. Clamped to ``[ln 1e-4, ln 1e4]``.
    """
    src = as_float(src)
    ref = as_float(ref)
    warped, _ = bilinear_warp(ref, flow)
    r = src - warped
    gx, gy = _gradients(warped)
    box = lambda a: ndimage.uniform_filter(a.astype(np.float64), window, mode="nearest")
    res = box(r * r)
    out = []
    for g in (gx, gy):
        lv = np.log(res / (box(g * g) + eps) + eps)
        out.append(np.clip(lv, LOGVAR_MIN, LOGVAR_MAX).astype(src.dtype))
    return out[0], out[1]


def estimate_flow(src, ref, params: FlowParams | None = None) -> FlowField:
    """Dense flow ``F`` with ``ref(x + F(x)) ~ src(x)`` for single-channel inputs."""
    p = params or FlowParams()
    src = as_float(src)
    ref = as_float(ref, src.dtype)
    if src.ndim != 2 or ref.ndim != 2:
        raise InvalidInputError("estimate_flow expects single-channel planes")
    if src.shape != ref.shape:
        raise InvalidInputError(f"src {src.shape} and ref {ref.shape} differ in size")
    work = np.float64
    pyr_s = build_pyramid(src.astype(work), p.pyramid_levels, p.scale_factor)
    pyr_r = build_pyramid(ref.astype(work), p.pyramid_levels, p.scale_factor)
    h, w = pyr_s[-1].shape
    u = np.zeros((h, w))
    v = np.zeros((h, w))
    for lvl in range(len(pyr_s) - 1, -1, -1):
        s_img, r_img = pyr_s[lvl], pyr_r[lvl]
        lh, lw = s_img.shape
        if u.shape != (lh, lw):
            sx, sy = lw / u.shape[1], lh / u.shape[0]
            u = resample(u, lw, lh, "bilinear") * sx
            v = resample(v, lw, lh, "bilinear") * sy
        u, v = _refine_level(s_img, r_img, u, v, p)
    flow = FlowField(u.astype(src.dtype), v.astype(src.dtype))
    lx, ly = estimate_uncertainty(src, ref, flow)
    flow.logvar_x, flow.logvar_y = lx, ly
    return flow


def estimate_flow_pair(src, ref, params: FlowParams | None = None):
    """Forward (src -> ref) and backward (ref -> src) flows with identical params."""
    return estimate_flow(src, ref, params), estimate_flow(ref, src, params)


def downsample_for_flow(img, width, height, min_factor=1.0):
    """Prefiltered shrink to the flow resolution.

    The prefilter is sized for a shrink of at least ``min_factor``; passing the
    focal ratio there brings a sharp tele frame down to the optical resolution
    of the upsampled wide crop when the flow grid is finer than that.
    """
    img = as_float(img)
    h, w = img.shape[:2]
    factor = max(w / width, h / height, min_factor)
    sigma = 0.5 * math.sqrt(max(factor * factor - 1.0, 0.0))
    if (w, h) == (width, height):
        return gaussian_blur(img, sigma)
    return shrink(img, width, height, sigma)


# ---------------------------------------------------------------------------
# Middlebury .flo

def _write_planes(path, a, b):
    h, w = a.shape
    data = np.stack([a, b], axis=-1).astype("<f4")
    with open(path, "wb") as f:
        f.write(struct.pack("<f", FLO_MAGIC))
        f.write(struct.pack("<ii", w, h))
        f.write(data.tobytes())


def _read_planes(path):
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) != 12:
            raise InvalidInputError(f"{path}: truncated header")
        magic, = struct.unpack("<f", head[:4])
        if magic != FLO_MAGIC:
            raise InvalidInputError(f"{path}: bad magic {magic}")
        w, h = struct.unpack("<ii", head[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if w <= 0 or h <= 0 or data.size != 2 * w * h:
        raise InvalidInputError(f"{path}: expected {2 * w * h} floats, found {data.size}")
    data = data.reshape(h, w, 2).astype(np.float32)
    return data[..., 0], data[..., 1]


def logvar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".logvar" + path.suffix)


def write_flo(path, flow: FlowField, with_logvar=True):
    """Write ``u, v`` as Middlebury .flo; log-variances go to a sibling sidecar."""
    _write_planes(path, flow.u, flow.v)
    if with_logvar:
        _write_planes(logvar_path(path), flow.logvar_x, flow.logvar_y)


def read_flo(path) -> FlowField:
    u, v = _read_planes(path)
    side = logvar_path(path)
    if side.exists():
        lx, ly = _read_planes(side)
        return FlowField(u, v, lx, ly)
    return FlowField(u, v)
