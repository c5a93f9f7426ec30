"""Blend-mask assembly, FOV feathering and the final alpha blend / uncrop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .coarse_align import CameraMeta, Rect
from .imaging import InvalidInputError, as_float, check_same_size, gaussian_blur, resample, resample_region


@dataclass
class BlendStack:
    """Component masks at their native resolutions.

    ``rejection`` is the coarse patch grid; ``rejection_stride`` is the pixel
    pitch of that grid at the blend resolution.
    """

    occlusion: np.ndarray
    defocus: np.ndarray
    flow_uncertainty: np.ndarray
    rejection: np.ndarray
    rejection_stride: float = 8.0
    boundary_sigma: float = 0.0

    def __post_init__(self):
        if self.boundary_sigma < 0:
            raise InvalidInputError("boundary_sigma must be >= 0")


def upsample_mask(mask, out_w, out_h):
    mask = as_float(mask)
    if mask.shape == (out_h, out_w):
        return mask
    return np.clip(resample(mask, out_w, out_h, "bilinear"), 0.0, 1.0)


def upsample_grid(grid, out_w, out_h, stride):
    """Bilinear expansion of a stride-spaced cell grid; cell centers land on pixel-cell centers."""
    grid = as_float(grid)
    if grid.shape == (1, 1):
        return np.full((out_h, out_w), grid[0, 0], dtype=grid.dtype)
    up = resample_region(grid, 0, 0, out_w / stride, out_h / stride, out_w, out_h, "bilinear")
    return np.clip(up, 0.0, 1.0)


def upsampled_components(stack: BlendStack, out_w: int, out_h: int):
    return {
        "occlusion": upsample_mask(stack.occlusion, out_w, out_h),
        "defocus": upsample_mask(stack.defocus, out_w, out_h),
        "flow_uncertainty": upsample_mask(stack.flow_uncertainty, out_w, out_h),
        "rejection": upsample_grid(stack.rejection, out_w, out_h, stack.rejection_stride),
    }


def combine_masks(occlusion, defocus, flow_uncertainty, rejection):
    out = 1.0 - occlusion
    out -= defocus
    out -= flow_uncertainty
    out -= rejection
    return np.maximum(out, 0.0, out=out)


def blend_mask(stack: BlendStack, out_w: int, out_h: int):
    """``max(1 - occ - defocus - flow - reject, 0)`` after upsampling each mask."""
    c = upsampled_components(stack, out_w, out_h)
    return combine_masks(c["occlusion"], c["defocus"], c["flow_uncertainty"], c["rejection"])


def feather_profile(n, sigma, dtype=np.float64):
    """1-D ramp: 0 on the first/last sample, 1 from ``3 sigma`` inwards.

    The ramp between follows a Gaussian integral centered at ``1.5 sigma``
    with spread ``sigma / 2``, renormalized to hit 0 and 1 exactly.
    """
    d = np.minimum(np.arange(n), np.arange(n)[::-1]).astype(np.float64)
    if sigma <= 0:
        return np.ones(n, dtype)
    lo, hi = ndtr(-3.0), ndtr(3.0)
    ramp = (ndtr((d - 1.5 * sigma) / (0.5 * sigma)) - lo) / (hi - lo)
    ramp = np.where(d >= 3.0 * sigma, 1.0, np.clip(ramp, 0.0, 1.0))
    return ramp.astype(dtype)


def smooth_boundary(mask, rect=None, sigma=0.0):
    """Feather ``mask`` to 0 at the edge of ``rect`` (mask coordinates).

    Pixels outside ``rect`` become 0; pixels deeper than ``3 sigma`` inside it
    are unchanged. ``rect`` defaults to the whole mask.
    """
    mask = as_float(mask)
    if sigma < 0:
        raise InvalidInputError("sigma must be >= 0")
    if sigma == 0:
        return mask.copy()
    h, w = mask.shape
    r = Rect(0, 0, w, h) if rect is None else Rect.from_any(rect)
    fy = np.zeros(h)
    fx = np.zeros(w)
    ys, xs = r.slices()
    fy[ys] = feather_profile(r.height, sigma)
    fx[xs] = feather_profile(r.width, sigma)
    return mask * np.outer(fy, fx).astype(mask.dtype)


def alpha_blend(fusion, src, m_blend):
    fusion = as_float(fusion)
    src = as_float(src, fusion.dtype)
    m = as_float(m_blend, fusion.dtype)
    check_same_size(fusion, src, m, what="blend inputs")
    if fusion.ndim == 3:
        m = m[..., None]
    return src + m * (fusion - src)


def alpha_blend_uncrop(fusion, src, m_blend, full_w, meta: CameraMeta):
    """Blend fusion over source and write the result back into W's frame.

    The blend is transferred as a correction ``R(m * (fusion - src))`` added
    to W's own pixels, where ``R`` is a Gaussian antialiasing filter followed
    by a bicubic resize from T's resolution back to the FOV rectangle. With ``m = 0`` or ``fusion == src`` W comes
    back untouched; pixels outside the rectangle are always copied verbatim.
    """
    fusion = as_float(fusion)
    src = as_float(src, fusion.dtype)
    full_w = as_float(full_w)
    m = as_float(m_blend, fusion.dtype)
    check_same_size(fusion, src, m, what="blend inputs")
    if fusion.shape[2:] != full_w.shape[2:]:
        raise InvalidInputError("fusion and W differ in channel count")
    r = meta.tele_fov_rect
    h, w = full_w.shape[:2]
    if r.empty or not r.inside(w, h):
        raise InvalidInputError(f"tele_fov_rect {r} outside W ({w}x{h})")
    mm = m[..., None] if fusion.ndim == 3 else m
    delta = mm * (fusion - src)
    if delta.shape[:2] != (r.height, r.width):
        # antialias first: detail finer than W's grid would otherwise alias into it
        f = max(delta.shape[1] / r.width, delta.shape[0] / r.height)
        delta = gaussian_blur(delta, 0.5 * math.sqrt(max(f * f - 1.0, 0.0)))
        delta = resample(delta, r.width, r.height, "bicubic")
    out = full_w.copy()
    ys, xs = r.slices()
    region = out[ys, xs].astype(np.float64) + delta
    out[ys, xs] = np.clip(region, 0.0, 1.0)
    return out


def default_boundary_sigma(width, height):
    return 0.01 * min(width, height)
