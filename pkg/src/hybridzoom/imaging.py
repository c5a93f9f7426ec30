"""Image containers and the resampling, filtering and warping primitives.

Images are plain numpy arrays: ``(H, W)`` for single-channel planes and masks,
``(H, W, C)`` for multi-channel images, floating point with samples in [0, 1].
Every operation works in the floating dtype of its input (float32 stays
float32) and uses edge-clamp boundary handling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels

# BT.601 luma weights
KR, KG, KB = 0.299, 0.587, 0.114
_CB_SCALE = 2.0 * (1.0 - KB)  # 1.772
_CR_SCALE = 2.0 * (1.0 - KR)  # 1.402


class InvalidInputError(ValueError):
    """Raised when an array has the wrong shape, channel count or range."""


def as_float(img, dtype=None) -> np.ndarray:
    a = np.asarray(img)
    if dtype is not None:
        return a.astype(dtype, copy=False)
    if a.dtype.kind != "f":
        return a.astype(np.float64)
    return a


def channels(img: np.ndarray) -> int:
    return 1 if img.ndim == 2 else img.shape[2]


def check_same_size(*arrays, what="inputs"):
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise InvalidInputError(f"{what} must share dimensions, got {sorted(shapes)}")


@dataclass
class FlowField:
    """Dense displacement field plus per-axis log-variance planes.

    ``u``/``v`` are horizontal/vertical displacements in pixels mapping a source
    pixel ``x`` to ``x + (u, v)`` in the reference image.
    """

    u: np.ndarray
    v: np.ndarray
    logvar_x: np.ndarray = field(default=None)
    logvar_y: np.ndarray = field(default=None)

    def __post_init__(self):
        self.u = as_float(self.u)
        self.v = as_float(self.v)
        if self.logvar_x is None:
            self.logvar_x = np.zeros_like(self.u)
        if self.logvar_y is None:
            self.logvar_y = np.zeros_like(self.u)
        planes = (self.u, self.v, self.logvar_x, self.logvar_y)
        if any(p.ndim != 2 for p in planes):
            raise InvalidInputError("flow planes must be 2-D")
        check_same_size(*planes, what="flow planes")

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @classmethod
    def constant(cls, h, w, du, dv, dtype=np.float64):
        return cls(np.full((h, w), du, dtype), np.full((h, w), dv, dtype))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def resized(self, width: int, height: int) -> "FlowField":
        """Bilinearly resample to ``(width, height)`` and rescale displacements.

        Log-variances are shifted by ``2 ln(scale)`` so that the implied standard
        deviation is expressed in the new pixel units.
        """
        h, w = self.shape
        sx, sy = width / w, height / h
        u = resample(self.u, width, height, "bilinear") * sx
        v = resample(self.v, width, height, "bilinear") * sy
        lx = resample(self.logvar_x, width, height, "bilinear") + 2.0 * math.log(sx)
        ly = resample(self.logvar_y, width, height, "bilinear") + 2.0 * math.log(sy)
        return FlowField(u, v, lx, ly)


# ---------------------------------------------------------------------------
# color

def rgb_to_yuv(img):
    """Split RGB into BT.601 luma and offset chroma.

    Returns ``(luma, chroma)`` with luma ``(H, W)`` and chroma ``(H, W, 2)``
    holding ``(Cb, Cr)`` offset by 0.5 so that in-gamut colors map into [0, 1].
    """
    img = as_float(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError(f"expected a 3-channel image, got shape {img.shape}")
    h, w = img.shape[:2]
    y = np.empty((h, w), img.dtype)
    chroma = np.empty((h, w, 2), img.dtype)
    _kernels.rgb_to_yuv(np.ascontiguousarray(img), KR, KG, KB, _CB_SCALE, _CR_SCALE, y, chroma)
    return y, chroma


def yuv_to_rgb(luma, chroma):
    luma = as_float(luma)
    chroma = as_float(chroma, luma.dtype)
    if luma.ndim == 3 and luma.shape[2] == 1:
        luma = luma[..., 0]
    if luma.ndim != 2 or chroma.ndim != 3 or chroma.shape[2] != 2:
        raise InvalidInputError("expected luma (H, W) and chroma (H, W, 2)")
    check_same_size(luma, chroma, what="luma and chroma")
    out = np.empty(luma.shape + (3,), luma.dtype)
    _kernels.yuv_to_rgb(np.ascontiguousarray(luma), np.ascontiguousarray(chroma), KR, KG, KB,
                        _CB_SCALE, _CR_SCALE, out)
    return out


def luma(img) -> np.ndarray:
    img = as_float(img)
    if img.ndim == 2:
        return img
    return rgb_to_yuv(img)[0]


# ---------------------------------------------------------------------------
# resampling

def _bilinear_kernel(t):
    t = np.abs(t)
    return np.where(t < 1.0, 1.0 - t, 0.0)


def _bicubic_kernel(t, a=-0.5):
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


_KERNELS = {"bilinear": (_bilinear_kernel, 1), "bicubic": (_bicubic_kernel, 2)}


def _axis_weights(n_in, n_out, kernel, offset=0.0, scale=None):
    """Tap indices and normalized weights for one axis.

    Output sample ``i`` is centered at input coordinate
    ``(i + 0.5) * scale - 0.5 + offset``; ``scale`` defaults to ``n_in / n_out``.
    """
    fn, support = _KERNELS[kernel] if isinstance(kernel, str) else kernel
    if scale is None:
        scale = n_in / n_out
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5 + offset
    base = np.floor(centers).astype(np.int64)
    taps = np.arange(-support + 1, support + 1)
    idx = base[:, None] + taps[None, :]
    w = fn(centers[:, None] - idx)
    w /= w.sum(axis=1, keepdims=True)
    np.clip(idx, 0, n_in - 1, out=idx)
    return idx, w


def _apply_axis(img, idx, w, axis):
    squeeze = img.ndim == 2
    src = img[..., None] if squeeze else img
    h, wd, c = src.shape
    src = np.ascontiguousarray(src)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if axis == 0:
        out = np.empty((idx.shape[0], wd, c), dtype=img.dtype)
        _kernels.resample_rows(src.reshape(h, wd * c), idx, w, out.reshape(-1, wd * c))
    else:
        out = np.empty((h, idx.shape[0], c), dtype=img.dtype)
        _kernels.resample_cols(src, idx, w, out)
    return out[..., 0] if squeeze else out


def resample(img, new_width: int, new_height: int, kernel: str = "bicubic"):
    """Separable interpolating resize with edge clamping.

    This is a pure interpolator (no prefilter), so an integer-factor
    downsample of an upsampled image returns the original samples. Blur first
    when shrinking content that carries detail above the new Nyquist rate.
    """
    img = as_float(img)
    if new_width <= 0 or new_height <= 0:
        raise InvalidInputError(f"target size must be positive, got {new_width}x{new_height}")
    if kernel not in _KERNELS:
        raise InvalidInputError(f"unknown kernel {kernel!r}")
    h, w = img.shape[:2]
    out = img
    if new_height != h:
        out = _apply_axis(out, *_axis_weights(h, new_height, kernel), axis=0)
    if new_width != w:
        out = _apply_axis(out, *_axis_weights(w, new_width, kernel), axis=1)
    if out is img:
        out = img.copy()
    return out


def shrink(img, new_width: int, new_height: int, sigma: float):
    """Gaussian-prefiltered resize: ``gaussian_blur(img, sigma)`` then sampling, in one pass.

    The Gaussian (``sigma`` in input pixels) is evaluated directly at the tap
    offsets of each output sample, so only the output grid is filtered. Falls
    back to bilinear interpolation when ``sigma`` is too small to act as a
    sampling kernel.
    """
    img = as_float(img)
    if sigma < 0.5:
        return resample(gaussian_blur(img, sigma), new_width, new_height, "bilinear")
    radius = int(math.ceil(3.0 * sigma))
    gauss = (lambda t: np.exp(-0.5 * (t / sigma) ** 2), radius + 1)
    h, w = img.shape[:2]
    out = _apply_axis(img, *_axis_weights(h, new_height, gauss), axis=0)
    return _apply_axis(out, *_axis_weights(w, new_width, gauss), axis=1)


def resample_region(img, x0, y0, width, height, new_width, new_height, kernel="bicubic"):
    """Resample the sub-rectangle ``[x0, x0+width) x [y0, y0+height)`` of ``img``.

    Taps outside the rectangle read real neighbouring pixels (clamped only at
    the image border), so crop-then-resize has no artificial seam.
    """
    img = as_float(img)
    h, w = img.shape[:2]
    iy, wy = _axis_weights(h, new_height, kernel, offset=y0, scale=height / new_height)
    ix, wx = _axis_weights(w, new_width, kernel, offset=x0, scale=width / new_width)
    rows = np.unique(iy)
    cols = np.unique(ix)
    sub = img[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    out = _apply_axis(sub, iy - rows[0], wy, axis=0)
    return _apply_axis(out, ix - cols[0], wx, axis=1)


# ---------------------------------------------------------------------------
# filtering

def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float):
    """Separable Gaussian blur, kernel truncated at +-ceil(3 sigma), edge clamp."""
    img = as_float(img)
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma).astype(img.dtype)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


# ---------------------------------------------------------------------------
# warping

def sample_bilinear(img, x, y):
    """Bilinearly sample ``img`` at float coordinates ``(x, y)``.

    Coordinates outside ``[0, W-1] x [0, H-1]`` are clamped onto the border and
    reported as invalid. Returns ``(values, valid)``.
    """
    h, w = img.shape[:2]
    valid = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    x = np.clip(x, 0, w - 1)
    y = np.clip(y, 0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0).astype(img.dtype)
    fy = (y - y0).astype(img.dtype)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy, valid


def pixel_grid(h, w, dtype=np.float64):
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(dtype), ys.astype(dtype)


def bilinear_warp(img, flow: FlowField):
    """Backward warp: ``warped(x) = img(x + flow(x))``.

    Returns ``(warped, valid)`` where ``valid`` is 0 for samples that fell
    outside the image (those are edge-clamped).
    """
    img = as_float(img)
    if flow.shape != img.shape[:2]:
        raise InvalidInputError(f"flow {flow.shape} does not match image {img.shape[:2]}")
    src = np.ascontiguousarray(img[..., None] if img.ndim == 2 else img)
    out = np.empty_like(src)
    valid = np.empty(flow.shape, dtype=img.dtype)
    _kernels.warp_bilinear(src, np.ascontiguousarray(flow.u), np.ascontiguousarray(flow.v), out, valid)
    return (out[..., 0] if img.ndim == 2 else out), valid


def build_pyramid(img, levels: int, scale_factor: float = 0.5, min_size: int = 8):
    """Gaussian pyramid, finest level first.

    Each level is the previous one blurred and resized by ``scale_factor``.
    Stops early (returns fewer levels) once a level would drop below
    ``min_size`` pixels on either side.
    """
    if levels < 1:
        raise InvalidInputError("levels must be >= 1")
    if not 0 < scale_factor < 1:
        raise InvalidInputError("scale_factor must be in (0, 1)")
    img = as_float(img)
    sigma = math.sqrt(1.0 / scale_factor**2 - 1.0) / 2.0
    pyr = [img]
    for _ in range(levels - 1):
        h, w = pyr[-1].shape[:2]
        nh, nw = int(round(h * scale_factor)), int(round(w * scale_factor))
        if nh < min_size or nw < min_size:
            break
        pyr.append(resample(gaussian_blur(pyr[-1], sigma), nw, nh, "bilinear"))
    return pyr


def downup(img, factor: float, kernel: str = "bilinear"):
    """Shrink by ``1/factor`` and resize back: what survives at the lower sampling rate."""
    img = as_float(img)
    h, w = img.shape[:2]
    sw = max(1, int(round(w / factor)))
    sh = max(1, int(round(h / factor)))
    return resample(resample(img, sw, sh, kernel), w, h, kernel)
