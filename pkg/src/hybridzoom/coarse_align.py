"""Coarse W/T registration: FOV crop, global translation and color transfer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .imaging import (
    InvalidInputError,
    as_float,
    gaussian_blur,
    luma,
    resample_region,
    shrink,
)


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise InvalidInputError(f"negative rectangle size: {self}")

    @property
    def empty(self) -> bool:
        return self.width == 0 or self.height == 0

    def inside(self, width: int, height: int) -> bool:
        return (self.x >= 0 and self.y >= 0
                and self.x + self.width <= width and self.y + self.height <= height)

    def slices(self):
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)

    @classmethod
    def from_any(cls, r) -> "Rect":
        if isinstance(r, Rect):
            return r
        if isinstance(r, dict):
            return cls(int(r["x"]), int(r["y"]), int(r["width"]), int(r["height"]))
        x, y, w, h = r
        return cls(int(x), int(y), int(w), int(h))

    def to_dict(self):
        return {"x": self.x, "y": self.y, "width": self.width, "height": self.height}


@dataclass(frozen=True)
class CameraMeta:
    """Capture metadata for one W/T pair.

    ``tele_fov_rect`` is T's footprint in W pixel coordinates; ``focus_roi`` is
    the autofocus rectangle in T pixel coordinates.
    """

    focal_ratio: float
    tele_fov_rect: Rect
    focus_roi: Rect

    def __post_init__(self):
        if not self.focal_ratio > 1:
            raise InvalidInputError(f"focal_ratio must be > 1, got {self.focal_ratio}")

    def validate(self, w_size, t_size):
        """Raise unless the rectangles fit the given ``(width, height)`` frames."""
        if not self.tele_fov_rect.inside(*w_size) or self.tele_fov_rect.empty:
            raise InvalidInputError(f"tele_fov_rect {self.tele_fov_rect} outside W {w_size}")
        if not self.focus_roi.inside(*t_size):
            raise InvalidInputError(f"focus_roi {self.focus_roi} outside T {t_size}")

    @classmethod
    def from_dict(cls, d) -> "CameraMeta":
        return cls(float(d["focal_ratio"]), Rect.from_any(d["tele_fov_rect"]),
                   Rect.from_any(d["focus_roi"]))

    def to_dict(self):
        return {"focal_ratio": self.focal_ratio,
                "tele_fov_rect": self.tele_fov_rect.to_dict(),
                "focus_roi": self.focus_roi.to_dict()}


@dataclass(frozen=True)
class Translation2D:
    dx: float
    dy: float
    confident: bool = True
    n_matches: int = 0


def crop_and_resample_source(w_img, meta: CameraMeta, target_w: int, target_h: int):
    """Cut T's field of view out of W and bicubically resize it to T's resolution."""
    w_img = as_float(w_img)
    r = meta.tele_fov_rect
    h, w = w_img.shape[:2]
    if r.empty or not r.inside(w, h):
        raise InvalidInputError(f"tele_fov_rect {r} outside W ({w}x{h})")
    return resample_region(w_img, r.x, r.y, r.width, r.height, target_w, target_h, "bicubic")


# ---------------------------------------------------------------------------
# FAST keypoints

# Bresenham circle of radius 3, clockwise from 12 o'clock: (dy, dx)
_RING = np.array([
    (-3, 0), (-3, 1), (-2, 2), (-1, 3), (0, 3), (1, 3), (2, 2), (3, 1),
    (3, 0), (3, -1), (2, -2), (1, -3), (0, -3), (-1, -3), (-2, -2), (-3, -1),
])


def fast_corners(img, threshold=0.06, arc=9, border=3, max_points=None):
    """FAST segment-test corners on a single-channel image.

    A pixel is a corner when ``arc`` contiguous ring pixels are all brighter
    than ``p + threshold`` or all darker than ``p - threshold``. Responses are
    non-max suppressed in a 3x3 window. Returns ``(ys, xs, scores)`` ordered by
    descending score (ties broken by raster order).
    """
    img = as_float(img)
    h, w = img.shape
    border = max(border, 3)
    if h <= 2 * border or w <= 2 * border:
        empty = np.zeros(0, np.intp)
        return empty, empty, np.zeros(0)
    core = img[border:h - border, border:w - border]
    ring = np.stack([img[border + dy:h - border + dy, border + dx:w - border + dx]
                     for dy, dx in _RING])
    diff = ring - core[None]
    brighter = diff > threshold
    darker = diff < -threshold
    ext_b = np.concatenate([brighter, brighter[:arc - 1]])
    ext_d = np.concatenate([darker, darker[:arc - 1]])
    corner = np.zeros(core.shape, bool)
    for s in range(16):
        corner |= ext_b[s:s + arc].all(axis=0)
        corner |= ext_d[s:s + arc].all(axis=0)
    score = np.where(corner, np.maximum(np.abs(diff) - threshold, 0).sum(axis=0), 0.0)

    padded = np.pad(score, 1)
    local_max = np.ones(score.shape, bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[1 + dy:1 + dy + score.shape[0], 1 + dx:1 + dx + score.shape[1]]
            # strict on one side so plateaus keep exactly one point
            if (dy, dx) < (0, 0):
                local_max &= score > nb
            else:
                local_max &= score >= nb
    keep = corner & local_max
    ys, xs = np.nonzero(keep)
    sc = score[ys, xs]
    order = np.lexsort((np.arange(len(sc)), -sc))
    if max_points is not None:
        order = order[:max_points]
    return ys[order] + border, xs[order] + border, sc[order]


def _patches(img, ys, xs, radius):
    offs = np.arange(-radius, radius + 1)
    p = img[ys[:, None, None] + offs[None, :, None], xs[:, None, None] + offs[None, None, :]]
    p = p.reshape(len(ys), -1)
    p = p - p.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(p, axis=1, keepdims=True)
    return p / np.maximum(norm, 1e-12), norm[:, 0]


def _match_keypoints(src, ref, radius_px, patch, threshold, max_points, min_ncc):
    half = patch // 2
    sy, sx, _ = fast_corners(src, threshold, border=half, max_points=max_points)
    ry, rx, _ = fast_corners(ref, threshold, border=half, max_points=max_points)
    if len(sy) == 0 or len(ry) == 0:
        return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0)
    ps, ns = _patches(src, sy, sx, half)
    pr, nr = _patches(ref, ry, rx, half)
    ncc = ps @ pr.T
    ncc[(ns < 1e-6)[:, None] | (nr < 1e-6)[None, :]] = -1.0
    far = (np.abs(ry[None, :] - sy[:, None]) > radius_px) | (np.abs(rx[None, :] - sx[:, None]) > radius_px)
    ncc[far] = -1.0
    best_r = np.argmax(ncc, axis=1)
    best_s = np.argmax(ncc, axis=0)
    i = np.arange(len(sy))
    ok = (best_s[best_r] == i) & (ncc[i, best_r] >= min_ncc)
    i = i[ok]
    j = best_r[ok]
    src_pts = np.stack([sx[i], sy[i]], axis=1).astype(np.float64)
    ref_pts = np.stack([rx[j], ry[j]], axis=1).astype(np.float64)
    return src_pts, ref_pts, ncc[i, j]


def _ncc_search(ps, window, half):
    """Best integer offset of zero-mean unit patch ``ps`` inside ``window``."""
    size = 2 * half + 1
    views = np.lib.stride_tricks.sliding_window_view(window, (size, size))
    flat = views.reshape(views.shape[0], views.shape[1], -1)
    flat = flat - flat.mean(axis=2, keepdims=True)
    norm = np.linalg.norm(flat, axis=2)
    score = np.where(norm > 1e-6, flat @ ps / np.maximum(norm, 1e-12), -2.0)
    iy, ix = np.unravel_index(np.argmax(score), score.shape)
    return iy, ix, score[iy, ix]


def _refine_integer(src, ref, src_pts, guesses, search, half, sigma):
    """Integer NCC search around each ``guess`` at full resolution.

    Windows are cut out and blurred locally with ``sigma`` so that a soft
    source and a sharp reference are compared at the same optical resolution.
    """
    h, w = src.shape
    pad = half + int(np.ceil(3 * sigma))
    reach = pad + search
    out = []
    for (x, y), (gx, gy) in zip(src_pts.astype(int), np.rint(guesses).astype(int)):
        cx, cy = x + gx, y + gy
        if not (reach <= x < w - reach and reach <= y < h - reach
                and reach <= cx < w - reach and reach <= cy < h - reach):
            continue
        sw = gaussian_blur(src[y - pad:y + pad + 1, x - pad:x + pad + 1], sigma)
        c = pad
        ps = sw[c - half:c + half + 1, c - half:c + half + 1].ravel()
        ps = ps - ps.mean()
        n = np.linalg.norm(ps)
        if n < 1e-6:
            continue
        rw = gaussian_blur(ref[cy - reach:cy + reach + 1, cx - reach:cx + reach + 1], sigma)
        inner = rw[pad - half:rw.shape[0] - pad + half, pad - half:rw.shape[1] - pad + half]
        iy, ix, score = _ncc_search(ps / n, inner, half)
        out.append((gx + ix - search, gy + iy - search))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def estimate_translation(src, ref, search_radius=200.0, threshold=0.06, patch=11,
                         min_matches=8, max_points=600, min_ncc=0.8, work_size=1024,
                         refine_points=128, work_scale=None) -> Translation2D:
    """Global ``(dx, dy)`` such that ``ref(x + d) ~ src(x)``, from FAST matches.

    Keypoints are detected on prefiltered luma at a working scale (by default
    the largest that keeps the long side within ``work_size``), matched by
    mutual-best NCC of ``patch x patch`` windows within ``search_radius``
    (full-resolution pixels) and reduced with a per-axis median. When the
    working scale is below 1, matches are re-searched at full resolution.
    Fewer than ``min_matches`` surviving matches yields ``(0, 0)`` with
    ``confident=False``.
    """
    ys = luma(src)
    yr = luma(ref)
    if ys.shape != yr.shape:
        raise InvalidInputError(f"src {ys.shape} and ref {yr.shape} differ in size")
    h, w = ys.shape
    scale = min(1.0, work_size / max(h, w))
    if work_scale is not None:
        scale = min(scale, work_scale)
    sigma = 0.5 / scale if scale < 1.0 else 0.0
    if scale < 1.0:
        ww, wh = max(1, round(w * scale)), max(1, round(h * scale))
        ws = shrink(ys, ww, wh, sigma)
        wr = shrink(yr, ww, wh, sigma)
    else:
        ws, wr = ys, yr
    src_pts, ref_pts, ncc = _match_keypoints(ws, wr, search_radius * scale, patch, threshold,
                                             max_points, min_ncc)
    n = len(src_pts)
    if n < min_matches:
        return Translation2D(0.0, 0.0, confident=False, n_matches=n)
    disp = ref_pts - src_pts
    if scale < 1.0:
        # evenly spread subset, independent of match scores
        pick = np.unique(np.linspace(0, n - 1, min(n, refine_points)).astype(int))
        full_pts = np.rint((src_pts[pick] + 0.5) / scale - 0.5)
        guesses = disp[pick] / scale
        search = int(math.ceil(1.0 / scale)) + 1
        refined = _refine_integer(ys, yr, full_pts, guesses, search, patch // 2, sigma)
        disp = refined if len(refined) >= min_matches else disp / scale
    dx, dy = np.median(disp, axis=0)
    return Translation2D(float(dx), float(dy), confident=True, n_matches=n)


def match_color(ref, src, eps=1e-6):
    """Transfer per-channel mean and standard deviation of ``src`` onto ``ref``."""
    ref = as_float(ref)
    src = as_float(src)
    if ref.ndim != 3 or src.ndim != 3 or ref.shape[2] != 3 or src.shape[2] != 3:
        raise InvalidInputError("match_color expects two 3-channel images")
    mr, sr = _kernels.channel_moments(ref)
    ms, ss = _kernels.channel_moments(src)
    gain = ss / np.maximum(sr, eps)
    out = np.empty_like(ref)
    _kernels.affine_channels(np.ascontiguousarray(ref), gain, ms - mr * gain, out)
    return out
