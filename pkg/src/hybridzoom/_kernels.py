"""Row-parallel numba kernels for the full-resolution hot paths.

Every output sample is computed independently from its inputs, so results do
not depend on the number of threads.
"""

import warnings

import cv2
import numba
import numpy as np

# numba probes for TBB on first parallel launch; an old system TBB only means another layer is used
warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)


@numba.njit(parallel=True, cache=True)
def resample_rows(img, idx, w, out):
    # img (H, M) -> out (H', M) with out[i] = sum_k w[i, k] * img[idx[i, k]]
    n_out, taps = idx.shape
    m = img.shape[1]
    for i in numba.prange(n_out):
        for j in range(m):
            acc = 0.0
            for k in range(taps):
                acc += w[i, k] * img[idx[i, k], j]
            out[i, j] = acc


@numba.njit(parallel=True, cache=True)
def resample_cols(img, idx, w, out):
    # img (H, W, C) -> out (H, W', C)
    h = img.shape[0]
    c = img.shape[2]
    n_out, taps = idx.shape
    for r in numba.prange(h):
        for i in range(n_out):
            for ch in range(c):
                acc = 0.0
                for k in range(taps):
                    acc += w[i, k] * img[r, idx[i, k], ch]
                out[r, i, ch] = acc


@numba.njit(parallel=True, cache=True)
def warp_bilinear(img, u, v, out, valid):
    h, w, c = img.shape
    xmax = w - 1.0
    ymax = h - 1.0
    for i in numba.prange(h):
        for j in range(w):
            x = j + np.float64(u[i, j])
            y = i + np.float64(v[i, j])
            inside = x >= 0.0 and x <= xmax and y >= 0.0 and y <= ymax
            x = min(max(x, 0.0), xmax)
            y = min(max(y, 0.0), ymax)
            x0 = min(int(x), max(w - 2, 0))
            y0 = min(int(y), max(h - 2, 0))
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            fx = x - x0
            fy = y - y0
            for ch in range(c):
                top = img[y0, x0, ch] * (1.0 - fx) + img[y0, x1, ch] * fx
                bot = img[y1, x0, ch] * (1.0 - fx) + img[y1, x1, ch] * fx
                out[i, j, ch] = top * (1.0 - fy) + bot * fy
            valid[i, j] = 1.0 if inside else 0.0


def set_threads(n):
    """Cap the kernel thread pool; ``None`` keeps numba's default."""
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@numba.njit(parallel=True, cache=True)
def _jacobi_sweep(u, v, du, dv, du_out, dv_out, j11, j12, j22, j13, j23, g, alpha):
    # g is a per-pixel diffusivity; each 4-neighbour link uses the mean of its two ends
    h, w = u.shape
    for i in numba.prange(h):
        im = max(i - 1, 0)
        ip = min(i + 1, h - 1)
        for j in range(w):
            jm = max(j - 1, 0)
            jp = min(j + 1, w - 1)
            gc = g[i, j]
            wn = 0.5 * (gc + g[im, j])
            ws = 0.5 * (gc + g[ip, j])
            ww = 0.5 * (gc + g[i, jm])
            we = 0.5 * (gc + g[i, jp])
            wsum = alpha * (wn + ws + ww + we)
            su = alpha * (wn * (u[im, j] + du[im, j]) + ws * (u[ip, j] + du[ip, j])
                          + ww * (u[i, jm] + du[i, jm]) + we * (u[i, jp] + du[i, jp])) - wsum * u[i, j]
            sv = alpha * (wn * (v[im, j] + dv[im, j]) + ws * (v[ip, j] + dv[ip, j])
                          + ww * (v[i, jm] + dv[i, jm]) + we * (v[i, jp] + dv[i, jp])) - wsum * v[i, j]
            du_out[i, j] = (su - j12[i, j] * dv[i, j] - j13[i, j]) / (j11[i, j] + wsum)
            dv_out[i, j] = (sv - j12[i, j] * du[i, j] - j23[i, j]) / (j22[i, j] + wsum)


def jacobi(u, v, j11, j12, j22, j13, j23, g, alpha, iterations):
    """Jacobi sweeps for the flow increment of one warp; returns ``(du, dv)``.

    Smoothness acts on the total flow ``u + du`` with link weights from the
    diffusivity map ``g`` (all ones gives the plain quadratic regularizer).
    """
    du = np.zeros_like(u)
    dv = np.zeros_like(v)
    du2 = np.empty_like(u)
    dv2 = np.empty_like(v)
    for _ in range(iterations):
        _jacobi_sweep(u, v, du, dv, du2, dv2, j11, j12, j22, j13, j23, g, alpha)
        du, du2 = du2, du
        dv, dv2 = dv2, dv
    return du, dv


@numba.njit(parallel=True, cache=True)
def _median_filter(a, radius, out):
    h, w = a.shape
    n = (2 * radius + 1) ** 2
    mid = n // 2
    for i in numba.prange(h):
        buf = np.empty(n, a.dtype)
        for j in range(w):
            k = 0
            for di in range(-radius, radius + 1):
                ii = min(max(i + di, 0), h - 1)
                for dj in range(-radius, radius + 1):
                    jj = min(max(j + dj, 0), w - 1)
                    # insertion sort as we gather
                    x = a[ii, jj]
                    m = k
                    while m > 0 and buf[m - 1] > x:
                        buf[m] = buf[m - 1]
                        m -= 1
                    buf[m] = x
                    k += 1
            out[i, j] = buf[mid]


def median_filter(a, size):
    """Square median filter with edge replication (``size`` odd).

    Sizes 3 and 5 go through OpenCV in float32, which is exact on the
    rounded values and several times faster than the generic kernel.
    """
    if size in (3, 5):
        return cv2.medianBlur(np.ascontiguousarray(a, np.float32), size).astype(a.dtype)
    a = np.ascontiguousarray(a)
    out = np.empty_like(a)
    _median_filter(a, size // 2, out)
    return out


@numba.njit(parallel=True, cache=True)
def rgb_to_yuv(img, kr, kg, kb, cb_scale, cr_scale, y, chroma):
    h, w = y.shape
    for i in numba.prange(h):
        for j in range(w):
            r = img[i, j, 0]
            b = img[i, j, 2]
            lum = kr * r + kg * img[i, j, 1] + kb * b
            y[i, j] = lum
            chroma[i, j, 0] = (b - lum) / cb_scale + 0.5
            chroma[i, j, 1] = (r - lum) / cr_scale + 0.5


@numba.njit(parallel=True, cache=True)
def yuv_to_rgb(y, chroma, kr, kg, kb, cb_scale, cr_scale, out):
    h, w = y.shape
    for i in numba.prange(h):
        for j in range(w):
            lum = y[i, j]
            r = lum + cr_scale * (chroma[i, j, 1] - 0.5)
            b = lum + cb_scale * (chroma[i, j, 0] - 0.5)
            g = (lum - kr * r - kb * b) / kg
            out[i, j, 0] = min(max(r, 0.0), 1.0)
            out[i, j, 1] = min(max(g, 0.0), 1.0)
            out[i, j, 2] = min(max(b, 0.0), 1.0)


@numba.njit(parallel=True, cache=True)
def _row_moments(img, part):
    h, w, c = img.shape
    for i in numba.prange(h):
        for ch in range(c):
            s = 0.0
            s2 = 0.0
            for j in range(w):
                x = np.float64(img[i, j, ch])
                s += x
                s2 += x * x
            part[i, ch, 0] = s
            part[i, ch, 1] = s2


def channel_moments(img):
    """Per-channel ``(mean, std)`` with float64 accumulation and a fixed summation order."""
    h, w, c = img.shape
    part = np.empty((h, c, 2))
    _row_moments(np.ascontiguousarray(img), part)
    tot = part.sum(axis=0)
    n = h * w
    mean = tot[:, 0] / n
    var = np.maximum(tot[:, 1] / n - mean * mean, 0.0)
    return mean, np.sqrt(var)


@numba.njit(parallel=True, cache=True)
def affine_channels(img, gain, offset, out):
    # out = clip(img * gain + offset, 0, 1) per channel
    h, w, c = img.shape
    for i in numba.prange(h):
        for j in range(w):
            for ch in range(c):
                out[i, j, ch] = min(max(img[i, j, ch] * gain[ch] + offset[ch], 0.0), 1.0)


@numba.njit(parallel=True, cache=True)
def patch_moments(y, y_low, r0, c0, ph, pw, out):
    """Sums of s, s^2, d, d^2 per patch, with s = y - 0.5 and d = y - y_low.

    Patch indices are clamped at the border (edge replication).
    """
    h, w = y.shape
    gh = r0.shape[0]
    gw = c0.shape[0]
    for gi in numba.prange(gh):
        for gj in range(gw):
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            a3 = 0.0
            for di in range(ph):
                ii = min(max(r0[gi] + di, 0), h - 1)
                for dj in range(pw):
                    jj = min(max(c0[gj] + dj, 0), w - 1)
                    x = np.float64(y[ii, jj]) - 0.5
                    e = np.float64(y[ii, jj]) - np.float64(y_low[ii, jj])
                    a0 += x
                    a1 += x * x
                    a2 += e
                    a3 += e * e
            out[gi, gj, 0] = a0
            out[gi, gj, 1] = a1
            out[gi, gj, 2] = a2
            out[gi, gj, 3] = a3
