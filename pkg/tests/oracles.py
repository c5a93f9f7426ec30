"""Naive per-pixel reference implementations of the mask formulas.

Deliberately written with scalar loops and the ``math`` module so they share
no code path with the vectorized/numba versions in the package.
"""

import math


def _clamp(i, n):
    return min(max(i, 0), n - 1)


def bilinear_at(plane, x, y):
    """Bilinear lookup with edge clamping; ``plane`` is a 2-D nested sequence or array."""
    h, w = len(plane), len(plane[0])
    x0 = math.floor(x)
    y0 = math.floor(y)
    tx, ty = x - x0, y - y0
    a = plane[_clamp(y0, h)][_clamp(x0, w)]
    b = plane[_clamp(y0, h)][_clamp(x0 + 1, w)]
    c = plane[_clamp(y0 + 1, h)][_clamp(x0, w)]
    d = plane[_clamp(y0 + 1, h)][_clamp(x0 + 1, w)]
    return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d)


def sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _median(xs):
    xs = sorted(xs)
    n = len(xs)
    return xs[n // 2] if n % 2 else 0.5 * (xs[n // 2 - 1] + xs[n // 2])


def kmeans(vectors, k, iters):
    """Lloyd iterations seeded at quantiles of the distance to the median vector; returns (centroids, sizes)."""
    n = len(vectors)
    k = min(k, n)
    mx = _median([v[0] for v in vectors])
    my = _median([v[1] for v in vectors])
    order = sorted(range(n), key=lambda i: (math.hypot(vectors[i][0] - mx, vectors[i][1] - my), i))
    if k == 1:
        picks = [n // 2]
    else:
        picks = [int(round(j * (n - 1) / (k - 1))) for j in range(k)]
    cents = [list(vectors[order[p]]) for p in picks]

    def assign():
        labels = []
        for vx, vy in vectors:
            best, best_d = 0, None
            for c, (cx, cy) in enumerate(cents):
                d = (vx - cx) ** 2 + (vy - cy) ** 2
                if best_d is None or d < best_d:
                    best, best_d = c, d
            labels.append(best)
        return labels

    for _ in range(max(iters, 1)):
        labels = assign()
        for c in range(k):
            members = [vectors[i] for i in range(n) if labels[i] == c]
            if members:
                cents[c] = [sum(m[0] for m in members) / len(members),
                            sum(m[1] for m in members) / len(members)]
    labels = assign()
    sizes = [labels.count(c) for c in range(k)]
    return cents, sizes


def defocus(u, v, roi, gamma, sigma_f, k=3, iters=10):
    x, y, w, h = roi
    vecs = [(float(u[i][j]), float(v[i][j])) for i in range(y, y + h) for j in range(x, x + w)]
    cents, sizes = kmeans(vecs, k, iters)
    fx, fy = cents[sizes.index(max(sizes))]
    rows, cols = len(u), len(u[0])
    return [[sigmoid((math.hypot(u[i][j] - fx, v[i][j] - fy) - gamma) / sigma_f)
             for j in range(cols)] for i in range(rows)]


def occlusion(fu, fv, bu, bv, s):
    rows, cols = len(fu), len(fu[0])
    out = []
    for i in range(rows):
        line = []
        for j in range(cols):
            yx = j + fu[i][j]
            yy = i + fv[i][j]
            rx = yx + bilinear_at(bu, yx, yy)
            ry = yy + bilinear_at(bv, yx, yy)
            line.append(min(s * math.hypot(rx - j, ry - i), 1.0))
        out.append(line)
    return out


def flow_uncertainty(lx, ly, s_max):
    return [[min(math.sqrt(math.exp(a) + math.exp(b)), s_max) / s_max for a, b in zip(ra, rb)]
            for ra, rb in zip(lx, ly)]


def resize_bilinear(plane, new_w, new_h):
    """Interpolating resize: sample ``i`` sits at input coordinate ``(i + 0.5) * n_in / n_out - 0.5``."""
    h, w = len(plane), len(plane[0])
    out = []
    for i in range(new_h):
        cy = (i + 0.5) * h / new_h - 0.5
        out.append([bilinear_at(plane, (j + 0.5) * w / new_w - 0.5, cy) for j in range(new_w)])
    return out


def rejection(y_src, y_ref, focal_ratio, patch=16, stride=8, eps0=1e-4):
    h, w = len(y_src), len(y_src[0])
    small = resize_bilinear(y_ref, max(1, round(w / focal_ratio)), max(1, round(h / focal_ratio)))
    low = resize_bilinear(small, w, h)
    if h < patch or w < patch:
        cells = [[(0, 0, h, w)]]
    else:
        off = stride // 2 - patch // 2
        cells = [[(gi * stride + off, gj * stride + off, patch, patch)
                  for gj in range(math.ceil(w / stride))] for gi in range(math.ceil(h / stride))]
    grid = []
    for row in cells:
        line = []
        for r0, c0, ph, pw in row:
            ps = [y_src[_clamp(r0 + a, h)][_clamp(c0 + b, w)] for a in range(ph) for b in range(pw)]
            pr = [low[_clamp(r0 + a, h)][_clamp(c0 + b, w)] for a in range(ph) for b in range(pw)]
            n = len(ps)
            ms = sum(ps) / n
            mr = sum(pr) / n
            var_src = sum((p - ms) ** 2 for p in ps) / n
            msd = sum(((p - ms) - (q - mr)) ** 2 for p, q in zip(ps, pr)) / n
            line.append(1.0 - math.exp(-msd / (var_src + eps0)))
        grid.append(line)
    return grid
