"""Synthetic W/T rig: layered scenes rendered into a wide and a tele view.

The scene lives on a canvas sampled at telephoto detail that covers the whole
wide field of view. W is the canvas seen through a lens blur of
``focal_ratio / 2`` pixels and sampled ``focal_ratio`` times coarser; T is the
FOV window of the canvas with every layer shifted by its disparity and blurred
by its own defocus. Labels are expressed in the coordinates of the W crop
resampled to T resolution (the pipeline's source frame).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coarse_align import CameraMeta, Rect, Translation2D
from .imaging import FlowField, InvalidInputError, gaussian_blur, luma, resample


@dataclass
class Layer:
    region: np.ndarray  # bool, canvas coordinates, as seen from W
    disparity: tuple[float, float] = (0.0, 0.0)
    blur_sigma: float = 0.0


@dataclass
class RigScene:
    gt_image: np.ndarray  # canvas (H, W, 3) at T detail level covering W's FOV
    layers: list[Layer]
    focal_ratio: float
    tele_fov_rect: Rect  # in W pixels
    focus_roi: Rect  # in T pixels
    noise_sigma: float = 0.0
    color_gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    translation: Translation2D = field(default_factory=lambda: Translation2D(0, 0))
    seed: int = 0
    max_disparity: float = 32.0

    @property
    def wide_size(self) -> tuple[int, int]:
        h, w = self.gt_image.shape[:2]
        return int(round(w / self.focal_ratio)), int(round(h / self.focal_ratio))

    @property
    def tele_size(self) -> tuple[int, int]:
        r = self.tele_fov_rect
        return int(round(r.width * self.focal_ratio)), int(round(r.height * self.focal_ratio))

    @property
    def tele_origin(self) -> tuple[int, int]:
        r = self.tele_fov_rect
        return int(round(r.x * self.focal_ratio)), int(round(r.y * self.focal_ratio))

    def validate(self):
        if not self.focal_ratio > 1:
            raise InvalidInputError("focal_ratio must be > 1")
        if not self.layers:
            raise InvalidInputError("scene needs at least one layer")
        ch, cw = self.gt_image.shape[:2]
        ww, wh = self.wide_size
        if not self.tele_fov_rect.inside(ww, wh) or self.tele_fov_rect.empty:
            raise InvalidInputError(f"tele_fov_rect {self.tele_fov_rect} outside W {ww}x{wh}")
        tw, th = self.tele_size
        if not self.focus_roi.inside(tw, th):
            raise InvalidInputError(f"focus_roi {self.focus_roi} outside T {tw}x{th}")
        for i, layer in enumerate(self.layers):
            if layer.region.shape != (ch, cw):
                raise InvalidInputError(f"layer {i}: region shape {layer.region.shape} != canvas {(ch, cw)}")
            if np.hypot(*layer.disparity) > self.max_disparity:
                raise InvalidInputError(f"layer {i}: disparity exceeds {self.max_disparity}")
            if layer.blur_sigma < 0:
                raise InvalidInputError(f"layer {i}: negative blur")


@dataclass
class PairLabels:
    gt_flow: FlowField
    gt_occlusion: np.ndarray
    gt_defocus_region: np.ndarray
    gt_image: np.ndarray  # sharp scene in source-frame coordinates
    out_of_view: np.ndarray  # source pixels whose match falls outside T


def _shift(img, dx, dy):
    """``out(p) = img(p - d)`` for integer ``d`` with edge clamping."""
    h, w = img.shape[:2]
    ys = np.clip(np.arange(h) - int(dy), 0, h - 1)
    xs = np.clip(np.arange(w) - int(dx), 0, w - 1)
    return img[ys][:, xs]


def _check_integer(*vals):
    for v in vals:
        if float(v) != int(round(float(v))):
            raise InvalidInputError(f"rig-sim renders integer displacements only, got {v}")


def synthesize_pair(scene: RigScene):
    """Render ``(w_full, t_img, meta, labels)`` for ``scene``."""
    scene.validate()
    f = scene.focal_ratio
    canvas = np.asarray(scene.gt_image, dtype=np.float64)
    ch, cw = canvas.shape[:2]
    tdx, tdy = scene.translation.dx, scene.translation.dy
    _check_integer(tdx, tdy)
    for layer in scene.layers:
        _check_integer(*layer.disparity)

    # W: canvas seen through the translation, lens blur, coarse sampling
    wide_view = _shift(canvas, -tdx, -tdy)
    ww, wh = scene.wide_size
    w_full = resample(gaussian_blur(wide_view, f / 2.0), ww, wh, "bicubic")
    w_full = np.clip(w_full, 0.0, 1.0)

    # T: painter's order, backmost layer fills everything
    ox, oy = scene.tele_origin
    tw, th = scene.tele_size
    win = (slice(oy, oy + th), slice(ox, ox + tw))
    tele = None
    for k, layer in enumerate(scene.layers):
        dx, dy = layer.disparity
        content = _shift(canvas, dx, dy)
        if layer.blur_sigma > 0:
            content = gaussian_blur(content, layer.blur_sigma)
        content = content[win]
        if tele is None:
            tele = content.copy()
        else:
            cover = _shift(layer.region, dx, dy)[win]
            tele[cover] = content[cover]
    tele = tele * np.asarray(scene.color_gain, dtype=np.float64)[None, None, :]
    if scene.noise_sigma > 0:
        rng = np.random.default_rng(scene.seed)
        tele = tele + rng.normal(0.0, scene.noise_sigma, tele.shape)
    tele = np.clip(tele, 0.0, 1.0)

    labels = _labels(scene, canvas)
    meta = CameraMeta(f, scene.tele_fov_rect, scene.focus_roi)
    return w_full, tele, meta, labels


def _top_layer(scene, ys, xs, shifts=False):
    """Index of the front-most layer covering canvas points ``(ys, xs)``."""
    ch, cw = scene.gt_image.shape[:2]
    top = np.zeros(ys.shape, dtype=np.intp)
    for k, layer in enumerate(scene.layers[1:], start=1):
        if shifts:
            dx, dy = layer.disparity
            yy, xx = ys - int(dy), xs - int(dx)
        else:
            yy, xx = ys, xs
        inside = (yy >= 0) & (yy < ch) & (xx >= 0) & (xx < cw)
        hit = np.zeros(ys.shape, bool)
        hit[inside] = layer.region[yy[inside], xx[inside]]
        top[hit] = k
    return top


def _labels(scene, canvas):
    tw, th = scene.tele_size
    ox, oy = scene.tele_origin
    ch, cw = canvas.shape[:2]
    tdx, tdy = int(scene.translation.dx), int(scene.translation.dy)
    ys, xs = np.mgrid[0:th, 0:tw]
    # canvas point seen by source pixel x
    qy = np.clip(ys + oy + tdy, 0, ch - 1)
    qx = np.clip(xs + ox + tdx, 0, cw - 1)
    layer_w = _top_layer(scene, qy, qx)
    disp = np.array([l.disparity for l in scene.layers], dtype=np.float64)
    u = tdx + disp[layer_w, 0]
    v = tdy + disp[layer_w, 1]
    # where that point lands in T and which layer T shows there
    py = ys + v
    px = xs + u
    out_of_view = (px < 0) | (px > tw - 1) | (py < 0) | (py > th - 1)
    layer_t = _top_layer(scene, (py + oy).astype(np.intp), (px + ox).astype(np.intp), shifts=True)
    occluded = (layer_t != layer_w) & ~out_of_view
    blurred = np.array([l.blur_sigma > 0 for l in scene.layers])
    return PairLabels(
        gt_flow=FlowField(u, v),
        gt_occlusion=occluded.astype(np.float64),
        gt_defocus_region=blurred[layer_w].astype(np.float64),
        gt_image=canvas[qy, qx],
        out_of_view=out_of_view.astype(np.float64),
    )


# ---------------------------------------------------------------------------
# metrics

def psnr(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"psnr inputs differ in shape: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return 99.0
    return float(10.0 * np.log10(1.0 / mse))


def brightness_consistency(y_a, y_b, sigma=10.0) -> float:
    """Mean absolute difference of the two planes after a Gaussian blur."""
    y_a = np.asarray(y_a, dtype=np.float64)
    y_b = np.asarray(y_b, dtype=np.float64)
    if y_a.shape != y_b.shape:
        raise InvalidInputError("brightness_consistency inputs differ in shape")
    return float(np.mean(np.abs(gaussian_blur(y_a, sigma) - gaussian_blur(y_b, sigma))))


# ---------------------------------------------------------------------------
# scene construction

def multiscale_texture(height, width, seed=0, octaves=6, roughness=0.6, lo=0.15, hi=0.85):
    """Colored 1/f-like noise texture with values in ``[lo, hi]``."""
    rng = np.random.default_rng(seed)
    lum = np.zeros((height, width))
    col = np.zeros((height, width, 2))
    for o in range(octaves):
        step = 2 ** o
        gh, gw = height // step + 4, width // step + 4
        amp = (step / 2 ** (octaves - 1)) ** roughness
        field_ = resample(rng.standard_normal((gh, gw)), gw * step, gh * step, "bicubic")
        lum += amp * field_[step:step + height, step:step + width]
        if o >= octaves - 3:
            c = resample(rng.standard_normal((gh, gw, 2)), gw * step, gh * step, "bicubic")
            col += amp * c[step:step + height, step:step + width]
    lum = (lum - lum.mean()) / (lum.std() + 1e-12)
    col = (col - col.mean(axis=(0, 1))) / (col.std(axis=(0, 1)) + 1e-12)
    rgb = lum[..., None] + 0.25 * np.stack([col[..., 0], -0.5 * (col[..., 0] + col[..., 1]), col[..., 1]], -1)
    # robust range from a regular subsample; exact percentiles cost seconds at 12MP
    p_lo, p_hi = np.percentile(rgb[::2, ::2], [0.5, 99.5])
    rgb = (rgb - p_lo) / (p_hi - p_lo)
    return np.clip(lo + (hi - lo) * rgb, lo, hi)


def _shape_mask(shape, bbox, ch, cw):
    x, y, w, h = bbox
    ys, xs = np.mgrid[0:ch, 0:cw]
    if shape == "full":
        return np.ones((ch, cw), bool)
    if shape == "rect":
        return (xs >= x) & (xs < x + w) & (ys >= y) & (ys < y + h)
    if shape == "ellipse":
        cx, cy = x + (w - 1) / 2.0, y + (h - 1) / 2.0
        return ((xs - cx) / (w / 2.0)) ** 2 + ((ys - cy) / (h / 2.0)) ** 2 <= 1.0
    raise InvalidInputError(f"unknown layer shape {shape!r}")


def _require(d, key, ctx="scene"):
    if key not in d:
        raise InvalidInputError(f"{ctx}: missing field '{key}'")
    return d[key]


def scene_from_dict(d) -> RigScene:
    """Build a scene from its JSON description.

    Layer boxes are given in T pixels (as seen from W, before disparity);
    layers are listed back to front and the first one fills the frame.
    """
    f = float(_require(d, "focal_ratio"))
    wide_w, wide_h = (int(v) for v in _require(d, "wide_size"))
    rect = Rect.from_any(_require(d, "tele_fov_rect"))
    seed = int(_require(d, "seed"))
    ch, cw = int(round(wide_h * f)), int(round(wide_w * f))
    tex = d.get("texture", {})
    canvas = multiscale_texture(ch, cw, seed=int(tex.get("seed", seed)),
                                octaves=int(tex.get("octaves", 6)),
                                roughness=float(tex.get("roughness", 0.6)))
    ox, oy = int(round(rect.x * f)), int(round(rect.y * f))
    layers = []
    for i, ld in enumerate(_require(d, "layers")):
        ctx = f"layers[{i}]"
        shape = ld.get("shape", "full" if i == 0 else "rect")
        bbox = ld.get("bbox", [0, 0, 0, 0]) if shape == "full" else _require(ld, "bbox", ctx)
        x, y, w, h = (int(v) for v in bbox)
        region = _shape_mask(shape, (x + ox, y + oy, w, h), ch, cw)
        if "brightness" in ld:
            # give foreground objects their own tone so layers stay distinguishable
            canvas = np.where(region[..., None], np.clip(canvas * float(ld["brightness"]), 0, 1), canvas)
        layers.append(Layer(region, tuple(float(v) for v in _require(ld, "disparity", ctx)),
                            float(ld.get("blur_sigma", 0.0))))
    t = d.get("translation", [0, 0])
    return RigScene(
        gt_image=canvas,
        layers=layers,
        focal_ratio=f,
        tele_fov_rect=rect,
        focus_roi=Rect.from_any(_require(d, "focus_roi")),
        noise_sigma=float(d.get("noise_sigma", 0.0)),
        color_gain=tuple(float(g) for g in d.get("color_gain", (1.0, 1.0, 1.0))),
        translation=Translation2D(float(t[0]), float(t[1])),
        seed=seed,
        max_disparity=float(d.get("max_disparity", 32.0)),
    )


def load_scene(path) -> RigScene:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: {e}") from None
    return scene_from_dict(d)


def two_layer_scene(seed=0, fg_disparity=(6, 0), bg_disparity=(2, 0), bg_blur=0.0,
                    fg_blur=0.0, noise_sigma=0.0, color_gain=(1.0, 1.0, 1.0),
                    translation=(0, 0), tele_size=(384, 288), focal_ratio=3,
                    wide_margin=1.5, fg_box=None, focus_on="fg") -> dict:
    """JSON-style description of a background plus one rectangular foreground."""
    tw, th = tele_size
    f = focal_ratio
    rw, rh = tw // f, th // f
    wide_w, wide_h = int(rw * wide_margin) // 2 * 2 + rw % 2, int(rh * wide_margin) // 2 * 2 + rh % 2
    rect = {"x": (wide_w - rw) // 2, "y": (wide_h - rh) // 2, "width": rw, "height": rh}
    if fg_box is None:
        fg_box = [tw // 4, th // 4, tw // 2, th // 2]
    x, y, w, h = fg_box
    if focus_on == "fg":
        roi = {"x": x + w // 4, "y": y + h // 4, "width": w // 2, "height": h // 2}
    else:
        roi = {"x": 8, "y": 8, "width": tw // 6, "height": th // 6}
    return {
        "schema_version": 1,
        "seed": seed,
        "focal_ratio": f,
        "wide_size": [wide_w, wide_h],
        "tele_fov_rect": rect,
        "focus_roi": roi,
        "noise_sigma": noise_sigma,
        "color_gain": list(color_gain),
        "translation": list(translation),
        "layers": [
            {"shape": "full", "disparity": list(bg_disparity), "blur_sigma": bg_blur},
            {"shape": "rect", "bbox": list(fg_box), "disparity": list(fg_disparity),
             "blur_sigma": fg_blur, "brightness": 0.85},
        ],
    }


def benchmark_pair(width=4032, height=3024, focal_ratio=2, seed=0):
    """Aligned W/T pair of equal pixel size for timing runs.

    T is a texture at full detail. W shows a coarser texture around a center
    rectangle that holds T's content after the simulated optical blur and a
    ``1 / focal_ratio`` shrink. Cheaper to build than a full rig scene at 12MP.
    """
    f = int(focal_ratio)
    if f < 2 or f != focal_ratio:
        raise InvalidInputError("benchmark_pair needs an integer focal_ratio >= 2")
    t_img = multiscale_texture(height, width, seed=seed).astype(np.float32)
    rw, rh = width // f, height // f
    rect = Rect((width - rw) // 2, (height - rh) // 2, rw, rh)
    w_img = resample(multiscale_texture(height // f, width // f, seed=seed + 1), width, height,
                     "bicubic").astype(np.float32)
    np.clip(w_img, 0.0, 1.0, out=w_img)
    crop = resample(gaussian_blur(t_img, f / 2.0), rw, rh, "bicubic")
    w_img[rect.slices()] = np.clip(crop, 0.0, 1.0)
    roi = Rect(width // 4, height // 4, width // 2, height // 2)
    return w_img, t_img, CameraMeta(float(f), rect, roi)


def save_pair(out_dir, w_full, t_img, meta: CameraMeta, labels: PairLabels):
    """Write the rendered pair, metadata and label images into ``out_dir``."""
    from . import io as hio
    from .flow import write_flo

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hio.write_png16(out / "wide.png", w_full)
    hio.write_png16(out / "tele.png", t_img)
    hio.write_json(out / "meta.json", meta.to_dict())
    hio.write_png16(out / "gt.png", labels.gt_image)
    hio.write_mask_png(out / "gt_occlusion.png", labels.gt_occlusion)
    hio.write_mask_png(out / "gt_defocus.png", labels.gt_defocus_region)
    hio.write_mask_png(out / "gt_out_of_view.png", labels.out_of_view)
    write_flo(out / "gt_flow.flo", labels.gt_flow, with_logvar=False)


def gt_luma(labels: PairLabels):
    return luma(labels.gt_image)
