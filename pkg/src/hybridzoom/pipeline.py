"""End-to-end W/T fusion: configuration, stage orchestration and timings."""

from __future__ import annotations

import dataclasses
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .blend import (
    BlendStack,
    alpha_blend,
    alpha_blend_uncrop,
    combine_masks,
    default_boundary_sigma,
    smooth_boundary,
    upsampled_components,
)
from .coarse_align import CameraMeta, Rect, Translation2D, crop_and_resample_source, estimate_translation, match_color
from .flow import FlowParams, downsample_for_flow, estimate_flow_pair
from .fusion import FusionInput, fuse_luma, get_operator, recombine
from .imaging import FlowField, InvalidInputError, as_float, bilinear_warp, downup, luma, resample, rgb_to_yuv
from .masks import (
    DefocusParams,
    FocusEstimate,
    OcclusionParams,
    RejectionParams,
    UncertaintyParams,
    defocus_map,
    flow_uncertainty_map,
    occlusion_map,
    rejection_map,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(InvalidInputError):
    pass


class MetadataError(InvalidInputError):
    pass


@dataclass(frozen=True)
class AlignParams:
    search_radius: float = 200.0
    fast_threshold: float = 0.06
    match_patch: int = 11
    min_matches: int = 8

    def __post_init__(self):
        if self.search_radius <= 0 or self.fast_threshold <= 0:
            raise InvalidInputError("search_radius and fast_threshold must be > 0")
        if self.match_patch < 3 or self.match_patch % 2 == 0:
            raise InvalidInputError("match_patch must be an odd size >= 3")
        if self.min_matches < 1:
            raise InvalidInputError("min_matches must be >= 1")


_SECTIONS = {
    "align": AlignParams,
    "flow": FlowParams,
    "defocus": DefocusParams,
    "occlusion": OcclusionParams,
    "uncertainty": UncertaintyParams,
    "rejection": RejectionParams,
}


@dataclass(frozen=True)
class PipelineConfig:
    schema_version: int = SCHEMA_VERSION
    align: AlignParams = field(default_factory=AlignParams)
    flow: FlowParams = field(default_factory=FlowParams)
    defocus: DefocusParams = field(default_factory=DefocusParams)
    occlusion: OcclusionParams = field(default_factory=OcclusionParams)
    uncertainty: UncertaintyParams = field(default_factory=UncertaintyParams)
    rejection: RejectionParams = field(default_factory=RejectionParams)
    fusion_operator: str = "band_inject"
    # None: 1% of the crop's short side
    boundary_sigma: float | None = None
    dump_intermediates: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        get_operator(self.fusion_operator)
        if self.boundary_sigma is not None and self.boundary_sigma < 0:
            raise ConfigError("boundary_sigma must be >= 0")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = {}
        for key, val in d.items():
            if key in _SECTIONS:
                sec = _SECTIONS[key]
                if not isinstance(val, dict):
                    raise ConfigError(f"config section '{key}' must be an object")
                sec_known = {f.name for f in dataclasses.fields(sec)}
                bad = sorted(set(val) - sec_known)
                if bad:
                    raise ConfigError(f"unknown keys in '{key}': {bad}")
                try:
                    kwargs[key] = sec(**val)
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"invalid '{key}' section: {e}") from None
            else:
                kwargs[key] = val
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class StageTimings:
    color_matching: float = 0.0
    coarse_alignment: float = 0.0
    flow: float = 0.0
    warping: float = 0.0
    occlusion_map: float = 0.0
    defocus_map: float = 0.0
    rejection_map: float = 0.0
    fusion: float = 0.0
    blending: float = 0.0
    total: float = 0.0

    STAGES = ("color_matching", "coarse_alignment", "flow", "warping", "occlusion_map",
              "defocus_map", "rejection_map", "fusion", "blending")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.STAGES + ("total",)}


@dataclass
class PipelineResult:
    output: np.ndarray  # full W frame
    blended: np.ndarray | None  # fused crop at T resolution
    src: np.ndarray | None
    translation: Translation2D
    timings: StageTimings
    skipped: bool = False
    focus: FocusEstimate | None = None
    intermediates: dict = field(default_factory=dict)


@contextmanager
def _stage(timings: StageTimings, name: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        setattr(timings, name, getattr(timings, name) + time.perf_counter() - t0)


def _scale_rect(r: Rect, sx, sy, dx, dy, w, h) -> Rect:
    x0 = min(max(int(np.floor((r.x - dx) * sx)), 0), w)
    y0 = min(max(int(np.floor((r.y - dy) * sy)), 0), h)
    x1 = min(max(int(np.ceil((r.x + r.width - dx) * sx)), 0), w)
    y1 = min(max(int(np.ceil((r.y + r.height - dy) * sy)), 0), h)
    return Rect(x0, y0, max(x1 - x0, 0), max(y1 - y0, 0))


def run_pipeline(w_img, t_img, meta: CameraMeta, config: PipelineConfig | None = None) -> PipelineResult:
    """Fuse T's detail into W. Inputs are RGB float arrays in [0, 1]."""
    cfg = config or PipelineConfig()
    _kernels.set_threads(cfg.threads)
    timings = StageTimings()
    t_start = time.perf_counter()

    w_img = as_float(w_img, np.float32)
    t_img = as_float(t_img, np.float32)
    if w_img.ndim != 3 or w_img.shape[2] != 3 or t_img.ndim != 3 or t_img.shape[2] != 3:
        raise MetadataError("W and T must be 3-channel images")
    th, tw = t_img.shape[:2]
    wh, ww = w_img.shape[:2]
    try:
        meta.validate((ww, wh), (tw, th))
    except InvalidInputError as e:
        raise MetadataError(str(e)) from None
    dumps = {}

    with _stage(timings, "coarse_alignment"):
        src = crop_and_resample_source(w_img, meta, tw, th)
        y_src, chroma_src = rgb_to_yuv(src)
        a = cfg.align
        shift = estimate_translation(y_src, luma(t_img), a.search_radius, a.fast_threshold, a.match_patch,
                                     a.min_matches, work_scale=1.0 / meta.focal_ratio)
    if not shift.confident:
        log.warning("coarse alignment found %d matches; skipping fusion", shift.n_matches)
        timings.total = time.perf_counter() - t_start
        return PipelineResult(w_img.copy(), None, src, shift, timings, skipped=True)

    with _stage(timings, "color_matching"):
        ref = match_color(t_img, src)
        y_ref = luma(ref)

    with _stage(timings, "flow"):
        fw, fh = cfg.flow.flow_size(tw, th)
        sx, sy = fw / tw, fh / th
        y_src_lo = downsample_for_flow(y_src, fw, fh, meta.focal_ratio).astype(np.float64)
        y_ref_lo = downsample_for_flow(y_ref, fw, fh, meta.focal_ratio).astype(np.float64)
        t_lo = FlowField.constant(fh, fw, shift.dx * sx, shift.dy * sy)
        y_ref_lo_t, _ = bilinear_warp(y_ref_lo, t_lo)
        fwd, bwd = estimate_flow_pair(y_src_lo, y_ref_lo_t, cfg.flow)

    with _stage(timings, "warping"):
        # logvars stay at flow resolution; only the displacement is needed here
        full = FlowField((resample(fwd.u, tw, th, "bilinear") * (tw / fw) + shift.dx).astype(np.float32),
                         (resample(fwd.v, tw, th, "bilinear") * (th / fh) + shift.dy).astype(np.float32))
        y_ref_w, _ = bilinear_warp(y_ref, full)
        # coverage of T at flow resolution: samples that left T's frame carry no detail
        xs = np.arange(fw)[None, :] + fwd.u + shift.dx * sx
        ys = np.arange(fh)[:, None] + fwd.v + shift.dy * sy
        covered = ((xs >= 0) & (xs <= fw - 1) & (ys >= 0) & (ys <= fh - 1)).astype(np.float64)
        if cfg.dump_intermediates:
            dumps["ref_warped"] = bilinear_warp(ref, full)[0]

    with _stage(timings, "occlusion_map"):
        m_occ = occlusion_map(fwd, bwd, cfg.occlusion)
        m_occ_eff = np.maximum(m_occ, 1.0 - covered)

    with _stage(timings, "defocus_map"):
        roi = _scale_rect(meta.focus_roi, sx, sy, shift.dx, shift.dy, fw, fh)
        m_defocus, focus = defocus_map(fwd, roi, cfg.defocus)

    with _stage(timings, "rejection_map"):
        ref_low = downup(y_ref_w, meta.focal_ratio, "bilinear")
        m_reject = rejection_map(y_src, y_ref_w, meta.focal_ratio, cfg.rejection, ref_low=ref_low)

    with _stage(timings, "fusion"):
        stack = BlendStack(m_occ_eff, m_defocus, flow_uncertainty_map(fwd, cfg.uncertainty), m_reject,
                           rejection_stride=cfg.rejection.stride)
        comps = upsampled_components(stack, tw, th)
        occ_full = comps["occlusion"].astype(np.float32)
        y_fusion = fuse_luma(FusionInput(y_src, y_ref_w, occ_full, meta.focal_ratio, ref_low=ref_low),
                             cfg.fusion_operator)
        fusion_rgb = recombine(y_fusion, chroma_src)

    with _stage(timings, "blending"):
        m_blend = combine_masks(comps["occlusion"], comps["defocus"], comps["flow_uncertainty"],
                                comps["rejection"])
        sigma = cfg.boundary_sigma if cfg.boundary_sigma is not None else default_boundary_sigma(tw, th)
        m_blend = smooth_boundary(m_blend, None, sigma)
        blended = alpha_blend(fusion_rgb, src, m_blend)
        output = alpha_blend_uncrop(fusion_rgb, src, m_blend, w_img, meta)

    timings.total = time.perf_counter() - t_start
    if cfg.dump_intermediates:
        dumps.update({
            "src": src, "ref": ref, "fusion": fusion_rgb, "blended": blended,
            "m_occlusion": m_occ_eff, "m_defocus": m_defocus, "m_flow": stack.flow_uncertainty,
            "m_reject": m_reject, "m_blend": m_blend, "flow_fwd": fwd, "flow_bwd": bwd,
        })
    return PipelineResult(output, blended, src, shift, timings, focus=focus, intermediates=dumps)
