"""Luminance detail fusion of the warped telephoto frame into the source.

Operators are looked up by name so a learned model can be registered next to
the default band-injection operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .imaging import InvalidInputError, as_float, check_same_size, downup, yuv_to_rgb


@dataclass
class FusionInput:
    y_src: np.ndarray
    y_ref_warped: np.ndarray
    occlusion: np.ndarray
    focal_ratio: float
    # optional cached downup(y_ref_warped, focal_ratio)
    ref_low: np.ndarray | None = None

    def __post_init__(self):
        self.y_src = as_float(self.y_src)
        self.y_ref_warped = as_float(self.y_ref_warped, self.y_src.dtype)
        self.occlusion = as_float(self.occlusion, self.y_src.dtype)
        planes = [self.y_src, self.y_ref_warped, self.occlusion]
        if any(a.ndim != 2 for a in planes):
            raise InvalidInputError("fusion planes must be single-channel")
        check_same_size(*planes, what="fusion inputs")


def detail_band(y_ref_warped, focal_ratio, ref_low=None):
    """What T resolves beyond W's sampling rate: ``y - downup(y)``."""
    if ref_low is None:
        ref_low = downup(y_ref_warped, focal_ratio, "bilinear")
    return y_ref_warped - ref_low


def band_inject(inp: FusionInput):
    d = detail_band(inp.y_ref_warped, inp.focal_ratio, inp.ref_low)
    out = inp.y_src + (1.0 - inp.occlusion) * d
    return np.clip(out, 0.0, 1.0, out=out)


FUSION_OPERATORS: dict[str, Callable[[FusionInput], np.ndarray]] = {
    "band_inject": band_inject,
}


def get_operator(name: str):
    try:
        return FUSION_OPERATORS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown fusion operator {name!r}; known: {sorted(FUSION_OPERATORS)}") from None


def fuse_luma(inp: FusionInput, operator: str = "band_inject"):
    out = get_operator(operator)(inp)
    if out.shape != inp.y_src.shape:
        raise InvalidInputError(f"fusion operator {operator!r} changed the output size")
    return out


def recombine(y_fusion, chroma_src):
    """Fused luma with the source chroma, back to RGB."""
    return yuv_to_rgb(y_fusion, chroma_src)
