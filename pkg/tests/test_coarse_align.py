import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rig_pair, shifted_pair
from hybridzoom.coarse_align import (
    CameraMeta,
    Rect,
    crop_and_resample_source,
    estimate_translation,
    fast_corners,
    match_color,
)
from hybridzoom.imaging import InvalidInputError, luma
from hybridzoom.rigsim import multiscale_texture


@pytest.fixture(scope="module")
def big():
    return luma(multiscale_texture(800, 900, seed=5))


def test_full_rect_crop_is_identity(rng):
    w = rng.random((30, 40, 3))
    meta = CameraMeta(2.0, Rect(0, 0, 40, 30), Rect(0, 0, 1, 1))
    assert np.abs(crop_and_resample_source(w, meta, 40, 30) - w).max() <= 1e-6


def test_centered_crop_geometry():
    # W is 4000 x 3000 (width x height); every pixel stores its own column index
    w_img = np.tile(np.arange(4000, dtype=np.float64), (3000, 1))
    rect = Rect((4000 - 1333) // 2, (3000 - 1000) // 2, 1333, 1000)
    meta = CameraMeta(3.0, rect, Rect(0, 0, 10, 10))
    crop = crop_and_resample_source(w_img, meta, 1333, 1000)
    assert crop.shape == (1000, 1333)
    assert crop[0, 0] == rect.x and crop[0, -1] == rect.x + 1332
    assert rect.x == 4000 - (rect.x + rect.width) - 1  # centered up to the odd leftover pixel


def test_crop_of_constant_is_constant():
    w = np.full((60, 80, 3), 0.4)
    meta = CameraMeta(3.0, Rect(17, 11, 30, 20), Rect(0, 0, 5, 5))
    out = crop_and_resample_source(w, meta, 90, 60)
    assert out.shape == (60, 90, 3) and np.abs(out - 0.4).max() <= 1e-6


def test_rig_sim_crop_matches_tele_framing():
    w, t, meta, _ = rig_pair(seed=3, fg_disparity=(0, 0), bg_disparity=(0, 0))
    th, tw = t.shape[:2]
    src = crop_and_resample_source(w, meta, tw, th)
    tr = estimate_translation(luma(src), luma(t))
    assert tr.confident
    assert abs(tr.dx) <= 1 and abs(tr.dy) <= 1


def test_identical_images_give_zero(big):
    src, _ = shifted_pair(big, 0, 0)
    tr = estimate_translation(src, src)
    assert tr.confident and (tr.dx, tr.dy) == (0.0, 0.0)


def test_known_shift(big):
    src, ref = shifted_pair(big, 5, -3)
    tr = estimate_translation(src, ref)
    assert tr.confident
    assert abs(tr.dx - 5) <= 0.5 and abs(tr.dy + 3) <= 0.5


@pytest.mark.parametrize("d", [(0, 0), (37, -21), (-64, 45), (150, 0), (-120, -140)])
def test_integer_shifts_within_radius(big, d):
    src, ref = shifted_pair(big, *d)
    tr = estimate_translation(src, ref, search_radius=200)
    assert abs(tr.dx - d[0]) <= 0.5 and abs(tr.dy - d[1]) <= 0.5


def test_reduced_working_scale_still_exact(big):
    src, ref = shifted_pair(big, 23, 9)
    tr = estimate_translation(src, ref, work_scale=1 / 3)
    assert abs(tr.dx - 23) <= 0.5 and abs(tr.dy - 9) <= 0.5


def test_constant_images_fall_back():
    flat = np.full((120, 160), 0.5)
    tr = estimate_translation(flat, flat)
    assert (tr.dx, tr.dy) == (0.0, 0.0)
    assert not tr.confident
    assert len(fast_corners(flat)[0]) == 0


def test_match_color_identity(rng):
    img = rng.random((20, 30, 3))
    assert np.abs(match_color(img, img) - img).max() <= 1e-6


def test_match_color_offset(big):
    src = np.stack([big[:200, :300] * g for g in (0.7, 0.8, 0.9)], axis=-1)
    ref = src + 0.1
    out = match_color(ref, src)
    assert np.abs(out.mean(axis=(0, 1)) - src.mean(axis=(0, 1))).max() <= 1e-4


def test_match_color_constant_channel(rng):
    src = rng.random((16, 16, 3))
    ref = rng.random((16, 16, 3))
    ref[..., 1] = 0.3
    out = match_color(ref, src)
    assert np.allclose(out[..., 1], src[..., 1].mean(), atol=1e-6)


@given(st.integers(0, 10_000), st.floats(0.5, 1.5), st.floats(-0.2, 0.2))
@settings(max_examples=25, deadline=None)
def test_match_color_idempotent(seed, gain, offset):
    r = np.random.default_rng(seed)
    src = 0.2 + 0.6 * r.random((12, 14, 3))
    ref = np.clip(gain * (0.2 + 0.6 * r.random((12, 14, 3))) + offset, 0, 1)
    once = match_color(ref, src)
    assert np.abs(match_color(once, src) - once).max() <= 1e-6


def test_meta_validation():
    with pytest.raises(InvalidInputError):
        CameraMeta(1.0, Rect(0, 0, 4, 4), Rect(0, 0, 1, 1))
    meta = CameraMeta(2.0, Rect(90, 0, 20, 20), Rect(0, 0, 1, 1))
    with pytest.raises(InvalidInputError):
        meta.validate((100, 100), (40, 40))
    with pytest.raises(InvalidInputError):
        Rect(0, 0, -1, 3)
