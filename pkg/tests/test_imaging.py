import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridzoom.imaging import (
    FlowField,
    InvalidInputError,
    bilinear_warp,
    build_pyramid,
    downup,
    gaussian_blur,
    luma,
    resample,
    resample_region,
    rgb_to_yuv,
    shrink,
    yuv_to_rgb,
)


def test_gray_has_neutral_chroma():
    y, c = rgb_to_yuv(np.full((4, 4, 3), 0.5))
    assert np.allclose(y, 0.5, atol=1e-12)
    assert np.allclose(c, 0.5, atol=1e-12)


def test_red_luma_weight():
    img = np.zeros((2, 2, 3))
    img[..., 0] = 1.0
    assert np.allclose(rgb_to_yuv(img)[0], 0.299, atol=1e-12)
    assert np.allclose(luma(img), 0.299, atol=1e-12)


def test_yuv_round_trip_random(rng):
    img = rng.random((8, 8, 3))
    assert np.abs(yuv_to_rgb(*rgb_to_yuv(img)) - img).max() <= 1e-6


def test_neutral_chroma_to_gray():
    out = yuv_to_rgb(np.full((3, 3), 0.5), np.full((3, 3, 2), 0.5))
    assert np.allclose(out, 0.5, atol=1e-12)


def test_blue_round_trip():
    img = np.zeros((1, 1, 3))
    img[..., 2] = 1.0
    assert np.abs(yuv_to_rgb(*rgb_to_yuv(img)) - img).max() <= 1e-6


def test_wrong_channel_count():
    with pytest.raises(InvalidInputError):
        rgb_to_yuv(np.zeros((4, 4, 2)))
    with pytest.raises(InvalidInputError):
        rgb_to_yuv(np.zeros((4, 4)))


@given(arrays(np.float64, (5, 7, 3), elements=st.floats(0, 1)))
@settings(max_examples=60, deadline=None)
def test_yuv_round_trip_property(img):
    y, c = rgb_to_yuv(img)
    assert np.abs(yuv_to_rgb(y, c) - img).max() <= 1e-6
    # and the reverse direction, starting from planes of an in-gamut image
    y2, c2 = rgb_to_yuv(yuv_to_rgb(y, c))
    assert np.abs(y2 - y).max() <= 1e-6 and np.abs(c2 - c).max() <= 1e-6


@pytest.mark.parametrize("kernel", ["bilinear", "bicubic"])
@pytest.mark.parametrize("size", [(1, 1), (7, 3), (64, 48), (200, 11)])
def test_resample_preserves_constant(kernel, size):
    out = resample(np.full((20, 30), 0.3), *size, kernel=kernel)
    assert out.shape == (size[1], size[0])
    assert np.abs(out - 0.3).max() <= 1e-6


def test_bilinear_upsample_of_two_pixel_ramp():
    out = resample(np.array([[0.0, 1.0]]), 4, 1, "bilinear")[0]
    # half-pixel grid: the inserted samples sit a quarter pixel either side of the midpoint
    assert np.allclose(out, [0.0, 0.25, 0.75, 1.0])
    assert math.isclose(0.5 * (out[1] + out[2]), 0.5)
    odd = resample(np.array([[0.0, 1.0]]), 3, 1, "bilinear")[0]
    assert math.isclose(odd[1], 0.5)


def test_integer_down_of_up_returns_samples(rng):
    img = rng.random((12, 10))
    up = resample(img, 30, 36, "bicubic")
    assert np.allclose(resample(up, 10, 12, "bicubic")[1:-1, 1:-1], img[1:-1, 1:-1], atol=0.05)


def test_bicubic_downup_checkerboard_loses_energy():
    cb = (np.indices((32, 32)).sum(axis=0) % 2).astype(np.float64)
    back = resample(resample(cb, 16, 16, "bicubic"), 32, 32, "bicubic")
    assert np.sum((back - cb) ** 2) > 0


def test_blur_sigma_zero_is_identity(rng):
    img = rng.random((9, 11, 3))
    assert np.array_equal(gaussian_blur(img, 0), img)


@given(st.floats(0.3, 15.0), st.floats(0, 1))
@settings(max_examples=30, deadline=None)
def test_blur_preserves_constant(sigma, value):
    out = gaussian_blur(np.full((16, 24), value), sigma)
    assert np.abs(out - value).max() <= 1e-6


def test_impulse_peak_matches_discrete_gaussian():
    img = np.zeros((81, 81))
    img[40, 40] = 1.0
    out = gaussian_blur(img, 10.0)
    # normalized 1-D kernel truncated at 3 sigma; the 2-D peak is its square
    peak_1d = 1.0 / sum(math.exp(-x * x / 200.0) for x in range(-30, 31))
    assert out[40, 40] == pytest.approx(peak_1d**2, abs=1e-12)


def test_zero_flow_warp_is_identity(rng):
    img = rng.random((13, 17, 3))
    out, valid = bilinear_warp(img, FlowField.constant(13, 17, 0, 0))
    assert np.array_equal(out, img)
    assert np.all(valid == 1)


def _ramp(h=10, w=20, slope=0.1):
    return np.tile(np.arange(w) * slope, (h, 1))


def test_integer_flow_shifts_ramp():
    img = _ramp()
    out, valid = bilinear_warp(img, FlowField.constant(10, 20, 1, 0))
    assert np.allclose(out[:, :-1], img[:, 1:])
    assert np.all(valid[:, :-1] == 1) and np.all(valid[:, -1] == 0)


def test_half_pixel_flow_on_ramp():
    img = _ramp()
    out, _ = bilinear_warp(img, FlowField.constant(10, 20, 0.5, 0))
    assert np.allclose(out[:, :-1] - img[:, :-1], 0.05, atol=1e-12)


def test_pyramid_levels_one():
    img = np.ones((20, 20))
    pyr = build_pyramid(img, 1)
    assert len(pyr) == 1 and pyr[0] is img


def test_pyramid_sizes():
    pyr = build_pyramid(np.zeros((64, 64)), 3, 0.5)
    assert [p.shape for p in pyr] == [(64, 64), (32, 32), (16, 16)]


def test_pyramid_stops_before_8px():
    pyr = build_pyramid(np.zeros((40, 40)), 6, 0.5)
    assert [p.shape[0] for p in pyr] == [40, 20, 10]


def test_constant_pyramid_stays_constant():
    for level in build_pyramid(np.full((64, 48), 0.7), 4, 0.5):
        assert np.abs(level - 0.7).max() <= 1e-6


def test_shrink_and_downup_keep_constant_and_size():
    img = np.full((30, 45, 3), 0.25)
    assert np.abs(shrink(img, 15, 10, 1.2) - 0.25).max() <= 1e-6
    out = downup(img, 3)
    assert out.shape == img.shape and np.abs(out - 0.25).max() <= 1e-6


def test_resample_region_full_rect_matches_resample(rng):
    img = rng.random((20, 30))
    a = resample_region(img, 0, 0, 30, 20, 45, 30, "bicubic")
    assert np.allclose(a, resample(img, 45, 30, "bicubic"), atol=1e-12)


def test_bad_sizes_rejected():
    with pytest.raises(InvalidInputError):
        resample(np.zeros((4, 4)), 0, 4)
    with pytest.raises(InvalidInputError):
        resample(np.zeros((4, 4)), 4, 4, "lanczos")
