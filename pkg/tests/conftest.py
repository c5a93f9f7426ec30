import functools

import numpy as np
import pytest

from hybridzoom.pipeline import PipelineConfig, run_pipeline
from hybridzoom.rigsim import scene_from_dict, synthesize_pair, two_layer_scene

# filled by test_acceptance; echoed in the terminal summary so the verdicts
# show up even when pytest captures stdout
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def _pair(items):
    return synthesize_pair(scene_from_dict(two_layer_scene(**dict(items))))


def rig_pair(**kw):
    """Cached ``(w, t, meta, labels)`` for ``two_layer_scene(**kw)``."""
    return _pair(tuple(sorted(kw.items())))


@functools.lru_cache(maxsize=None)
def _run(items):
    w, t, meta, _ = _pair(items)
    return run_pipeline(w, t, meta, PipelineConfig(dump_intermediates=True))


def rig_run(**kw):
    """Cached pipeline result (with intermediates) on ``rig_pair(**kw)``."""
    return _run(tuple(sorted(kw.items())))


def shifted_pair(big, dx, dy, h=320, w=384):
    """Centered ``(src, ref)`` windows of ``big`` with ``ref(x + d) == src(x)`` for integer ``d``."""
    y0 = (big.shape[0] - h) // 2
    x0 = (big.shape[1] - w) // 2
    src = big[y0:y0 + h, x0:x0 + w]
    ref = big[y0 - dy:y0 - dy + h, x0 - dx:x0 - dx + w]
    return src, ref


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def texture():
    from hybridzoom.imaging import luma
    from hybridzoom.rigsim import multiscale_texture

    return luma(multiscale_texture(512, 640, seed=1)).astype(np.float64)


def occlusion_family(n=8, seed=2026):
    """Seeded two-layer scenes whose occlusion band is wide enough to resolve.

    The foreground moves 12-18 px more than the background (horizontally or
    vertically), the background is defocused, and noise, focal ratio and the
    global offset vary per scene.
    """
    r = np.random.default_rng(seed)
    scenes = []
    for k in range(n):
        f = int(r.choice([2, 3]))
        gap = int(r.integers(12, 19))
        horizontal = bool(r.random() < 0.5)
        fg = (gap + 2, 0) if horizontal else (0, gap + 2)
        bg = (2, 0) if horizontal else (0, 2)
        scenes.append(dict(seed=seed * 100 + k, focal_ratio=f, fg_disparity=fg, bg_disparity=bg,
                           bg_blur=float(r.uniform(1.5, 3.0)), noise_sigma=float(r.uniform(0, 0.01)),
                           translation=(int(r.integers(-5, 6)), int(r.integers(-5, 6)))))
    return scenes


def occlusion_counts(result, labels, threshold=0.5):
    """``(true_pos, occluded, false_pos, visible)`` pixel counts for the thresholded occlusion map.

    ``visible`` pixels are in T's view and not occluded; pixels whose match
    leaves T's frame are left out of both denominators.
    """
    from hybridzoom.masks import occlusion_map

    inter = result.intermediates
    pred = occlusion_map(inter["flow_fwd"], inter["flow_bwd"]) > threshold
    occluded = labels.gt_occlusion > 0
    visible = ~occluded & (labels.out_of_view == 0)
    return int((pred & occluded).sum()), int(occluded.sum()), int((pred & visible).sum()), int(visible.sum())


@pytest.fixture(scope="session")
def pair_12mp(tmp_path_factory):
    """Directory holding a 4032x3024 benchmark pair (wide.png, tele.png, meta.json)."""
    from hybridzoom.cli import main

    out = tmp_path_factory.mktemp("pair12mp")
    assert main(["bench-pair", "--out", str(out), "--width", "4032", "--height", "3024"]) == 0
    return out
