import numpy as np
import pytest
from hypothesis import given, strategies as st

from qfuse.focus import (
    FocusFeatures, base_focus_level, build_focus_maps, detail_amplify, detail_focus_level,
    detail_grid_side, enhance, label_image, patch_gradient_l1, select_most_focused,
)
from qfuse.patches import PatchGrid, extract
from qfuse.synthetic import gaussian_blur
from conftest import random_quat


def test_amplify_examples():
    D = np.random.default_rng(0).standard_normal((6, 6, 4))
    assert np.array_equal(detail_amplify(D, 0), D)
    c = np.full((12, 12, 4), 0.5)
    assert np.allclose(detail_amplify(c, 3)[3:-3, 3:-3], 49 * 0.5)
    imp = np.zeros((7, 7, 4))
    imp[3, 3, 2] = 1
    out = detail_amplify(imp, 1)[..., 2]
    assert np.array_equal(out[2:5, 2:5], np.ones((3, 3))) and out.sum() == 9
    with pytest.raises(ValueError):
        detail_amplify(D, -1)


def test_amplify_replicates_border():
    D = np.zeros((5, 5, 4))
    D[0, 0, 1] = 1.0
    # the corner pixel is replicated into the padding: 4 copies fall in the window
    assert detail_amplify(D, 1)[0, 0, 1] == 4.0


def test_base_level_examples():
    flat = np.full((4, 4, 4), 0.7)
    assert base_focus_level(flat, np.zeros((8, 4))) == 0
    z = np.zeros((8, 4))
    z[0, 0] = 2.0
    assert base_focus_level(flat, z, theta=1.0) == pytest.approx(2.0)
    p = np.zeros((2, 2, 4))
    p[:, 1, 0] = 1.0  # [0 1; 0 1]
    assert patch_gradient_l1(p) == 2.0
    assert base_focus_level(p, np.zeros((3, 4))) == 2.0


def test_detail_level_examples():
    assert detail_focus_level(np.zeros((4, 4, 4))) == 0.0
    assert enhance(0.2, 0.2) == pytest.approx(1 - np.exp(-1), abs=1e-12)
    assert 0.999 < enhance(50.0, 0.2) <= 1.0
    with pytest.raises(ValueError):
        enhance(1.0, 0.0)


@given(st.floats(0, 5), st.floats(0, 5))
def test_enhance_monotone_bounded(x, y):
    if x < y:
        assert enhance(x) <= enhance(y)
    assert 0.0 <= enhance(x) <= 1.0


def test_levels_invariant_to_constant_offset(rng):
    p = random_quat(rng, 6, 6)
    offset = np.array([0.3, -1, 2, 0.5])
    assert patch_gradient_l1(p + offset) == pytest.approx(patch_gradient_l1(p))
    assert detail_focus_level(p + offset) == pytest.approx(detail_focus_level(p))


def test_detail_grid_side():
    assert detail_grid_side(256, 256) == 4  # round(3.28) = 3, clamped up
    assert detail_grid_side(520, 520) == 14
    assert detail_grid_side(4000, 4000) == 64
    assert detail_grid_side(3, 10) == 3


def test_select_ties_go_last():
    levels = np.array([[1.0, 2.0, 3.0], [1.0, 1.0, 4.0], [0.5, 2.0, 4.0]])
    assert list(select_most_focused(levels)) == [1, 2, 2]


def features(D, side=8, Z=None):
    M, N = D.shape[:2]
    bg = PatchGrid.disjoint(side, (M, N))
    dg = PatchGrid.disjoint(4, (M, N))
    if Z is None:
        Z = np.zeros((16, bg.patch_count, 4))
    return FocusFeatures.from_decomposition(D, Z, bg, dg)


def test_identical_inputs_pick_last(rng):
    D = random_quat(rng, 16, 16)
    maps = build_focus_maps([features(D), features(D), features(D)])
    assert np.all(maps.base == 2) and np.all(maps.detail == 2)
    assert maps.n_inputs == 3


def test_sharp_beats_blurred(rng):
    img = rng.uniform(size=(32, 32, 3))
    sharp = np.zeros((32, 32, 4))
    sharp[..., 1:] = img - img.mean()
    blurred = np.zeros_like(sharp)
    blurred[..., 1:] = gaussian_blur(img, 2.0) - img.mean()
    maps = build_focus_maps([features(sharp), features(blurred)])
    assert not maps.base.any() and not maps.detail.any()


def test_three_way_split(rng):
    img = np.zeros((16, 48, 4))
    img[..., 1:] = rng.uniform(size=(16, 48, 3))
    blurred = np.zeros_like(img)
    blurred[..., 1:] = gaussian_blur(img[..., 1:], 2.0)
    ins = []
    for k in range(3):
        x = blurred.copy()
        x[:, 16 * k:16 * (k + 1)] = img[:, 16 * k:16 * (k + 1)]
        ins.append(features(x))
    maps = build_focus_maps(ins)
    cols = maps.base_grid.origins()[:, 1]
    assert np.array_equal(maps.base, cols // 16)


def test_scaling_levels_keeps_maps(rng):
    a, b = random_quat(rng, 16, 16), random_quat(rng, 16, 16)
    m1 = build_focus_maps([features(a), features(b)])
    m2 = build_focus_maps([features(3 * a, Z=None), features(3 * b)])
    assert np.array_equal(m1.base, m2.base) and np.array_equal(m1.detail, m2.detail)


def test_base_levels_use_coefficients(rng):
    D = np.zeros((16, 16, 4))
    Z = np.zeros((16, 4, 4))
    Z[0, 2, 0] = 5.0
    lv = features(D, Z=Z).base_levels()
    assert np.allclose(lv, [0, 0, 5, 0])


def test_vectorised_levels_match_scalar(rng):
    D = random_quat(rng, 16, 16)
    f = features(D)
    grid = f.detail_grid
    cols = extract(f.Ds, grid)
    ref = [detail_focus_level(cols[:, p].reshape(4, 4, 4, order="F")) for p in range(grid.patch_count)]
    assert np.allclose(f.detail_levels(), ref)


def test_build_maps_errors(rng):
    with pytest.raises(ValueError):
        build_focus_maps([features(random_quat(rng, 16, 16))])
    with pytest.raises(ValueError):
        build_focus_maps([features(random_quat(rng, 16, 16)), features(random_quat(rng, 16, 24))])
    bg = PatchGrid.disjoint(8, (16, 16))
    with pytest.raises(ValueError):
        FocusFeatures.from_decomposition(np.zeros((16, 16, 4)), np.zeros((4, 3, 4)), bg, bg)


def test_label_image():
    g = PatchGrid.disjoint(2, (4, 4))
    img = label_image(np.array([0, 1, 2, 1]), g, 3)
    assert img.dtype == np.uint8
    assert img[0, 0] == 0 and img[0, 2] == 127 and img[2, 0] == 254
