import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from qfuse.focus import FocusMaps
from qfuse.fusion import (
    FusionConfig, MultiFocusFusion, SsimParams, adaptive_weights, fuse, fuse_detailed, paste,
    qbdf_fuse, qssim, qssim_score, qssr_refine, qssr_scores, worker_count, write_scores, wqssim,
)
from qfuse.patches import PatchGrid, extract
from qfuse.qfed import QfedConfig
from qfuse.synthetic import gaussian_blur, synth_pair
from qfuse.validation import to_quaternion
from conftest import random_quat

FAST = FusionConfig(qfed=QfedConfig(n_atoms=64, max_iter=40))

patch = arrays(np.float64, (4, 4, 4), elements=st.floats(0, 1, allow_nan=False))


def maps_for(base, detail, shape=(16, 16), n=2):
    bg, dg = PatchGrid.disjoint(8, shape), PatchGrid.disjoint(4, shape)
    return FocusMaps(np.asarray(base), np.asarray(detail), bg, dg,
                     np.zeros((n, bg.patch_count)), np.zeros((n, dg.patch_count)))


# --- QBDF -----------------------------------------------------------------

def test_qbdf_identical_inputs(rng):
    X = random_quat(rng, 16, 16)
    dual = qbdf_fuse([X, X.copy()], maps_for([1, 0, 1, 1], rng.integers(0, 2, 16)))
    assert np.array_equal(dual.F1, X) and np.array_equal(dual.F2, X)


def test_qbdf_all_zero_labels(rng):
    A, B = random_quat(rng, 16, 16), random_quat(rng, 16, 16)
    dual = qbdf_fuse([A, B], maps_for([0] * 4, [0] * 16))
    assert np.array_equal(dual.F1, A) and np.array_equal(dual.F2, A)


def test_qbdf_checkerboard(rng):
    A, B = random_quat(rng, 16, 16), random_quat(rng, 16, 16)
    labels = np.array([0, 1, 1, 0])
    F1 = qbdf_fuse([A, B], maps_for(labels, [0] * 16)).F1
    srcs = [A, B]
    for lab, (rs, cs) in zip(labels, PatchGrid.disjoint(8, (16, 16)).slices()):
        assert np.array_equal(F1[rs, cs], srcs[lab][rs, cs])


def test_qbdf_size_mismatch(rng):
    A = random_quat(rng, 24, 24)
    with pytest.raises(ValueError):
        qbdf_fuse([A, A], maps_for([0] * 4, [0] * 16))


def test_paste_later_patch_wins():
    g = PatchGrid(2, 1, 2, 3)  # two overlapping patches
    A, B = np.zeros((2, 3, 4)), np.ones((2, 3, 4))
    out = paste([A, B], [1, 0], g)
    assert np.array_equal(out[:, 0], B[:, 0]) and np.array_equal(out[:, 1:], A[:, 1:])


# --- QSSIM ----------------------------------------------------------------

def test_qssim_identity(rng):
    X = rng.uniform(size=(4, 4, 4))
    assert qssim_score(X, X) == pytest.approx(1.0, abs=1e-6)


def test_qssim_constant_offset():
    X = np.full((4, 4, 4), 0.4)
    Y = X + 0.1
    q = qssim(X, Y)
    # sigma terms are both zero so the contrast factor is exactly 1
    mu_x, mu_y = X[0, 0], Y[0, 0]
    a = (2 * mu_x @ mu_y + 1e-6) / (mu_x @ mu_x + mu_y @ mu_y + 1e-6)
    assert qssim_score(X, Y) == pytest.approx(a, rel=1e-12)
    assert qssim_score(X, Y) < 1
    assert q.shape == (4,)


def test_qssim_shape_mismatch():
    with pytest.raises(ValueError):
        qssim(np.zeros((4, 4, 4)), np.zeros((2, 8, 4)))


def test_qssim_bounds_random(rng):
    for _ in range(1000):
        X, Y = rng.uniform(size=(2, 4, 4, 4))
        assert 0 <= qssim_score(X, Y) <= 1 + 1e-6


@settings(max_examples=50)
@given(patch, patch)
def test_qssim_symmetric_and_bounded(X, Y):
    s = qssim_score(X, Y)
    assert s == pytest.approx(qssim_score(Y, X), abs=1e-12)
    assert 0 <= s <= 1 + 1e-6


def test_ssim_params_validation():
    with pytest.raises(ValueError):
        SsimParams(C1=0)


# --- adaptive weights -----------------------------------------------------

def test_weights_equal_levels():
    tau = adaptive_weights(np.array([[0.3], [0.3]]), 1e-10)
    assert tau[0, 0] == pytest.approx(0.5, abs=1e-6)
    assert tau[0, 0] + tau[1, 0] == 1.0


def test_weights_limit(rng):
    X, P1, P2 = rng.uniform(size=(3, 4, 4, 4))
    tau = adaptive_weights(np.array([0.9, 0.0]))
    assert tau[0] == pytest.approx(1.0, abs=1e-9)
    assert wqssim(X, [P1, P2], [0.9, 0.0]) == pytest.approx(qssim_score(X, P1), abs=1e-9)


@given(arrays(np.float64, (3, 5), elements=st.floats(0, 1)))
def test_weights_sum_to_one(levels):
    tau = adaptive_weights(levels)
    assert np.all(tau.sum(axis=0) == pytest.approx(1.0, abs=1e-15))
    assert np.all(tau[:-1] >= 0)


def test_weights_two_inputs_sum_exact(rng):
    tau = adaptive_weights(rng.uniform(size=(2, 1000)))
    assert np.all(tau[0] + tau[1] == 1.0)


# --- QSSR -----------------------------------------------------------------

def test_refine_equal_candidates(rng):
    g = PatchGrid.disjoint(4, (8, 8))
    F = rng.uniform(size=(8, 8, 4))
    out, choice = qssr_refine(F, F.copy(), [F, rng.uniform(size=(8, 8, 4))], np.ones((2, 4)), g)
    assert np.array_equal(out, F) and np.all(choice == 1)  # ties keep F2


def test_refine_prefers_focused_copy(rng):
    g = PatchGrid.disjoint(4, (8, 8))
    sharp = np.zeros((8, 8, 4))
    sharp[..., 1:] = rng.uniform(size=(8, 8, 3))
    blur = np.zeros_like(sharp)
    blur[..., 1:] = gaussian_blur(sharp[..., 1:], 1.5)
    levels = np.array([[0.9] * 4, [0.2] * 4])
    out, choice = qssr_refine(sharp, blur, [sharp, blur], levels, g)
    assert np.array_equal(out, sharp) and not choice.any()


def test_refine_matches_scalar_wqssim(rng):
    g = PatchGrid.disjoint(4, (8, 8))
    ins = [rng.uniform(size=(8, 8, 4)) for _ in range(3)]
    F1, F2 = rng.uniform(size=(2, 8, 8, 4))
    levels = rng.uniform(size=(3, 4))
    scores = qssr_scores(F1, F2, ins, levels, g)
    for p, (rs, cs) in enumerate(g.slices()):
        srcs = [im[rs, cs] for im in ins]
        assert scores[0, p] == pytest.approx(wqssim(F1[rs, cs], srcs, levels[:, p]), abs=1e-12)
        assert scores[1, p] == pytest.approx(wqssim(F2[rs, cs], srcs, levels[:, p]), abs=1e-12)


def test_write_scores(tmp_path):
    path = tmp_path / "wq.csv"
    write_scores(np.array([[0.5, 0.9], [0.7, 0.9]]), np.array([1, 1]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "patch,wq_base,wq_detail,choice" and lines[1] == "0,0.5,0.7,1"


# --- end to end -----------------------------------------------------------

def small_pair(scene):
    gt = scene[64:96, 64:96]
    ins, lab = synth_pair(gt, "left-right", 2.0)
    return gt, [to_quaternion(i) for i in ins], lab


def test_fuse_is_copy_only(scene):
    gt, ins, _ = small_pair(scene)
    res = fuse_detailed(ins, FAST)
    g = res.maps.detail_grid
    cols = extract(res.fused, g)
    srcs = [extract(im, g) for im in ins]
    same = np.stack([np.all(cols == s, axis=(0, 2)) for s in srcs])
    assert np.all(same.any(axis=0))
    assert np.all(res.fused[..., 0] == 0)
    assert res.fused.min() >= 0 and res.fused.max() <= 1
    assert res.scores.shape == (2, g.patch_count)


def test_fuse_identical_inputs(scene):
    I = to_quaternion(scene[:32, :32])
    assert np.array_equal(fuse([I, I.copy()], FAST), I)


def test_fuse_permutation_consistency(scene):
    # Swapping inputs may only change patches where some tie was broken
    # toward the last input.
    _, ins, _ = small_pair(scene)
    a = fuse_detailed(ins, FAST)
    b = fuse_detailed(ins[::-1], FAST)
    g, bg = a.maps.detail_grid, a.maps.base_grid
    diff = np.any(extract(a.fused, g) != extract(b.fused, g), axis=(0, 2))
    lv = a.maps.detail_levels
    detail_tie = lv[0] == lv[1]
    lb = a.maps.base_levels
    base_tie_px = np.zeros((bg.rows, bg.cols), dtype=bool)
    for tie, (rs, cs) in zip(lb[0] == lb[1], bg.slices()):
        base_tie_px[rs, cs] = tie
    o = g.origins()
    base_tie = base_tie_px[o[:, 0], o[:, 1]]
    wq_tie = a.scores[0] == a.scores[1]
    assert np.array_equal(a.maps.detail[~detail_tie], 1 - b.maps.detail[~detail_tie])
    assert not np.any(diff & ~(detail_tie | base_tie | wq_tie))


def test_fuse_three_inputs(scene):
    gt = scene[64:96, 32:80]
    ins, lab = synth_pair(gt, "thirds", 2.0)
    out = fuse([to_quaternion(i) for i in ins], FAST)
    assert out.shape == (32, 48, 4)


def test_fuse_rejects_bad_stacks(rng):
    with pytest.raises(ValueError):
        fuse([np.zeros((16, 16, 4))])
    with pytest.raises(ValueError):
        fuse([np.zeros((16, 16, 4)), np.zeros((16, 24, 4))])


def test_worker_count(monkeypatch):
    monkeypatch.setenv("QFUSE_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("QFUSE_THREADS", "zero")
    assert worker_count() == 1
    monkeypatch.setenv("QFUSE_THREADS", "-2")
    assert worker_count() == 1


def test_threaded_decomposition_matches_serial(scene, monkeypatch):
    _, ins, _ = small_pair(scene)
    serial = fuse(ins, FAST)
    monkeypatch.setenv("QFUSE_THREADS", "2")
    assert np.array_equal(fuse(ins, FAST), serial)


# --- estimator ------------------------------------------------------------

def test_estimator_api(scene):
    gt, ins, _ = small_pair(scene)
    rgb = [i[..., 1:] for i in ins]
    est = MultiFocusFusion(n_atoms=64, max_iter=40)
    params = est.get_params()
    assert params["gamma"] == 0.2 and params["C1"] == 1e-6 and params["shrink_mode"] == "columnwise"
    out = est.fit_transform(rgb)
    assert out.shape == (32, 32, 3)
    assert est.n_inputs_ == 2 and len(est.n_iter_) == 2
    # re-applying the fitted decisions to the same inputs reproduces the output
    assert np.array_equal(est.transform(rgb), out)
    with pytest.raises(ValueError):
        est.transform(rgb[:1] * 3)


def test_estimator_not_fitted():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        MultiFocusFusion().transform()


def test_estimator_clone():
    from sklearn.base import clone
    est = MultiFocusFusion(beta=2.0, detail_patch=8)
    c = clone(est)
    assert c.get_params() == est.get_params()
