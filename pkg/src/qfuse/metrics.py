"""Fusion quality metrics on luminance: normalised mutual information (Q_MI)
and Xydeas-Petrovic gradient preservation (Q_G)."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
_SOBEL_Y = _SOBEL_X.T

# sigmoid shape of the edge-strength / orientation preservation terms
_KG, _SG = -15.0, 0.5
_KA, _SA = -22.0, 0.8


def luminance(img) -> np.ndarray:
    """ITU-R 601 luma of an RGB array; 2-D arrays pass through."""
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img
    if img.shape[-1] == 4:  # quaternion layout
        img = img[..., 1:]
    return img @ np.array([0.299, 0.587, 0.114])


def _levels(y, bins):
    return np.clip(np.rint(y * (bins - 1)), 0, bins - 1).astype(int)


def _entropy(p):
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def mutual_information(x, y, bins: int = 256) -> tuple[float, float, float]:
    """Return ``(MI, H(x), H(y))`` in bits from a joint histogram."""
    a, b = _levels(x, bins).ravel(), _levels(y, bins).ravel()
    joint = np.bincount(a * bins + b, minlength=bins * bins).reshape(bins, bins) / a.size
    hx, hy = _entropy(joint.sum(1)), _entropy(joint.sum(0))
    return hx + hy - _entropy(joint.ravel()), hx, hy


def _check(fused, inputs):
    f = luminance(fused)
    srcs = [luminance(im) for im in inputs]
    for s in srcs:
        if s.shape != f.shape:
            raise ValueError(f"input shape {s.shape} does not match fused {f.shape}")
    return f, srcs


def metric_qmi(fused, inputs, bins: int = 256) -> float:
    """``2 * sum_n MI(I_n, F) / (H(I_n) + H(F))``; equals 2 for two identical inputs."""
    f, srcs = _check(fused, inputs)
    total = 0.0
    for s in srcs:
        mi, hs, hf = mutual_information(s, f, bins)
        if hs + hf > 0:
            total += mi / (hs + hf)
    return max(2.0 * total, 0.0)


def _edges(y):
    gx = ndimage.correlate(y, _SOBEL_X, mode="reflect")
    gy = ndimage.correlate(y, _SOBEL_Y, mode="reflect")
    g = np.hypot(gx, gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(gx == 0, np.pi / 2, np.arctan(gy / gx))
    return g, a


def _sigmoid(x, k, s):
    # scaled so that perfect preservation (x = 1) scores exactly 1
    gain = 1.0 + np.exp(k * (1.0 - s))
    return gain / (1.0 + np.exp(k * (x - s)))


def _preservation(gs, as_, gf, af):
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(gs > gf, gf / gs, gs / gf)
    g = np.where((gs == 0) & (gf == 0), 1.0, g)
    a = 1.0 - np.abs(as_ - af) / (np.pi / 2)
    return _sigmoid(g, _KG, _SG) * _sigmoid(a, _KA, _SA)


def metric_qg(fused, inputs) -> float:
    """Edge-strength weighted average of per-pixel edge preservation."""
    f, srcs = _check(fused, inputs)
    gf, af = _edges(f)
    num = den = 0.0
    for s in srcs:
        gs, as_ = _edges(s)
        num += float((_preservation(gs, as_, gf, af) * gs).sum())
        den += float(gs.sum())
    if den == 0:
        return 1.0 if not gf.any() else 0.0
    return float(np.clip(num / den, 0.0, 1.0))
