"""Synthetic multi-focus inputs with known focus regions."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

SPLITS = ("left-right", "top-bottom", "thirds")


def region_labels(shape, split: str) -> np.ndarray:
    """Integer map assigning every pixel to the input that is sharp there."""
    M, N = shape[:2]
    lab = np.zeros((M, N), dtype=int)
    if split == "left-right":
        lab[:, N // 2:] = 1
    elif split == "top-bottom":
        lab[M // 2:, :] = 1
    elif split == "thirds":
        edges = [round(N * k / 3) for k in range(4)]
        for k in range(3):
            lab[:, edges[k]:edges[k + 1]] = k
    else:
        raise ValueError(f"unknown split {split!r}; choose from {SPLITS}")
    return lab


def gaussian_blur(img, sigma: float) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if sigma <= 0:
        return img.copy()
    return ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="reflect")


def synth_pair(gt, split: str = "left-right", sigma: float = 3.0):
    """Inputs that are sharp on their own region and blurred elsewhere.

    Returns ``(inputs, labels)``; ``inputs[n]`` equals ``gt`` exactly wherever
    ``labels == n``.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    gt = np.asarray(gt, dtype=float)
    labels = region_labels(gt.shape, split)
    blurred = gaussian_blur(gt, sigma)
    n = int(labels.max()) + 1
    inputs = [np.where((labels == k)[..., None], gt, blurred) for k in range(n)]
    return inputs, labels


def patch_truth(labels, grid):
    """Per-patch true label, or -1 for patches straddling a region seam."""
    out = np.empty(grid.patch_count, dtype=int)
    for p, (rs, cs) in enumerate(grid.slices()):
        block = labels[rs, cs]
        out[p] = block.flat[0] if np.all(block == block.flat[0]) else -1
    return out


def psnr(x, ref, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(x, float) - np.asarray(ref, float)) ** 2))
    return float("inf") if mse == 0 else 10 * np.log10(peak ** 2 / mse)
