"""Patch-wise dual-scale focus measures and focus maps."""
from __future__ import annotations

from dataclasses import dataclass

import logging

import numpy as np
from scipy import ndimage

from .patches import PatchGrid, extract
from .quaternion import qabs

log = logging.getLogger(__name__)


def detail_amplify(D, r: int = 3) -> np.ndarray:
    """Sum of every (2r+1) x (2r+1) window, replicate-padded at the border."""
    if r < 0:
        raise ValueError("window radius must be nonnegative")
    D = np.asarray(D, dtype=float)
    if r == 0:
        return D.copy()
    kernel = np.ones((2 * r + 1, 2 * r + 1))
    out = np.empty_like(D)
    for c in range(D.shape[-1]):
        out[..., c] = ndimage.correlate(D[..., c], kernel, mode="nearest")
    return out


def patch_gradient_l1(patch) -> float:
    """l1 norm of the in-patch forward differences (no wrap-around)."""
    patch = np.asarray(patch, dtype=float)
    g1 = qabs(np.diff(patch, axis=0)).sum()
    g2 = qabs(np.diff(patch, axis=1)).sum()
    return float(g1 + g2)


def base_focus_level(d_patch, z_col, theta: float = 1.0) -> float:
    return patch_gradient_l1(d_patch) + theta * float(np.sqrt(np.sum(np.square(z_col))))


def enhance(x, gamma: float = 0.2):
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 1.0 - np.exp(-np.asarray(x, dtype=float) / gamma)


def detail_focus_level(ds_patch, gamma: float = 0.2) -> float:
    return float(enhance(patch_gradient_l1(ds_patch), gamma))


def _grid_gradient_l1(Q, grid: PatchGrid) -> np.ndarray:
    """Vectorised :func:`patch_gradient_l1` over every patch of ``grid``."""
    s = grid.patch_side
    cols = extract(Q, grid)
    blocks = cols.reshape((s, s) + cols.shape[1:], order="F")  # (row, col, P, 4)
    g1 = qabs(np.diff(blocks, axis=0)).sum(axis=(0, 1))
    g2 = qabs(np.diff(blocks, axis=1)).sum(axis=(0, 1))
    return g1 + g2


def detail_grid_side(rows: int, cols: int, lo: int = 4, hi: int = 64) -> int:
    side = int(round(5e-5 * rows * cols))
    return int(min(max(side, lo), hi, rows, cols))


@dataclass
class FocusFeatures:
    """Per-input detail layer, its amplified version and patch codes."""

    D: np.ndarray
    Ds: np.ndarray
    Z: np.ndarray
    base_grid: PatchGrid
    detail_grid: PatchGrid

    @classmethod
    def from_decomposition(cls, D, Z, base_grid: PatchGrid, detail_grid: PatchGrid, r: int = 3):
        if Z.shape[1] != base_grid.patch_count:
            raise ValueError("coefficient columns do not match the base-scale patch grid")
        return cls(D, detail_amplify(D, r), Z, base_grid, detail_grid)

    def base_levels(self, theta: float = 1.0) -> np.ndarray:
        zn = np.sqrt(np.sum(np.square(self.Z), axis=(0, 2)))
        return _grid_gradient_l1(self.D, self.base_grid) + theta * zn

    def detail_gradients(self) -> np.ndarray:
        return _grid_gradient_l1(self.Ds, self.detail_grid)

    def detail_levels(self, gamma: float = 0.2) -> np.ndarray:
        return enhance(self.detail_gradients(), gamma)


def select_most_focused(levels) -> np.ndarray:
    """Index of the largest level per column; ties go to the last input."""
    levels = np.asarray(levels)
    n = levels.shape[0]
    tied = np.flatnonzero(np.sum(levels == levels.max(axis=0), axis=0) > 1)
    if tied.size:
        log.debug("focus-level ties on %d patches: %s", tied.size, tied[:20].tolist())
    return n - 1 - np.argmax(levels[::-1], axis=0)


@dataclass
class FocusMaps:
    base: np.ndarray
    detail: np.ndarray
    base_grid: PatchGrid
    detail_grid: PatchGrid
    base_levels: np.ndarray
    detail_levels: np.ndarray

    @property
    def n_inputs(self) -> int:
        return self.base_levels.shape[0]


def build_focus_maps(features, theta: float = 1.0, gamma: float = 0.2) -> FocusMaps:
    features = list(features)
    if len(features) < 2:
        raise ValueError("focus maps need at least two inputs")
    ref = features[0]
    for f in features[1:]:
        if f.D.shape != ref.D.shape or f.base_grid != ref.base_grid or f.detail_grid != ref.detail_grid:
            raise ValueError("all inputs must share dimensions and patch grids")
    lb = np.stack([f.base_levels(theta) for f in features])
    gd = np.stack([f.detail_gradients() for f in features])
    # The enhancement is strictly increasing, so ranking its argument is the
    # same rule; ranking the float values would tie wherever both saturate
    # to 1.0.
    return FocusMaps(select_most_focused(lb), select_most_focused(gd),
                     ref.base_grid, ref.detail_grid, lb, enhance(gd, gamma))


def label_image(labels, grid: PatchGrid, n_inputs: int) -> np.ndarray:
    """8-bit debug rendering of a patch label map."""
    step = 255 // max(n_inputs - 1, 1)
    out = np.zeros((grid.rows, grid.cols), dtype=np.uint8)
    for lab, (rs, cs) in zip(labels, grid.slices()):
        out[rs, cs] = lab * step
    return out
