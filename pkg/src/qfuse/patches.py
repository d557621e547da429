"""Patch extraction / reassembly, K-means grouping and the analytic dictionary."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .quaternion import real_to_quaternion


@dataclass(frozen=True)
class PatchGrid:
    """Square patches of side ``patch_side`` laid out with ``stride``.

    The last row/column of patches is clamped to the image border, so every
    pixel is covered even when the stride does not divide the image size.
    """

    patch_side: int
    stride: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.patch_side < 1 or self.stride < 1:
            raise ValueError("patch side and stride must be positive")
        if self.stride > self.patch_side:
            raise ValueError(f"stride {self.stride} > patch side {self.patch_side} leaves pixels uncovered")
        if self.patch_side > min(self.rows, self.cols):
            raise ValueError(
                f"patch side {self.patch_side} exceeds image size {self.rows}x{self.cols}"
            )

    @classmethod
    def disjoint(cls, side: int, shape) -> "PatchGrid":
        return cls(side, side, int(shape[0]), int(shape[1]))

    @staticmethod
    def _starts(length, side, stride):
        starts = list(range(0, length - side + 1, stride))
        if starts[-1] != length - side:
            starts.append(length - side)
        return np.array(starts)

    @property
    def row_starts(self) -> np.ndarray:
        return self._starts(self.rows, self.patch_side, self.stride)

    @property
    def col_starts(self) -> np.ndarray:
        return self._starts(self.cols, self.patch_side, self.stride)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return len(self.row_starts), len(self.col_starts)

    @property
    def patch_count(self) -> int:
        r, c = self.grid_shape
        return r * c

    @property
    def d(self) -> int:
        return self.patch_side ** 2

    def origins(self) -> np.ndarray:
        """``(P, 2)`` top-left corners in raster order."""
        rr, cc = np.meshgrid(self.row_starts, self.col_starts, indexing="ij")
        return np.column_stack([rr.ravel(), cc.ravel()])

    def slices(self):
        s = self.patch_side
        for r, c in self.origins():
            yield slice(r, r + s), slice(c, c + s)

    def check_image(self, Q) -> None:
        if Q.shape[:2] != (self.rows, self.cols):
            raise ValueError(f"image shape {Q.shape[:2]} does not match grid {(self.rows, self.cols)}")


def extract(Q, grid: PatchGrid) -> np.ndarray:
    """Stack column-major vectorised patches into a ``(d, P, C)`` array."""
    Q = np.asarray(Q, dtype=float)
    grid.check_image(Q)
    s = grid.patch_side
    win = sliding_window_view(Q, (s, s), axis=(0, 1))  # (M', N', C, s, s)
    rr, cc = np.meshgrid(grid.row_starts, grid.col_starts, indexing="ij")
    sel = win[rr.ravel(), cc.ravel()]  # (P, C, s_row, s_col)
    # column-major: row index varies fastest
    cols = np.swapaxes(sel, -1, -2).reshape(sel.shape[0], sel.shape[1], s * s)
    return np.ascontiguousarray(np.transpose(cols, (2, 0, 1)))


def accumulate(patches, grid: PatchGrid) -> np.ndarray:
    """Adjoint of :func:`extract`: scatter-add every patch back in place."""
    patches = np.asarray(patches, dtype=float)
    _check_patches(patches, grid)
    s = grid.patch_side
    out = np.zeros((grid.rows, grid.cols) + patches.shape[2:])
    blocks = patches.reshape((s, s) + patches.shape[1:], order="F")  # (s_row, s_col, P, C)
    for p, (rs, cs) in enumerate(grid.slices()):
        out[rs, cs] += blocks[:, :, p]
    return out


def coverage(grid: PatchGrid) -> np.ndarray:
    cnt = np.zeros((grid.rows, grid.cols))
    for rs, cs in grid.slices():
        cnt[rs, cs] += 1
    return cnt


def reassemble(patches, grid: PatchGrid) -> np.ndarray:
    """Inverse of :func:`extract`; overlapping copies are averaged."""
    acc = accumulate(patches, grid)
    cnt = coverage(grid)
    return acc / cnt.reshape(cnt.shape + (1,) * (acc.ndim - 2))


def _check_patches(patches, grid):
    if patches.ndim < 2 or patches.shape[0] != grid.d or patches.shape[1] != grid.patch_count:
        raise ValueError(
            f"patch matrix {patches.shape[:2]} does not match grid ({grid.d}, {grid.patch_count})"
        )


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------

@dataclass
class PatchGrouping:
    """Group index (0-based) of every patch column."""

    assignments: np.ndarray
    n_groups: int
    inertia_history: list = field(default_factory=list)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_groups)

    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignments == k) for k in range(self.n_groups)]


def default_group_count(n_patches: int) -> int:
    return max(1, math.ceil(n_patches / 100))


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _farthest_point_init(X, K, rng):
    idx = [int(rng.integers(X.shape[0]))]
    mind = _sq_dists(X, X[idx])[:, 0]
    for _ in range(1, K):
        nxt = int(np.argmax(mind))
        idx.append(nxt)
        mind = np.minimum(mind, _sq_dists(X, X[nxt:nxt + 1])[:, 0])
    return X[idx].copy()


def _repair_empty(X, labels, centers, K):
    counts = np.bincount(labels, minlength=K)
    for j in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[np.argmax(((X[members] - centers[big]) ** 2).sum(1))]
        labels[far] = j
        centers[j] = X[far]
        counts[big] -= 1
        counts[j] = 1
    return labels


def kmeans_group(patches, K: int, seed=0, max_iter: int = 50) -> PatchGrouping:
    """Lloyd K-means on the real flattening of the patch columns.

    Euclidean distance on the flattened components equals the quaternion l2
    distance between columns.  Centroids are seeded by farthest-point sampling
    from a seed-chosen first point; empty clusters take the farthest member
    of the largest cluster.
    """
    patches = np.asarray(patches, dtype=float)
    P = patches.shape[1]
    if not 1 <= K <= P:
        raise ValueError(f"group count must be in [1, {P}], got {K}")
    X = np.moveaxis(patches, 1, 0).reshape(P, -1)
    if K == 1:
        c = X.mean(0)
        return PatchGrouping(np.zeros(P, dtype=int), 1, [float(((X - c) ** 2).sum())])

    rng = np.random.default_rng(seed)
    centers = _farthest_point_init(X, K, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(X, centers), axis=1)
        new = _repair_empty(X, new, centers, K)
        changed = labels is None or not np.array_equal(new, labels)
        labels = new
        for j in range(K):
            centers[j] = X[labels == j].mean(0)
        history.append(float(((X - centers[labels]) ** 2).sum()))
        if not changed:
            break
    return PatchGrouping(labels, K, history)


# ---------------------------------------------------------------------------
# dictionary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dictionary:
    """Quaternion dictionary with unit-norm atoms stored as ``(d, L, 4)``."""

    atoms: np.ndarray

    @property
    def d(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def is_real(self) -> bool:
        return not np.any(self.atoms[..., 1:])


def _dct_1d(n: int, p: int) -> np.ndarray:
    k = np.arange(p)[None, :]
    x = np.arange(n)[:, None]
    D = np.cos(np.pi * (2 * x + 1) * k / (2 * p))
    return D / np.linalg.norm(D, axis=0)


def build_dictionary(d: int = 64, L: int = 256) -> Dictionary:
    """Separable (overcomplete) 2-D DCT dictionary lifted to quaternions.

    With ``L == d`` the atoms are the orthonormal DCT-II basis.
    """
    n, p = math.isqrt(d), math.isqrt(L)
    if n * n != d or p * p != L or n < 1:
        raise ValueError(f"d and L must be perfect squares, got d={d}, L={L}")
    if L < d:
        raise ValueError(f"dictionary must be overcomplete (L >= d), got L={L} < d={d}")
    D1 = _dct_1d(n, p)
    A = np.kron(D1, D1)
    A /= np.linalg.norm(A, axis=0)
    return Dictionary(real_to_quaternion(A))


_HEADER = struct.Struct("<qq")


def save_dictionary(dictionary: Dictionary, path) -> None:
    """Binary layout: int64 d, int64 L, then d*L*4 float64 (all little-endian),
    columns in order, each column's entries in order, components interleaved."""
    atoms = np.asarray(dictionary.atoms, dtype="<f8")
    d, L = atoms.shape[:2]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(d, L))
        fh.write(np.ascontiguousarray(atoms.transpose(1, 0, 2)).tobytes())


def load_dictionary(path) -> Dictionary:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated dictionary header")
    d, L = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if d <= 0 or L <= 0 or body.size != d * L * 4:
        raise ValueError(f"{path}: expected {d}x{L} quaternion atoms, found {body.size} values")
    atoms = body.reshape(L, d, 4).transpose(1, 0, 2).astype(float)
    norms = np.sqrt((atoms ** 2).sum(axis=(0, 2)))
    if np.any(norms == 0):
        raise ValueError(f"{path}: dictionary contains zero atoms")
    return Dictionary(atoms / norms[None, :, None])
