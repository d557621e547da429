"""Quaternion scalar and matrix algebra.

A quaternion matrix is stored as a float64 ndarray whose last axis holds the
four real components ``(a, b, c, d)`` of ``a + b i + c j + d k``.  Most matrix
routines go through one of two complex encodings:

* the symplectic pair ``q = c1 + c2 j`` with ``c1 = a + b i`` and
  ``c2 = c + d i`` (used for products and the 2-D FFT), and
* the complex adjoint ``[[c1, c2], [-conj(c2), conj(c1)]]`` of size 2M x 2N,
  which is a ring homomorphism and lets LAPACK do the SVD / Cholesky work.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg


# ---------------------------------------------------------------------------
# scalars / elementwise
# ---------------------------------------------------------------------------

def quaternion(a=0.0, b=0.0, c=0.0, d=0.0) -> np.ndarray:
    return np.array([a, b, c, d], dtype=float)


def qmul(p, q) -> np.ndarray:
    """Elementwise Hamilton product of broadcastable ``(..., 4)`` arrays."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a1, b1, c1, d1 = np.moveaxis(p, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(q, -1, 0)
    return np.stack([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ], axis=-1)


def qconj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qabs(q) -> np.ndarray:
    """Modulus of every quaternion entry."""
    return np.sqrt(np.sum(np.square(q), axis=-1))


def is_pure(q, atol=0.0) -> bool:
    return bool(np.all(np.abs(np.asarray(q)[..., 0]) <= atol))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def qmat_norms(Q) -> tuple[float, float]:
    """Return ``(l1, fro)``: sum of entry moduli and Frobenius norm."""
    mod = qabs(Q)
    return float(mod.sum()), float(np.sqrt(np.sum(mod ** 2)))


def qvec_norm2(v) -> float:
    return float(np.sqrt(np.sum(np.square(v))))


def qnorm_inf(Q) -> float:
    """Largest entry modulus (matrices are treated as flattened vectors)."""
    Q = np.asarray(Q)
    if Q.size == 0:
        return 0.0
    return float(qabs(Q).max())


# ---------------------------------------------------------------------------
# complex encodings
# ---------------------------------------------------------------------------

def to_pair(Q) -> tuple[np.ndarray, np.ndarray]:
    Q = np.asarray(Q, dtype=float)
    return Q[..., 0] + 1j * Q[..., 1], Q[..., 2] + 1j * Q[..., 3]


def from_pair(c1, c2) -> np.ndarray:
    return np.stack([c1.real, c1.imag, c2.real, c2.imag], axis=-1)


def complex_adjoint(Q) -> np.ndarray:
    """2M x 2N complex adjoint of an M x N quaternion matrix."""
    c1, c2 = to_pair(Q)
    return np.block([[c1, c2], [-c2.conj(), c1.conj()]])


def adjoint_inverse(C) -> np.ndarray:
    """Inverse of :func:`complex_adjoint`.

    Blocks are averaged with their structural twins, so a matrix that is only
    approximately of adjoint form is projected onto the nearest one.
    """
    C = np.asarray(C)
    m, n = C.shape[0] // 2, C.shape[1] // 2
    c1 = 0.5 * (C[:m, :n] + C[m:, n:].conj())
    c2 = 0.5 * (C[:m, n:] - C[m:, :n].conj())
    return from_pair(c1, c2)


# ---------------------------------------------------------------------------
# matrix algebra
# ---------------------------------------------------------------------------

def qmatmul(P, Q) -> np.ndarray:
    """Quaternion matrix product of ``(M, K, 4)`` and ``(K, N, 4)`` arrays."""
    p1, p2 = to_pair(P)
    q1, q2 = to_pair(Q)
    # (p1 + p2 j)(q1 + q2 j) = (p1 q1 - p2 conj(q2)) + (p1 q2 + p2 conj(q1)) j
    return from_pair(p1 @ q1 - p2 @ q2.conj(), p1 @ q2 + p2 @ q1.conj())


def qconj_transpose(Q) -> np.ndarray:
    return np.swapaxes(qconj(Q), 0, 1)


def qeye(n: int) -> np.ndarray:
    out = np.zeros((n, n, 4))
    out[np.arange(n), np.arange(n), 0] = 1.0
    return out


def real_to_quaternion(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    out = np.zeros(R.shape + (4,))
    out[..., 0] = R
    return out


class Qsvd(NamedTuple):
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        if self.sigma.size == 0:
            return 0
        tol = max(self.U.shape[0], self.V.shape[0]) * np.finfo(float).eps * self.sigma[0]
        return int(np.sum(self.sigma > tol))

    def reconstruct(self) -> np.ndarray:
        return qmatmul(self.U * self.sigma[None, :, None], qconj_transpose(self.V))


def _pair_to_quaternion_column(w: np.ndarray) -> np.ndarray:
    m = w.shape[0] // 2
    return from_pair(w[:m], -w[m:].conj())


def _j_partner(w: np.ndarray) -> np.ndarray:
    m = w.shape[0] // 2
    return np.concatenate([-w[m:].conj(), w[:m].conj()])


def _quaternion_basis(candidates, clusters, basis):
    """Pick quaternion-orthonormal vectors from the columns of ``candidates``.

    ``clusters`` is a list of ``(start, stop)`` ranges in deduplicated index
    space; cluster ``c`` contributes ``stop - start`` vectors drawn from the
    complex columns ``2*start .. 2*stop``.  ``basis`` is the current complex
    basis (both J-partners of every accepted vector); it is extended in place
    semantics and returned.
    """
    picked = []
    for start, stop in clusters:
        block = candidates[:, 2 * start:2 * stop]
        for _ in range(stop - start):
            if basis.shape[1]:
                resid = block - basis @ (basis.conj().T @ block)
            else:
                resid = block
            norms = np.linalg.norm(resid, axis=0)
            best = int(np.argmax(norms))
            w = resid[:, best] / norms[best]
            # second pass keeps orthogonality at machine precision
            if basis.shape[1]:
                w = w - basis @ (basis.conj().T @ w)
                w /= np.linalg.norm(w)
            basis = np.column_stack([basis, w, _j_partner(w)])
            picked.append(_pair_to_quaternion_column(w))
    return picked, basis


def _clusters(sigma: np.ndarray, rtol: float = 1e-8) -> list[tuple[int, int]]:
    out = []
    if sigma.size == 0:
        return out
    scale = max(sigma[0], np.finfo(float).tiny)
    start = 0
    for i in range(1, sigma.size + 1):
        if i == sigma.size or sigma[start] - sigma[i] > rtol * scale:
            out.append((start, i))
            start = i
    return out


def qsvd(Q) -> Qsvd:
    """Thin quaternion SVD ``Q = U diag(sigma) V^H`` via the complex adjoint.

    ``U`` is M x n, ``V`` is N x n with ``n = min(M, N)``.  Each singular value
    of ``Q`` appears twice in the adjoint; one vector is taken from every
    J-invariant pair and orthonormalised in the quaternion sense.
    """
    Q = np.asarray(Q, dtype=float)
    m, n = Q.shape[:2]
    k = min(m, n)
    if k == 0:
        return Qsvd(np.zeros((m, 0, 4)), np.zeros(0), np.zeros((n, 0, 4)))
    W, s, Xh = np.linalg.svd(complex_adjoint(Q), full_matrices=False)
    sigma = s[0::2].copy()
    tol = max(m, n) * np.finfo(float).eps * max(sigma[0], 0.0) * 8
    nz = int(np.sum(sigma > tol)) if sigma[0] > 0 else 0

    U_cols, _ = _quaternion_basis(W, _clusters(sigma), np.zeros((2 * m, 0), complex))
    U = np.stack(U_cols, axis=1)

    V = np.zeros((n, k, 4))
    if nz:
        V[:, :nz] = qmatmul(qconj_transpose(Q), U[:, :nz]) / sigma[None, :nz, None]
    if nz < k:
        basis = complex_adjoint(V[:, :nz]) if nz else np.zeros((2 * n, 0), complex)
        # columns of the adjoint of V are exactly the J-pairs already used
        X = Xh.conj().T
        null_clusters = [(nz, k)]
        rest, _ = _quaternion_basis(X, null_clusters, basis)
        V[:, nz:] = np.stack(rest, axis=1)
        sigma[nz:] = 0.0
    return Qsvd(U, sigma, V)


# ---------------------------------------------------------------------------
# proximal operators
# ---------------------------------------------------------------------------

def nuclear_prox(Y, lam: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``lam * ||X||_*``.

    Computed on the complex adjoint: its SVD is an SVD of ``Y`` with every
    singular value doubled in multiplicity, and the thresholded result is
    independent of the particular singular vectors chosen.
    """
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    Y = np.asarray(Y, dtype=float)
    if lam == 0 or Y.size == 0:
        return Y.copy()
    W, s, Xh = np.linalg.svd(complex_adjoint(Y), full_matrices=False)
    s = np.maximum(s - lam, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(Y)
    C = (W[:, keep] * s[keep]) @ Xh[keep]
    return adjoint_inverse(C)


def soft_threshold(Y, tau: float, mode: str = "columnwise") -> np.ndarray:
    """Quaternion shrinkage.

    ``columnwise`` scales each column by ``(||y||_1 - tau) / ||y||_1`` (zero
    when the column l1 norm does not exceed ``tau``); ``entrywise`` shrinks
    every entry modulus by ``tau`` keeping its direction.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    Y = np.asarray(Y, dtype=float)
    if tau == 0:
        return Y.copy()
    mod = qabs(Y)
    if mode == "columnwise":
        norm = mod.sum(axis=0, keepdims=True)
    elif mode == "entrywise":
        norm = mod
    else:
        raise ValueError(f"unknown shrink mode {mode!r}")
    scale = np.zeros_like(norm)
    big = norm > tau
    scale[big] = (norm[big] - tau) / norm[big]
    return Y * scale[..., None]


# ---------------------------------------------------------------------------
# FFT and periodic gradients
# ---------------------------------------------------------------------------

def qfft2(Q) -> np.ndarray:
    """Forward (unnormalised) 2-D quaternion FFT.

    Returns a complex array of shape ``(2, M, N)`` holding the spectra of the
    symplectic parts ``c1`` and ``c2``.
    """
    c1, c2 = to_pair(Q)
    return np.stack([np.fft.fft2(c1), np.fft.fft2(c2)])


def iqfft2(S) -> np.ndarray:
    return from_pair(np.fft.ifft2(S[0]), np.fft.ifft2(S[1]))


def spectrum_modulus(S) -> np.ndarray:
    return np.sqrt(np.abs(S[0]) ** 2 + np.abs(S[1]) ** 2)


def grad1(Q) -> np.ndarray:
    """Vertical circular forward difference."""
    return np.roll(Q, -1, axis=0) - Q


def grad2(Q) -> np.ndarray:
    """Horizontal circular forward difference."""
    return np.roll(Q, -1, axis=1) - Q


def grad1_adj(Q) -> np.ndarray:
    return np.roll(Q, 1, axis=0) - Q


def grad2_adj(Q) -> np.ndarray:
    return np.roll(Q, 1, axis=1) - Q


def transfer1(M: int, N: int) -> np.ndarray:
    """Frequency response of :func:`grad1` under ``np.fft`` conventions."""
    u = np.arange(M)[:, None]
    return np.broadcast_to(np.exp(2j * np.pi * u / M) - 1.0, (M, N))


def transfer2(M: int, N: int) -> np.ndarray:
    v = np.arange(N)[None, :]
    return np.broadcast_to(np.exp(2j * np.pi * v / N) - 1.0, (M, N))


def grad_transfer(M: int, N: int) -> np.ndarray:
    """Real response of ``grad1^T grad1 + grad2^T grad2``."""
    u = np.arange(M)[:, None]
    v = np.arange(N)[None, :]
    return 4 * np.sin(np.pi * u / M) ** 2 + 4 * np.sin(np.pi * v / N) ** 2


# ---------------------------------------------------------------------------
# Hermitian systems
# ---------------------------------------------------------------------------

class HermitianFactor:
    """Cholesky factor of a Hermitian positive definite quaternion matrix.

    Reusable across right-hand sides, e.g. the fixed ``A^H A + I`` system.
    """

    def __init__(self, H):
        H = np.asarray(H, dtype=float)
        if H.ndim != 3 or H.shape[0] != H.shape[1]:
            raise ValueError(f"expected a square quaternion matrix, got {H.shape}")
        self.size = H.shape[0]
        try:
            self._cho = linalg.cho_factor(complex_adjoint(H), lower=False, check_finite=True)
        except linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("matrix is singular or not positive definite") from exc

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        r1, r2 = to_pair(rhs)
        # first block column of the adjoint determines the quaternion matrix
        x = linalg.cho_solve(self._cho, np.vstack([r1, -r2.conj()]))
        n = self.size
        return from_pair(x[:n], -x[n:].conj())


def hermitian_solve(H, rhs) -> np.ndarray:
    """Solve ``H X = rhs`` for Hermitian positive definite ``H``."""
    return HermitianFactor(H).solve(rhs)
