"""Focal element decomposition: I = B + D + E solved by ADMM.

B is a smooth base layer whose patch groups have low-rank codes over a fixed
dictionary, D is a sparse detail layer and E a small Gaussian residual.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import quaternion as qt
from .patches import (
    Dictionary,
    PatchGrid,
    PatchGrouping,
    build_dictionary,
    default_group_count,
    extract,
    kmeans_group,
    reassemble,
)
from .validation import check_quaternion_image

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QfedConfig:
    alpha: float = 1.5
    beta: float = 0.5
    lam: float = 0.05
    mu0: float = 1000.0
    mu_max: float = 1e6
    mu_growth: float = 1.1
    tol: float = 1e-5
    max_iter: int = 100
    patch_size: int = 8
    n_groups: Optional[int] = None
    n_atoms: int = 256
    shrink_mode: str = "columnwise"
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta", "lam"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.mu0 <= 0 or self.mu_max < self.mu0:
            raise ValueError("need 0 < mu0 <= mu_max")
        if self.mu_growth <= 1:
            raise ValueError("mu_growth must exceed 1")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.shrink_mode not in ("columnwise", "entrywise"):
            raise ValueError(f"unknown shrink mode {self.shrink_mode!r}")

    def replace(self, **changes) -> "QfedConfig":
        return replace(self, **changes)


@dataclass
class QfedState:
    """Every primal/dual block of the augmented Lagrangian.

    ``J``, ``Z``, ``Y1`` are L x P and ``Y2`` is d x P; group ``k`` owns the
    columns ``groups[k]`` so the per-group blocks are column slices.
    """

    I: np.ndarray
    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    J: np.ndarray
    Z: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    Y3: np.ndarray
    Y4: np.ndarray
    Y5: np.ndarray
    mu: float
    cfg: QfedConfig
    grid: PatchGrid
    grouping: PatchGrouping
    A: np.ndarray
    factor: qt.HermitianFactor = field(repr=False)
    iter: int = 0

    @property
    def groups(self) -> list[np.ndarray]:
        return self.grouping.members()

    def constraint_residual(self) -> float:
        nI = np.linalg.norm(self.I)
        r = np.linalg.norm(self.I - self.B - self.D - self.E)
        return float(r / nI) if nI > 0 else float(r)


@dataclass
class QfedResult:
    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    Z: np.ndarray
    iterations: int
    rel_diff: float
    constraint_residual: float
    converged: bool
    grid: PatchGrid
    grouping: PatchGrouping
    history: list = field(default_factory=list)


def dictionary_for(cfg: QfedConfig, dictionary: Optional[Dictionary] = None) -> Dictionary:
    if dictionary is None:
        return build_dictionary(cfg.patch_size ** 2, cfg.n_atoms)
    if dictionary.d != cfg.patch_size ** 2:
        raise ValueError(
            f"dictionary atoms have length {dictionary.d}, patch size needs {cfg.patch_size ** 2}"
        )
    return dictionary


def smooth_initial_base(I) -> np.ndarray:
    """Closed-form warm start ``F^-1(F(I) / (F(grad^T grad) + 1))``."""
    M, N = I.shape[:2]
    S = qt.qfft2(I) / (qt.grad_transfer(M, N) + 1.0)
    return qt.iqfft2(S)


def init_state(I, cfg: QfedConfig = QfedConfig(), dictionary: Optional[Dictionary] = None) -> QfedState:
    I = np.asarray(I, dtype=float)
    M, N = I.shape[:2]
    A = dictionary_for(cfg, dictionary).atoms
    L = A.shape[1]
    grid = PatchGrid.disjoint(cfg.patch_size, (M, N))
    P = grid.patch_count

    B = smooth_initial_base(I)
    D = I - B
    K = cfg.n_groups if cfg.n_groups is not None else default_group_count(P)
    grouping = kmeans_group(extract(B, grid), min(K, P), seed=cfg.seed)

    H = qt.qmatmul(qt.qconj_transpose(A), A) + qt.qeye(L)
    zeros_img = np.zeros_like(I)
    return QfedState(
        I=I, B=B, D=D, E=zeros_img.copy(),
        G1=zeros_img.copy(), G2=zeros_img.copy(),
        J=np.zeros((L, P, 4)), Z=np.zeros((L, P, 4)),
        Y1=np.zeros((L, P, 4)), Y2=np.zeros((grid.d, P, 4)),
        Y3=zeros_img.copy(), Y4=zeros_img.copy(), Y5=zeros_img.copy(),
        mu=cfg.mu0, cfg=cfg, grid=grid, grouping=grouping, A=A,
        factor=qt.HermitianFactor(H),
    )


# ---------------------------------------------------------------------------
# block updates (in place)
# ---------------------------------------------------------------------------

def update_J(state: QfedState) -> QfedState:
    mu = state.mu
    target = state.Z + state.Y1 / mu
    for cols in state.groups:
        state.J[:, cols] = qt.nuclear_prox(target[:, cols], 1.0 / mu)
    return state


def update_Z(state: QfedState) -> QfedState:
    # (A^H A + I) is shared by all groups and all columns are independent,
    # so every group is solved in one call.
    mu = state.mu
    AH = qt.qconj_transpose(state.A)
    RB = extract(state.B, state.grid)
    rhs = qt.qmatmul(AH, RB + state.Y2 / mu) + state.J - state.Y1 / mu
    state.Z = state.factor.solve(rhs)
    return state


def update_G(state: QfedState) -> QfedState:
    mu, cfg = state.mu, state.cfg
    tau = cfg.alpha / mu
    state.G1 = qt.soft_threshold(qt.grad1(state.B) - state.Y3 / mu, tau, cfg.shrink_mode)
    state.G2 = qt.soft_threshold(qt.grad2(state.B) - state.Y4 / mu, tau, cfg.shrink_mode)
    return state


def update_B(state: QfedState) -> QfedState:
    mu = state.mu
    M, N = state.I.shape[:2]
    M3 = qt.qmatmul(state.A, state.Z) - state.Y2 / mu
    M4 = state.G1 + state.Y3 / mu
    M5 = state.G2 + state.Y4 / mu
    M6 = state.I - state.D - state.E + state.Y5 / mu
    h1, h2 = qt.transfer1(M, N), qt.transfer2(M, N)
    sigma = (
        qt.qfft2(reassemble(M3, state.grid))
        + np.conj(h1) * qt.qfft2(M4)
        + np.conj(h2) * qt.qfft2(M5)
        + qt.qfft2(M6)
    )
    state.B = qt.iqfft2(sigma / (qt.grad_transfer(M, N) + 2.0))
    return state


def update_D(state: QfedState) -> QfedState:
    mu, cfg = state.mu, state.cfg
    M7 = state.I - state.B - state.E + state.Y5 / mu
    state.D = qt.soft_threshold(M7, cfg.beta / mu, cfg.shrink_mode)
    return state


def update_E(state: QfedState) -> QfedState:
    mu = state.mu
    M8 = state.I - state.D - state.B + state.Y5 / mu
    state.E = (mu / (2 * state.cfg.lam + mu)) * M8
    return state


def update_multipliers(state: QfedState) -> QfedState:
    mu, cfg = state.mu, state.cfg
    state.Y1 = state.Y1 + mu * (state.Z - state.J)
    state.Y2 = state.Y2 + mu * (extract(state.B, state.grid) - qt.qmatmul(state.A, state.Z))
    state.Y3 = state.Y3 + mu * (state.G1 - qt.grad1(state.B))
    state.Y4 = state.Y4 + mu * (state.G2 - qt.grad2(state.B))
    state.Y5 = state.Y5 + mu * (state.I - state.B - state.D - state.E)
    state.mu = min(cfg.mu_max, mu * cfg.mu_growth)
    return state


BLOCK_UPDATES = (
    ("J", update_J),
    ("Z", update_Z),
    ("G", update_G),
    ("B", update_B),
    ("D", update_D),
    ("E", update_E),
)


def _inner(X, Y) -> float:
    return float(np.sum(X * Y))  # Re tr(X^H Y)


def _penalty(Y, R, mu) -> float:
    return _inner(Y, R) + 0.5 * mu * float(np.sum(R * R))


def partial_objective(state: QfedState, block: str) -> float:
    """Augmented Lagrangian terms that involve ``block`` (others held fixed).

    Sparsity terms use the entrywise quaternion l1 norm.
    """
    mu, cfg = state.mu, state.cfg
    l1 = lambda X: float(qt.qabs(X).sum())
    zj = lambda: _penalty(state.Y1, state.Z - state.J, mu)
    fit = lambda: _penalty(state.Y2, extract(state.B, state.grid) - qt.qmatmul(state.A, state.Z), mu)
    g1 = lambda: _penalty(state.Y3, state.G1 - qt.grad1(state.B), mu)
    g2 = lambda: _penalty(state.Y4, state.G2 - qt.grad2(state.B), mu)
    data = lambda: _penalty(state.Y5, state.I - state.B - state.D - state.E, mu)
    if block == "J":
        nuc = sum(float(qt.qsvd(state.J[:, cols]).sigma.sum()) for cols in state.groups)
        return nuc + zj()
    if block == "Z":
        return zj() + fit()
    if block == "G":
        return cfg.alpha * (l1(state.G1) + l1(state.G2)) + g1() + g2()
    if block == "B":
        return fit() + g1() + g2() + data()
    if block == "D":
        return cfg.beta * l1(state.D) + data()
    if block == "E":
        return cfg.lam * float(np.sum(state.E * state.E)) + data()
    raise ValueError(f"unknown block {block!r}")


def step(state: QfedState) -> float:
    """One full ADMM sweep; returns the relative difference of (Z, D)."""
    Z_old, D_old = state.Z, state.D
    for _, update in BLOCK_UPDATES:
        update(state)
    update_multipliers(state)
    state.iter += 1
    return max(qt.qnorm_inf(state.Z - Z_old), qt.qnorm_inf(state.D - D_old))


def decompose(I, cfg: QfedConfig = QfedConfig(), dictionary: Optional[Dictionary] = None,
              trace=None) -> QfedResult:
    """Run the solver until the (Z, D) change drops below ``cfg.tol``.

    ``trace`` may be a path or text stream; one CSV row per iteration is
    written with ``iter, mu, rel_diff, constraint_residual``.
    """
    I = np.asarray(I, dtype=float)
    if I.ndim != 3 or I.shape[-1] != 4 or I.shape[0] == 0 or I.shape[1] == 0:
        raise ValueError(f"expected a nonempty (M, N, 4) quaternion image, got {I.shape}")
    if not np.all(np.isfinite(I)):
        raise ValueError("image contains non-finite values")
    state = init_state(I, cfg, dictionary)
    history = []
    rel = np.inf
    converged = False
    for _ in range(cfg.max_iter):
        mu = state.mu
        rel = step(state)
        res = state.constraint_residual()
        if not (np.isfinite(rel) and np.isfinite(res)):
            raise FloatingPointError(f"non-finite iterate at iteration {state.iter} (mu={mu:g})")
        history.append((state.iter, mu, rel, res))
        if rel <= cfg.tol:
            converged = True
            break
    if not converged:
        log.warning("decomposition stopped after %d iterations, rel_diff=%.3g", state.iter, rel)
    if trace is not None:
        write_trace(history, trace)
    return QfedResult(
        B=state.B, D=state.D, E=state.E, Z=state.Z,
        iterations=state.iter, rel_diff=float(rel),
        constraint_residual=state.constraint_residual(), converged=converged,
        grid=state.grid, grouping=state.grouping, history=history,
    )


def write_trace(history, dest) -> None:
    header = ("iter", "mu", "rel_diff", "constraint_residual")
    if hasattr(dest, "write"):
        w = csv.writer(dest)
        w.writerow(header)
        w.writerows(history)
        return
    with open(dest, "w", newline="") as fh:
        write_trace(history, fh)


class QFED(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`decompose`.

    ``fit`` decomposes one image (RGB ``(M, N, 3)`` in [0, 1] or quaternion
    ``(M, N, 4)``); ``transform`` returns the stacked layers ``(3, M, N, 4)``
    in the order base, detail, noise.
    """

    def __init__(self, alpha=1.5, beta=0.5, lam=0.05, mu0=1000.0, tol=1e-5, max_iter=100,
                 patch_size=8, n_groups=None, n_atoms=256, shrink_mode="columnwise",
                 dictionary=None, random_state=0):
        self.alpha = alpha
        self.beta = beta
        self.lam = lam
        self.mu0 = mu0
        self.tol = tol
        self.max_iter = max_iter
        self.patch_size = patch_size
        self.n_groups = n_groups
        self.n_atoms = n_atoms
        self.shrink_mode = shrink_mode
        self.dictionary = dictionary
        self.random_state = random_state

    def _config(self) -> QfedConfig:
        return QfedConfig(
            alpha=self.alpha, beta=self.beta, lam=self.lam, mu0=self.mu0, tol=self.tol,
            max_iter=self.max_iter, patch_size=self.patch_size, n_groups=self.n_groups,
            n_atoms=self.n_atoms, shrink_mode=self.shrink_mode, seed=self.random_state,
        )

    def fit(self, X, y=None):
        I = check_quaternion_image(X)
        res = decompose(I, self._config(), self.dictionary)
        self.result_ = res
        self.base_, self.detail_, self.noise_, self.coef_ = res.B, res.D, res.E, res.Z
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self._fitted_image = I
        return self

    def transform(self, X):
        I = check_quaternion_image(X)
        if not hasattr(self, "result_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("QFED instance is not fitted yet")
        if I.shape == self._fitted_image.shape and np.array_equal(I, self._fitted_image):
            res = self.result_
        else:
            res = decompose(I, self._config(), self.dictionary)
        return np.stack([res.B, res.D, res.E])
