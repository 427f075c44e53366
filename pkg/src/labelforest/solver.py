"""L2-regularized squared-hinge binary classifier, trained by trust-region
Newton with conjugate-gradient inner solves.

The objective is

    f(w) = w.w + C * sum_i max(0, 1 - s_i * w.x_i)^2

(no 1/2 factor on the regularizer).  The loss is once differentiable; its
generalized Hessian restricted to the active set {i : 1 - s_i m_i > 0} is

    H = 2 I + 2 C X_act^T X_act

which is positive definite, so conjugate gradients never meet negative
curvature.  The trust-region update schedule uses the classic constants
eta0=1e-4, eta1=0.25, eta2=0.75, sigma1=0.25, sigma2=0.5, sigma3=4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import SparseRowMatrix, SparseVec, prune_threshold

ETA0, ETA1, ETA2 = 1e-4, 0.25, 0.75
SIGMA1, SIGMA2, SIGMA3 = 0.25, 0.5, 4.0
CG_TOL_FACTOR = 0.1
MAX_CG_ITERS = 1000


@dataclass(frozen=True)
class BinaryProblem:
    """Feature rows with a sign per row and the loss trade-off C."""

    X: sp.csr_matrix
    signs: np.ndarray
    C: float = 1.0

    def __post_init__(self):
        X = _as_csr(self.X)
        signs = np.asarray(self.signs, dtype=np.float64).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "signs", signs)
        if X.shape[0] != len(signs) or len(signs) < 1:
            raise ValueError("need one sign per row and at least one row")
        if not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be +1 or -1")
        if not self.C > 0:
            raise ValueError("C must be positive")

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def _as_csr(rows) -> sp.csr_matrix:
    if isinstance(rows, sp.csr_matrix):
        return rows.astype(np.float64) if rows.dtype != np.float64 else rows
    if isinstance(rows, SparseRowMatrix):
        return rows.to_csr(np.float64)
    rows = list(rows)
    if not rows:
        raise ValueError("need at least one row")
    return SparseRowMatrix.from_rows(rows, rows[0].dim).to_csr(np.float64)


@dataclass(frozen=True)
class Weights:
    """Learned weight vector plus an explicit bias term."""

    w: SparseVec
    bias: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.bias):
            raise ValueError("bias must be finite")

    def margin(self, x: SparseVec) -> float:
        from .sparse import dot

        return dot(self.w, x) + self.bias


def objective(p: BinaryProblem, w: np.ndarray) -> float:
    xi = 1.0 - p.signs * (p.X @ w)
    act = xi > 0
    return float(w @ w + p.C * np.dot(xi[act], xi[act]))


def gradient(p: BinaryProblem, w: np.ndarray) -> np.ndarray:
    xi = 1.0 - p.signs * (p.X @ w)
    z = np.where(xi > 0, p.signs * xi, 0.0)
    return 2.0 * w - 2.0 * p.C * (p.X.T @ z)


def _trcg(delta, g, hess_vec, cg_tol):
    """CG-Steihaug: approximately minimize the quadratic model within the
    trust region.  Returns (step, residual)."""
    d = -g
    r = -g.copy()
    s = np.zeros_like(g)
    rtr = float(r @ r)
    for _ in range(MAX_CG_ITERS):
        if np.sqrt(rtr) <= cg_tol:
            break
        hd = hess_vec(d)
        alpha = rtr / float(d @ hd)
        s += alpha * d
        if np.linalg.norm(s) > delta:
            s -= alpha * d
            std = float(s @ d)
            sts = float(s @ s)
            dtd = float(d @ d)
            dsq = delta * delta
            rad = np.sqrt(std * std + dtd * (dsq - sts))
            tau = (dsq - sts) / (std + rad) if std >= 0 else (rad - std) / dtd
            s += tau * d
            r -= tau * hd
            break
        r -= alpha * hd
        rtr_new = float(r @ r)
        d = r + (rtr_new / rtr) * d
        rtr = rtr_new
    return s, r


@dataclass
class SolveInfo:
    n_newton_iters: int = 0
    objective_trace: list = field(default_factory=list)
    converged: bool = False


def train_binary(
    p: BinaryProblem,
    eps: float = 0.1,
    max_newton_iters: int = 100,
    info: SolveInfo | None = None,
) -> Weights:
    """Minimize f(w) until ||grad|| <= eps * ||grad at w=0|| or the
    iteration cap.  The returned weights carry bias 0; bias handling is the
    caller's augmentation concern."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    w = solve_dense(p, eps, max_newton_iters, info)
    idx = np.nonzero(w)[0].astype(np.int64)
    return Weights(SparseVec(idx, w[idx], p.dim), 0.0)


def solve_dense(
    p: BinaryProblem,
    eps: float = 0.1,
    max_newton_iters: int = 100,
    info: SolveInfo | None = None,
) -> np.ndarray:
    X, s, C = p.X, p.signs, p.C
    w = np.zeros(p.dim)
    fw = objective(p, w)
    g = gradient(p, w)
    gnorm0 = np.linalg.norm(g)
    if info is not None:
        info.objective_trace.append(fw)
    if gnorm0 == 0:
        if info is not None:
            info.converged = True
        return w

    delta = gnorm0
    gnorm = gnorm0
    iters = 0
    while iters < max_newton_iters and gnorm > eps * gnorm0:
        xi = 1.0 - s * (X @ w)
        act = np.nonzero(xi > 0)[0]
        X_act = X if len(act) == X.shape[0] else X[act]

        def hess_vec(v, X_act=X_act, C=C):
            return 2.0 * v + 2.0 * C * (X_act.T @ (X_act @ v))

        step, resid = _trcg(delta, g, hess_vec, CG_TOL_FACTOR * gnorm)
        snorm = np.linalg.norm(step)
        if snorm == 0:
            break
        w_new = w + step
        f_new = objective(p, w_new)
        actred = fw - f_new
        gs = float(g @ step)
        # resid = -g - H s, so this is -(gs + 0.5 s'Hs)
        prered = -0.5 * (gs - float(step @ resid))

        denom = f_new - fw - gs
        alpha = SIGMA3 if denom <= 0 else max(SIGMA1, -0.5 * (gs / denom))

        if actred < ETA0 * prered:
            delta = min(max(alpha, SIGMA1) * snorm, SIGMA2 * delta)
        elif actred < ETA1 * prered:
            delta = max(SIGMA1 * delta, min(alpha * snorm, SIGMA2 * delta))
        elif actred < ETA2 * prered:
            delta = max(SIGMA1 * delta, min(alpha * snorm, SIGMA3 * delta))
        else:
            delta = max(delta, min(alpha * snorm, SIGMA3 * delta))

        if actred > ETA0 * prered:
            w, fw = w_new, f_new
            g = gradient(p, w)
            gnorm = np.linalg.norm(g)
            iters += 1
            if info is not None:
                info.objective_trace.append(fw)
        if prered <= 0:
            break
        if delta <= 1e-300:
            break
    if info is not None:
        info.n_newton_iters = iters
        info.converged = gnorm <= eps * gnorm0
    return w


def finalize_weights(weights: Weights, delta: float) -> Weights:
    """Threshold small weights away and move to the in-model float32 dtype.

    The bias is never pruned.
    """
    pruned = prune_threshold(weights.w, delta)
    w32 = SparseVec(pruned.indices, pruned.values.astype(np.float32), pruned.dim)
    return Weights(w32, float(np.float32(weights.bias)))


def augment_bias_column(X: sp.csr_matrix) -> sp.csr_matrix:
    """Append a constant all-ones feature column (the bias convention)."""
    ones = sp.csr_matrix(np.ones((X.shape[0], 1), dtype=X.dtype))
    out = sp.hstack([X, ones], format="csr")
    out.sort_indices()
    return out


def split_bias(w: SparseVec, d: int) -> Weights:
    """Split an augmented solution into (first-d weights, bias at index d)."""
    if w.dim != d + 1:
        raise ValueError(f"expected dim {d + 1}, got {w.dim}")
    keep = w.indices < d
    bias = 0.0
    tail = w.indices == d
    if tail.any():
        bias = float(w.values[tail][0])
    return Weights(SparseVec(w.indices[keep], w.values[keep], d), bias)
