"""Unconstrained K-way spherical k-means over label vectors.

Lloyd's algorithm under the cosine distance d(v, c) = 1 - v.c, with no
balancedness constraint: clusters may end up wildly different in size and
are deliberately left that way.  Empty (or zero-mean) clusters are reseeded
with the member vector currently fitting its own cluster worst, so exactly
K centers survive every update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import SparseRowMatrix, SparseVec


@dataclass(frozen=True)
class Partition:
    """Result of one k-means run: per-label cluster ids plus the centers."""

    assignments: np.ndarray
    centers: np.ndarray
    n_iters_run: int
    final_objective: float

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def members(self, k: int) -> np.ndarray:
        return np.nonzero(self.assignments == k)[0]


def _stack(vecs) -> sp.csr_matrix:
    if isinstance(vecs, SparseRowMatrix):
        return vecs.to_csr(np.float64)
    if isinstance(vecs, sp.csr_matrix):
        return vecs.astype(np.float64)
    vecs = list(vecs)
    if not vecs:
        raise ValueError("need at least one vector")
    dim = vecs[0].dim
    return SparseRowMatrix.from_rows(vecs, dim).to_csr(np.float64)


def _assign(V: sp.csr_matrix, centers: np.ndarray):
    scores = V @ centers.T
    assignments = np.argmax(scores, axis=1).astype(np.int64)
    picked = scores[np.arange(V.shape[0]), assignments]
    return assignments, float(np.sum(1.0 - picked))


def _normalize_rows_dense(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def _update(V: sp.csr_matrix, assignments: np.ndarray, K: int) -> np.ndarray:
    n = V.shape[0]
    ind = sp.csr_matrix(
        (np.ones(n), assignments, np.arange(n + 1)), shape=(n, K)
    )
    sums = np.asarray((ind.T @ V).todense())
    counts = np.bincount(assignments, minlength=K).astype(np.float64)
    means = sums / np.maximum(counts, 1.0)[:, None]
    centers = _normalize_rows_dense(means)

    dead = np.nonzero((counts == 0) | (np.linalg.norm(means, axis=1) == 0))[0]
    if len(dead):
        # worst-fit members, farthest first, seed the dead clusters
        scores = V @ centers.T
        fit = 1.0 - scores[np.arange(n), assignments]
        order = np.lexsort((np.arange(n), -fit))
        for k, member in zip(dead, order):
            row = np.asarray(V.getrow(member).todense()).ravel()
            centers[k] = _normalize_rows_dense(row[None, :])[0]
    return centers


def assign_step(vecs, centers: np.ndarray):
    """Nearest-center assignment; ties go to the lowest cluster id.

    Returns (assignments, objective) with objective = sum of 1 - v.c over
    the chosen centers.
    """
    if centers.shape[0] == 0:
        raise ValueError("centers must be non-empty")
    return _assign(_stack(vecs), np.asarray(centers, dtype=np.float64))


def update_step(vecs, assignments: np.ndarray, K: int) -> np.ndarray:
    """Normalized per-cluster means; empty clusters reseeded (see module doc)."""
    return _update(_stack(vecs), np.asarray(assignments, dtype=np.int64), K)


def _singletons(V: sp.csr_matrix, K: int) -> Partition:
    n = V.shape[0]
    centers = np.zeros((K, V.shape[1]), dtype=np.float64)
    centers[:n] = _normalize_rows_dense(np.asarray(V.todense()))
    assignments = np.arange(n, dtype=np.int64)
    # each member sits on its own normalized self: 1 - v.c = 1 - ||v||
    norms = np.sqrt(np.asarray(V.multiply(V).sum(axis=1)).ravel())
    return Partition(assignments, centers, 0, float(np.sum(1.0 - norms)))


def kmeans_partition(
    vecs,
    K: int,
    max_iters: int = 50,
    tol: float = 1e-4,
    seed=0,
    restarts: int = 1,
) -> Partition:
    """Spherical k-means by Lloyd's algorithm.

    Initial centers are K distinct member vectors chosen uniformly at
    random per seed.  Stops when the absolute objective improvement drops
    below ``tol`` or after ``max_iters`` assignment rounds.  With
    ``len(vecs) <= K`` each vector becomes its own cluster, no iteration.
    ``restarts`` repeats the run with fresh seeds and keeps the lowest
    final objective.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    V = _stack(vecs)
    if V.shape[0] == 0:
        raise ValueError("need at least one vector")
    if V.shape[0] <= K:
        return _singletons(V, K)

    root = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        rng = np.random.default_rng(root.integers(2**63))
        part = _run_once(V, K, max_iters, tol, rng)
        if best is None or part.final_objective < best.final_objective:
            best = part
    return best


def _run_once(V, K, max_iters, tol, rng) -> Partition:
    picks = rng.choice(V.shape[0], size=K, replace=False)
    centers = _normalize_rows_dense(np.asarray(V[picks].todense()))
    prev_obj = None
    assignments = None
    obj = 0.0
    iters = 0
    for _ in range(max_iters):
        assignments, obj = _assign(V, centers)
        iters += 1
        if prev_obj is not None and prev_obj - obj < tol:
            break
        prev_obj = obj
        centers = _update(V, assignments, K)
    return Partition(assignments, centers, iters, obj)
