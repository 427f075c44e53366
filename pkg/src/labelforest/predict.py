"""Beam-search inference over label-tree ensembles.

Scores follow the chain rule: an instance's probability for a label is the
product of the logistic routing probabilities along the path to its leaf,
times the logistic output of the leaf's one-vs-all classifier.  The beam
keeps the highest path probabilities at each depth; leaves already reached
stay in the beam and compete with deeper candidates.

Two implementations are kept deliberately separate: a per-instance
reference (`predict_tree` / `predict_ensemble`) built on sparse-vector
dots, and a batched route (`predict_batch`) that groups frontier entries
by node and uses sparse matrix products.  Tests hold them to each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data import Dataset, normalize_instances
from .solver import Weights
from .sparse import SparseRowMatrix, SparseVec
from .tree import Ensemble, Tree, TreeNode


@dataclass(frozen=True)
class ScoredLabels:
    """Top-k labels, scores descending, ties broken by ascending label id."""

    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        if len(self.labels) != len(self.scores):
            raise ValueError("labels and scores must align")

    def __len__(self):
        return len(self.labels)

    def pairs(self):
        return list(zip(self.labels.tolist(), self.scores.tolist()))


def logsigmoid(m: float) -> float:
    return -np.logaddexp(0.0, -m)


def node_child_prob(w: Weights, x: SparseVec) -> float:
    """Logistic routing probability sigma(w.x + bias)."""
    return float(expit(w.margin(x)))


def _top_k(labels, scores, k: int) -> ScoredLabels:
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((labels, -scores))[:k]
    return ScoredLabels(labels[order], scores[order])


def _tree_label_scores(tree: Tree, x: SparseVec, beam: int):
    """Reference beam search: all labels scored at the surviving leaves."""
    frontier = [(tree.root, 0.0)]
    while any(not node.is_leaf for node, _ in frontier):
        expanded = []
        for node, lp in frontier:
            if node.is_leaf:
                expanded.append((node, lp))
                continue
            for child, clf in zip(node.children, node.classifiers):
                expanded.append((child, lp + logsigmoid(clf.margin(x))))
        expanded.sort(key=lambda e: -e[1])
        frontier = expanded[:beam]
    labels, scores = [], []
    for node, lp in frontier:
        path_prob = np.exp(lp)
        for lab, clf in zip(node.labels, node.classifiers):
            labels.append(int(lab))
            scores.append(path_prob * float(expit(clf.margin(x))))
    return labels, scores


def predict_tree(tree: Tree, x: SparseVec, beam: int = 10, k: int = 5) -> ScoredLabels:
    """Beam-search a single tree for one (already normalized) instance."""
    _check_params(beam, k)
    return _top_k(*_tree_label_scores(tree, x, beam), k)


def predict_ensemble(ens: Ensemble, x: SparseVec, beam: int = 10, k: int = 5) -> ScoredLabels:
    """Mean of per-tree scores, labels missing from a tree counting as 0."""
    _check_params(beam, k)
    sums: dict[int, float] = {}
    for tree in ens.trees:
        labels, scores = _tree_label_scores(tree, x, beam)
        for lab, sc in zip(labels, scores):
            sums[lab] = sums.get(lab, 0.0) + sc
    t = len(ens.trees)
    labels = list(sums.keys())
    scores = [sums[lab] / t for lab in labels]
    return _top_k(labels, scores, k)


def _check_params(beam: int, k: int) -> None:
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")


class _TreeIndex:
    """Preorder node arrays plus stacked classifier matrices, built once."""

    def __init__(self, tree: Tree, d: int):
        self.nodes: list[TreeNode] = list(tree.iter_nodes())
        uid_of = {id(n): u for u, n in enumerate(self.nodes)}
        self.is_leaf = np.array([n.is_leaf for n in self.nodes])
        self.children = [
            np.array([uid_of[id(c)] for c in n.children], dtype=np.int64)
            for n in self.nodes
        ]
        self.W = []
        self.bias = []
        self.labels = []
        for n in self.nodes:
            rows = [clf.w for clf in n.classifiers]
            mat = SparseRowMatrix.from_rows(rows, d).to_csr(np.float64)
            self.W.append(mat)
            self.bias.append(np.array([clf.bias for clf in n.classifiers]))
            self.labels.append(n.labels)


def _tree_index(tree: Tree, d: int) -> _TreeIndex:
    cached = getattr(tree, "_pred_index", None)
    if cached is None or cached.W[0].shape[1] != d:
        cached = _TreeIndex(tree, d)
        tree._pred_index = cached
    return cached


def _batch_tree_triplets(tindex: _TreeIndex, X: sp.csr_matrix, beam: int):
    """Batched beam search for one tree.

    Returns (instance_ids, label_ids, scores) triplets for every label
    scored at a surviving leaf.
    """
    n = X.shape[0]
    inst = np.arange(n, dtype=np.int64)
    node = np.zeros(n, dtype=np.int64)
    lp = np.zeros(n)
    rank = np.zeros(n, dtype=np.int64)

    while True:
        internal = ~tindex.is_leaf[node]
        if not internal.any():
            break
        parts = []
        leaf_rows = np.flatnonzero(~internal)
        if len(leaf_rows):
            parts.append(
                (
                    inst[leaf_rows],
                    node[leaf_rows],
                    lp[leaf_rows],
                    rank[leaf_rows],
                    np.zeros(len(leaf_rows), dtype=np.int64),
                )
            )
        for uid in np.unique(node[internal]):
            rows = np.flatnonzero((node == uid) & internal)
            m = (X[inst[rows]] @ tindex.W[uid].T).toarray() + tindex.bias[uid]
            child_lp = lp[rows, None] - np.logaddexp(0.0, -m)
            n_child = len(tindex.children[uid])
            parts.append(
                (
                    np.repeat(inst[rows], n_child),
                    np.tile(tindex.children[uid], len(rows)),
                    child_lp.ravel(),
                    np.repeat(rank[rows], n_child),
                    np.tile(np.arange(n_child, dtype=np.int64), len(rows)),
                )
            )
        inst_a = np.concatenate([p[0] for p in parts])
        node_a = np.concatenate([p[1] for p in parts])
        lp_a = np.concatenate([p[2] for p in parts])
        r_a = np.concatenate([p[3] for p in parts])
        c_a = np.concatenate([p[4] for p in parts])

        order = np.lexsort((c_a, r_a, -lp_a, inst_a))
        inst_s, node_s, lp_s = inst_a[order], node_a[order], lp_a[order]
        starts = np.flatnonzero(np.r_[True, np.diff(inst_s) != 0])
        run_lengths = np.diff(np.r_[starts, len(inst_s)])
        pos = np.arange(len(inst_s)) - np.repeat(starts, run_lengths)
        keep = pos < beam
        inst, node, lp, rank = inst_s[keep], node_s[keep], lp_s[keep], pos[keep]

    out_inst, out_lab, out_score = [], [], []
    for uid in np.unique(node):
        rows = np.flatnonzero(node == uid)
        m = (X[inst[rows]] @ tindex.W[uid].T).toarray() + tindex.bias[uid]
        scores = expit(m) * np.exp(lp[rows])[:, None]
        n_lab = len(tindex.labels[uid])
        out_inst.append(np.repeat(inst[rows], n_lab))
        out_lab.append(np.tile(tindex.labels[uid], len(rows)))
        out_score.append(scores.ravel())
    return (
        np.concatenate(out_inst),
        np.concatenate(out_lab),
        np.concatenate(out_score),
    )


def prepare_features(ens: Ensemble, ds: Dataset) -> sp.csr_matrix:
    """Feature matrix in the model's convention (unit rows if trained so)."""
    if ds.d != ens.d:
        raise ValueError(f"feature dim {ds.d} != model dim {ens.d}")
    work = normalize_instances(ds) if ens.config.normalize else ds
    return work.X.to_csr(np.float64)


def predict_batch(ens: Ensemble, data, beam: int = 10, k: int = 5) -> list[ScoredLabels]:
    """Row-wise ensemble prediction over a Dataset or prepared csr matrix."""
    _check_params(beam, k)
    X = prepare_features(ens, data) if isinstance(data, Dataset) else data
    n = X.shape[0]
    if n == 0:
        return []
    all_inst, all_lab, all_score = [], [], []
    for tree in ens.trees:
        ti = _tree_index(tree, ens.d)
        i, lab, sc = _batch_tree_triplets(ti, X, beam)
        all_inst.append(i)
        all_lab.append(lab)
        all_score.append(sc)
    merged = sp.coo_matrix(
        (
            np.concatenate(all_score) / len(ens.trees),
            (np.concatenate(all_inst), np.concatenate(all_lab)),
        ),
        shape=(n, ens.l),
    ).tocsr()

    out = []
    for i in range(n):
        lo, hi = merged.indptr[i], merged.indptr[i + 1]
        out.append(_top_k(merged.indices[lo:hi], merged.data[lo:hi], k))
    return out


def write_predictions(results, sink) -> None:
    """One line per instance: `label:score` pairs, 5 decimals, descending."""
    if not hasattr(sink, "write"):
        with open(sink, "w", encoding="utf-8") as f:
            write_predictions(results, f)
        return
    for res in results:
        sink.write(
            " ".join(f"{lab}:{score:.5f}" for lab, score in res.pairs()) + "\n"
        )


def read_predictions(source) -> list[ScoredLabels]:
    """Parse a prediction file back into ScoredLabels rows."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    out = []
    for lineno, line in enumerate(lines, start=1):
        labels, scores = [], []
        for tok in line.split():
            lab, sep, score = tok.partition(":")
            if not sep:
                raise ValueError(f"line {lineno}: malformed pair {tok!r}")
            labels.append(int(lab))
            scores.append(float(score))
        out.append(
            ScoredLabels(np.array(labels, dtype=np.int64), np.array(scores))
        )
    return out
