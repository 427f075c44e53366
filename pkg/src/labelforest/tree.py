"""Shallow label-tree training and model persistence.

A tree is grown by recursively clustering label representation vectors
into at most K groups per node; nodes stop splitting once they hold at
most K labels or sit at the depth cap.  Internal nodes carry one routing
classifier per child; leaves carry one classifier per label.  Every
classifier is trained only on the instances owning at least one of the
node's labels, except the root, which sees the whole training set so that
unlabeled instances still act as negatives.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import kmeans_partition
from .data import Dataset, LabelIndex, build_label_index, normalize_instances
from .representations import LabelRepr, ReprSpace, build_repr
from .solver import (
    BinaryProblem,
    Weights,
    augment_bias_column,
    finalize_weights,
    split_bias,
    train_binary,
)
from .sparse import SparseVec

log = logging.getLogger(__name__)

MAGIC = b"LFT1"
FORMAT_VERSION = 1
_PAIR_DTYPE = np.dtype([("i", "<u4"), ("v", "<f4")])


class ModelFormatError(ValueError):
    """Raised when a model directory or tree file cannot be decoded."""


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 3
    k: int = 100
    d_max: int = 1
    repr_space: ReprSpace = ReprSpace.INPUT
    c: float = 1.0
    eps: float = 0.1
    delta: float = 0.01
    base_seed: int = 42
    normalize: bool = True
    kmeans_max_iters: int = 50
    kmeans_tol: float = 1e-4
    kmeans_restarts: int = 1
    max_newton_iters: int = 100

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.d_max < 0:
            raise ValueError("d_max must be >= 0")
        if not self.c > 0 or not self.eps > 0 or self.delta < 0:
            raise ValueError("require c > 0, eps > 0, delta >= 0")


@dataclass
class TreeNode:
    depth: int
    labels: np.ndarray
    instance_ids: np.ndarray | None
    is_leaf: bool
    children: list["TreeNode"] = field(default_factory=list)
    classifiers: list[Weights] = field(default_factory=list)

    @property
    def n_labels(self) -> int:
        return len(self.labels)


@dataclass
class Tree:
    root: TreeNode
    k: int
    d_max: int
    repr_space: ReprSpace
    seed: int

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self):
        return [n for n in self.iter_nodes() if n.is_leaf]


@dataclass
class Ensemble:
    trees: list[Tree]
    config: TrainConfig
    d: int
    l: int


@dataclass
class TrainReport:
    n_nodes: int = 0
    n_leaves: int = 0
    n_classifiers: int = 0
    n_zero_positive: int = 0
    grow_seconds: float = 0.0
    solve_seconds: float = 0.0


def _make_node(depth: int, labels: np.ndarray, instances: np.ndarray, config) -> TreeNode:
    is_leaf = len(labels) <= config.k or depth >= config.d_max
    return TreeNode(depth, labels, instances, is_leaf)


def grow(node: TreeNode, idx: LabelIndex, repr_csr, config: TrainConfig, rng) -> None:
    """Split ``node`` by spherical k-means on its labels' vectors and recurse.

    Empty clusters that survive reseeding are dropped, so fan-out may come
    out below K.
    """
    part = kmeans_partition(
        repr_csr[node.labels],
        K=config.k,
        max_iters=config.kmeans_max_iters,
        tol=config.kmeans_tol,
        seed=int(rng.integers(2**63)),
        restarts=config.kmeans_restarts,
    )
    for k in range(config.k):
        members = part.members(k)
        if not len(members):
            continue
        group = node.labels[members]
        # every instance holding one of these labels already sits in
        # node.instance_ids (label sets only shrink down the tree)
        insts = np.unique(np.concatenate([idx.instances[g] for g in group]))
        child = _make_node(node.depth + 1, group, insts, config)
        node.children.append(child)
        if not child.is_leaf:
            grow(child, idx, repr_csr, config, rng)


def train_node_classifiers(
    node: TreeNode, X_aug, idx: LabelIndex, config: TrainConfig, report: TrainReport
) -> None:
    """Train one classifier per child (internal) or per label (leaf).

    Positives carried by no instance of the node still get a classifier
    (an all-negative problem); those cases are counted in the report.
    """
    d = X_aug.shape[1] - 1
    insts = node.instance_ids
    X_node = X_aug[insts]
    if node.is_leaf:
        targets = [idx.instances[g] for g in node.labels]
    else:
        targets = [child.instance_ids for child in node.children]

    for tgt in targets:
        if len(tgt) == 0:
            report.n_zero_positive += 1
        if len(insts) == 0:
            # no data at all: the regularizer alone is minimized by zero
            w = Weights(SparseVec(np.empty(0, np.int64), np.empty(0), d), 0.0)
        else:
            signs = np.full(len(insts), -1.0)
            signs[np.searchsorted(insts, tgt)] = 1.0
            p = BinaryProblem(X_node, signs, C=config.c)
            sol = train_binary(p, eps=config.eps, max_newton_iters=config.max_newton_iters)
            w = split_bias(sol.w, d)
        node.classifiers.append(finalize_weights(w, config.delta))
        report.n_classifiers += 1

    for child in node.children:
        train_node_classifiers(child, X_aug, idx, config, report)


def train_tree(
    ds: Dataset,
    idx: LabelIndex,
    repr_csr,
    X_aug,
    config: TrainConfig,
    seed: int,
    report: TrainReport | None = None,
) -> Tree:
    report = report if report is not None else TrainReport()
    rng = np.random.default_rng(seed)
    root = _make_node(0, np.arange(ds.l, dtype=np.int64), np.arange(ds.n, dtype=np.int64), config)
    t0 = time.perf_counter()
    if not root.is_leaf:
        grow(root, idx, repr_csr, config, rng)
    t1 = time.perf_counter()
    train_node_classifiers(root, X_aug, idx, config, report)
    t2 = time.perf_counter()
    report.grow_seconds += t1 - t0
    report.solve_seconds += t2 - t1
    tree = Tree(root, config.k, config.d_max, config.repr_space, seed)
    for n in tree.iter_nodes():
        report.n_nodes += 1
        report.n_leaves += int(n.is_leaf)
    return tree


def train_ensemble(
    ds: Dataset, config: TrainConfig = TrainConfig(), report: TrainReport | None = None
) -> Ensemble:
    """Train T trees differing only in their clustering seed.

    The label representation is built once and shared; instances are
    unit-normalized first (unless disabled) and a constant bias feature is
    appended at index D.
    """
    if ds.l < 1:
        raise ValueError("training needs at least one label")
    idx = build_label_index(ds)
    work = normalize_instances(ds) if config.normalize else ds
    repr_ = build_repr(work, config.repr_space)
    repr_csr = repr_.matrix.to_csr(np.float64)
    X_aug = augment_bias_column(work.X.to_csr(np.float32)).astype(np.float64)

    trees = []
    for t in range(config.n_trees):
        seed = config.base_seed + t
        log.info("training tree %d/%d (seed %d)", t + 1, config.n_trees, seed)
        trees.append(train_tree(ds, idx, repr_csr, X_aug, config, seed, report))
    return Ensemble(trees, config, ds.d, ds.l)


def _meta_lines(ens: Ensemble) -> str:
    c = ens.config
    pairs = [
        ("version", FORMAT_VERSION),
        ("T", c.n_trees),
        ("K", c.k),
        ("d_max", c.d_max),
        ("repr_space", c.repr_space.value),
        ("D", ens.d),
        ("L", ens.l),
        ("C", repr(c.c)),
        ("delta", repr(c.delta)),
        ("base_seed", c.base_seed),
        ("normalize", int(c.normalize)),
    ]
    return "".join(f"{k}={v}\n" for k, v in pairs)


def _write_node(chunks: list, node: TreeNode) -> None:
    header = np.array(
        [node.depth, len(node.labels), len(node.children), int(node.is_leaf)],
        dtype="<u4",
    )
    chunks.append(header.tobytes())
    chunks.append(node.labels.astype("<u4").tobytes())
    for clf in node.classifiers:
        chunks.append(np.array([clf.w.nnz], dtype="<u4").tobytes())
        pairs = np.empty(clf.w.nnz, dtype=_PAIR_DTYPE)
        pairs["i"] = clf.w.indices
        pairs["v"] = clf.w.values
        chunks.append(pairs.tobytes())
        chunks.append(np.array([clf.bias], dtype="<f4").tobytes())
    for child in node.children:
        _write_node(chunks, child)


def save_model(ens: Ensemble, model_dir) -> None:
    os.makedirs(model_dir, exist_ok=True)
    with open(os.path.join(model_dir, "meta"), "w", encoding="utf-8") as f:
        f.write(_meta_lines(ens))
    for t, tree in enumerate(ens.trees):
        chunks = [MAGIC, np.array([FORMAT_VERSION], dtype="<u4").tobytes()]
        _write_node(chunks, tree.root)
        with open(os.path.join(model_dir, f"tree_{t}.bin"), "wb") as f:
            f.write(b"".join(chunks))


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, dtype, count):
        dt = np.dtype(dtype)
        end = self.pos + dt.itemsize * count
        if end > len(self.buf):
            raise ModelFormatError("truncated tree file")
        out = np.frombuffer(self.buf, dtype=dt, count=count, offset=self.pos)
        self.pos = end
        return out

    def done(self) -> bool:
        return self.pos == len(self.buf)


def _read_node(cur: _Cursor, d: int, expect_depth: int) -> TreeNode:
    depth, n_labels, n_children, leaf_flag = (int(v) for v in cur.take("<u4", 4))
    if depth != expect_depth:
        raise ModelFormatError(f"node depth {depth}, expected {expect_depth}")
    if leaf_flag not in (0, 1) or (leaf_flag == 1) != (n_children == 0):
        raise ModelFormatError("inconsistent leaf flag")
    labels = cur.take("<u4", n_labels).astype(np.int64)
    node = TreeNode(depth, labels, None, bool(leaf_flag))
    n_clf = n_labels if leaf_flag else n_children
    for _ in range(n_clf):
        nnz = int(cur.take("<u4", 1)[0])
        pairs = cur.take(_PAIR_DTYPE, nnz)
        bias = float(cur.take("<f4", 1)[0])
        w = SparseVec(pairs["i"].astype(np.int64), pairs["v"].astype(np.float32), d)
        node.classifiers.append(Weights(w, bias))
    for _ in range(n_children):
        node.children.append(_read_node(cur, d, expect_depth + 1))
    return node


def _parse_meta(text: str) -> dict:
    meta = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ModelFormatError(f"bad meta line {line!r}")
        meta[key] = value
    return meta


def load_model(model_dir) -> Ensemble:
    try:
        with open(os.path.join(model_dir, "meta"), "r", encoding="utf-8") as f:
            meta = _parse_meta(f.read())
    except FileNotFoundError as e:
        raise ModelFormatError(f"no meta file in {model_dir}") from e
    try:
        if int(meta["version"]) != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model version {meta['version']}")
        n_trees = int(meta["T"])
        config = TrainConfig(
            n_trees=n_trees,
            k=int(meta["K"]),
            d_max=int(meta["d_max"]),
            repr_space=ReprSpace(meta["repr_space"]),
            c=float(meta["C"]),
            delta=float(meta["delta"]),
            base_seed=int(meta["base_seed"]),
            normalize=bool(int(meta["normalize"])),
        )
        d, l = int(meta["D"]), int(meta["L"])
    except (KeyError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"bad meta file: {e}") from e

    trees = []
    for t in range(n_trees):
        path = os.path.join(model_dir, f"tree_{t}.bin")
        with open(path, "rb") as f:
            buf = f.read()
        if buf[:4] != MAGIC:
            raise ModelFormatError(f"{path}: bad magic bytes")
        cur = _Cursor(buf)
        cur.pos = 4
        version = int(cur.take("<u4", 1)[0])
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"{path}: unsupported version {version}")
        root = _read_node(cur, d, 0)
        if not cur.done():
            raise ModelFormatError(f"{path}: trailing bytes")
        trees.append(
            Tree(root, config.k, config.d_max, config.repr_space, config.base_seed + t)
        )
    return Ensemble(trees, config, d, l)
