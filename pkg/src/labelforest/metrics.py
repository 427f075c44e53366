"""Ranking metrics: P@k, nDCG@k, their propensity-scored variants, and
label-space coverage.

Propensities follow the sigmoid-in-log-frequency model

    p_l = 1 / (1 + C * exp(-A * ln(N_l + B))),   C = (ln N - 1) * (1 + B)^A

with C clamped at zero so p stays in (0, 1] on very small datasets.  The
propensity-scored numbers are reported as percentages of the ground-truth
oracle's gain: 100 * mean(pred gain) / mean(oracle gain), where the oracle
ranks each instance's true labels by ascending propensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabelIndex


@dataclass(frozen=True)
class PropensityModel:
    a: float
    b: float
    n: int
    p: np.ndarray

    def __post_init__(self):
        if np.any(self.p <= 0) or np.any(self.p > 1):
            raise ValueError("propensities must lie in (0, 1]")

    @property
    def n_labels(self) -> int:
        return len(self.p)

    @classmethod
    def uniform(cls, n_labels: int) -> "PropensityModel":
        return cls(0.0, 0.0, 0, np.ones(n_labels))


def fit_propensities(idx, n: int, a: float = 0.55, b: float = 1.5) -> PropensityModel:
    """Per-label inverse-frequency propensities from a LabelIndex or an
    array of label frequencies."""
    freqs = idx.freqs if isinstance(idx, LabelIndex) else np.asarray(idx)
    c = max((np.log(n) - 1.0) * (1.0 + b) ** a, 0.0)
    p = 1.0 / (1.0 + c * np.exp(-a * np.log(freqs.astype(np.float64) + b)))
    return PropensityModel(a, b, n, p)


def _top_labels(pred, k: int) -> np.ndarray:
    labels = pred.labels if hasattr(pred, "labels") else np.asarray(pred, dtype=np.int64)
    return np.asarray(labels, dtype=np.int64)[:k]


def _truth_array(truth) -> np.ndarray:
    return np.asarray(sorted(truth), dtype=np.int64)


def precision_at_k(pred, truth, k: int) -> float:
    """Fraction of the k slots holding a true label; short lists pad with
    misses."""
    if k < 1:
        raise ValueError("k must be >= 1")
    t = _truth_array(truth)
    hits = np.isin(_top_labels(pred, k), t).sum()
    return float(hits) / k


def ndcg_at_k(pred, truth, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    t = _truth_array(truth)
    if not len(t):
        return 0.0
    top = _top_labels(pred, k)
    ranks = np.arange(1, len(top) + 1)
    dcg = float(np.sum(np.isin(top, t) / np.log2(ranks + 1)))
    ideal_ranks = np.arange(1, min(k, len(t)) + 1)
    idcg = float(np.sum(1.0 / np.log2(ideal_ranks + 1)))
    return dcg / idcg


def psp_at_k(pred, truth, prop: PropensityModel, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    t = _truth_array(truth)
    top = _top_labels(pred, k)
    hits = np.isin(top, t)
    return float(np.sum(hits / prop.p[top])) / k


def psndcg_at_k(pred, truth, prop: PropensityModel, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    t = _truth_array(truth)
    if not len(t):
        return 0.0
    top = _top_labels(pred, k)
    ranks = np.arange(1, len(top) + 1)
    psdcg = float(np.sum(np.isin(top, t) / (prop.p[top] * np.log2(ranks + 1))))
    ideal_ranks = np.arange(1, min(k, len(t)) + 1)
    idcg = float(np.sum(1.0 / np.log2(ideal_ranks + 1)))
    return psdcg / idcg


def oracle_top_k(truth, prop: PropensityModel, k: int) -> np.ndarray:
    """True labels ranked by ascending propensity (rarest first)."""
    t = _truth_array(truth)
    order = np.lexsort((t, prop.p[t]))
    return t[order][:k]


_PS_METRICS = {"psp": psp_at_k, "psndcg": psndcg_at_k}


def ps_report(preds, truths, prop: PropensityModel, k: int, kind: str = "psp") -> float:
    """100 * mean predicted gain over mean oracle gain for a PS metric."""
    metric = _PS_METRICS[kind]
    if len(preds) != len(truths):
        raise ValueError("predictions and truths must align")
    if not len(preds):
        raise ValueError("empty test set")
    pred_gain = 0.0
    oracle_gain = 0.0
    for pred, truth in zip(preds, truths):
        pred_gain += metric(pred, truth, prop, k)
        oracle_gain += metric(oracle_top_k(truth, prop, k), truth, prop, k)
    if oracle_gain == 0.0:
        raise ValueError("oracle gain is zero; no true labels in the test set")
    return 100.0 * pred_gain / oracle_gain


def coverage_at_k(preds, truths, prop: PropensityModel, k: int) -> float:
    """Distinct predicted top-k labels over distinct oracle top-k labels."""
    if len(preds) != len(truths):
        raise ValueError("predictions and truths must align")
    pred_union = set()
    truth_union = set()
    for pred, truth in zip(preds, truths):
        pred_union.update(_top_labels(pred, k).tolist())
        truth_union.update(oracle_top_k(truth, prop, k).tolist())
    if not truth_union:
        raise ValueError("ground-truth top-k union is empty")
    return len(pred_union) / len(truth_union)


@dataclass(frozen=True)
class EvalReport:
    ks: tuple
    rows: dict

    def value(self, metric: str, k: int) -> float:
        return self.rows[metric][k]

    def format(self) -> str:
        width = 10
        header = "metric".ljust(width) + "".join(f"@{k}".rjust(8) for k in self.ks)
        lines = [header]
        for name, by_k in self.rows.items():
            lines.append(
                name.ljust(width) + "".join(f"{by_k[k]:8.2f}" for k in self.ks)
            )
        return "\n".join(lines) + "\n"


def evaluate(preds, truths, prop: PropensityModel, ks=(1, 3, 5)) -> EvalReport:
    """Full report: P, nDCG (means x100), PSP, PSnDCG (oracle-normalized),
    coverage (x100), per cutoff."""
    if len(preds) != len(truths):
        raise ValueError("predictions and truths must align")
    if not len(preds):
        raise ValueError("empty test set")
    n = len(preds)
    rows = {name: {} for name in ("P", "nDCG", "PSP", "PSnDCG", "coverage")}
    for k in ks:
        rows["P"][k] = 100.0 * sum(precision_at_k(p, t, k) for p, t in zip(preds, truths)) / n
        rows["nDCG"][k] = 100.0 * sum(ndcg_at_k(p, t, k) for p, t in zip(preds, truths)) / n
        rows["PSP"][k] = ps_report(preds, truths, prop, k, "psp")
        rows["PSnDCG"][k] = ps_report(preds, truths, prop, k, "psndcg")
        rows["coverage"][k] = 100.0 * coverage_at_k(preds, truths, prop, k)
    return EvalReport(tuple(ks), rows)
