"""Label representations used to drive the tree partitioning.

Each label gets one vector:

  input   row l of Y^T X   (sum of the feature rows tagged with l)
  output  row l of Y^T Y   (co-occurrence counts with every label)
  joint   concatenation of the two, each block unit-normalized and
          scaled by 1/sqrt(2), output coordinates offset by d

All rows are L2-normalized; labels with no instances keep a zero row.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .sparse import SparseRowMatrix


class ReprSpace(enum.Enum):
    INPUT = "input"
    OUTPUT = "output"
    JOINT = "joint"


@dataclass(frozen=True)
class LabelRepr:
    """One vector per label, stored row-wise; ``dim`` is the repr space size."""

    matrix: SparseRowMatrix
    space: ReprSpace
    dim: int

    @property
    def n_labels(self) -> int:
        return self.matrix.n_rows


def _row_normalize(m: sp.csr_matrix) -> sp.csr_matrix:
    """Scale each row of a CSR matrix to unit L2 norm (zero rows untouched)."""
    m = m.tocsr()
    m.sort_indices()
    sq = np.asarray(m.multiply(m).sum(axis=1)).ravel()
    norms = np.sqrt(sq)
    norms[norms == 0] = 1.0
    inv = sp.diags(1.0 / norms)
    out = inv @ m
    out.sort_indices()
    return out


def _product_csr(ds: Dataset, right: SparseRowMatrix) -> sp.csr_matrix:
    """Compute Y^T R in float64 for a row matrix R aligned with Y's rows."""
    Y = ds.Y.to_csr(np.float64)
    R = right.to_csr(np.float64)
    return (Y.T @ R).tocsr()


def build_input_repr(ds: Dataset) -> LabelRepr:
    """Rows of Y^T X, L2-normalized."""
    v = _row_normalize(_product_csr(ds, ds.X))
    return LabelRepr(SparseRowMatrix.from_csr(v), ReprSpace.INPUT, ds.d)


def build_output_repr(ds: Dataset) -> LabelRepr:
    """Rows of Y^T Y, L2-normalized."""
    v = _row_normalize(_product_csr(ds, ds.Y))
    return LabelRepr(SparseRowMatrix.from_csr(v), ReprSpace.OUTPUT, ds.l)


def build_joint_repr(ds: Dataset) -> LabelRepr:
    """Per-block normalized [input ; output] stacked side by side, / sqrt(2)."""
    vin = _row_normalize(_product_csr(ds, ds.X))
    vout = _row_normalize(_product_csr(ds, ds.Y))
    scale = 1.0 / np.sqrt(2.0)
    joint = sp.hstack([vin * scale, vout * scale], format="csr")
    joint.sort_indices()
    return LabelRepr(SparseRowMatrix.from_csr(joint), ReprSpace.JOINT, ds.d + ds.l)


def build_repr(ds: Dataset, space: ReprSpace) -> LabelRepr:
    if space is ReprSpace.INPUT:
        return build_input_repr(ds)
    if space is ReprSpace.OUTPUT:
        return build_output_repr(ds)
    return build_joint_repr(ds)
