#!/usr/bin/env python3
"""
Pooled sample correlations and weights from replicate data matrices
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateColumn, DegenerateRow
from .matrices import DataSet, SymMatrix

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
DIAG_TOL = 1e-8


@dataclass(frozen=True)
class CorrelationMatrix(SymMatrix):
    """Symmetric matrix with an exact unit diagonal; a diagonal within DIAG_TOL of 1 is snapped"""

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.float64, copy=True)
        if a.ndim == 2 and a.shape[0] == a.shape[1]:
            off = float(np.max(np.abs(np.diag(a) - 1.0), initial=0.0))
            if not off <= DIAG_TOL:
                raise ConfigError(f"Correlation diagonal is {off:.3g} away from 1 (tolerance {DIAG_TOL:g})")
            np.fill_diagonal(a, 1.0)
        object.__setattr__(self, "entries", a)
        super().__post_init__()
        if np.max(np.abs(self.entries)) > 1.0 + UNIT_TOL:
            raise ConfigError("Correlation entries must lie in [-1, 1]")


@dataclass(frozen=True)
class WeightPair:
    """Column norms w1 (length m), row norms w2 (length f) and mean squared Frobenius norm"""

    w1: np.ndarray
    w2: np.ndarray
    frob2_mean: float


def _column_gram(data: DataSet) -> np.ndarray:
    gram = np.zeros((data.m, data.m))
    for x in data:
        gram += x.T @ x
    return gram


def _row_gram(data: DataSet) -> np.ndarray:
    gram = np.zeros((data.f, data.f))
    for x in data:
        gram += x @ x.T
    return gram


def _normalize(gram: np.ndarray, degenerate, what: str) -> CorrelationMatrix:
    norms2 = np.diag(gram).copy()
    bad = np.flatnonzero(norms2 <= 0)
    if bad.size:
        raise degenerate(f"Pooled {what} {int(bad[0]) + 1} has zero norm", index=int(bad[0]))
    d = np.sqrt(norms2)
    gamma = gram / np.outer(d, d)
    gamma = (gamma + gamma.T) / 2.0
    np.clip(gamma, -1.0, 1.0, out=gamma)
    return CorrelationMatrix(gamma)


def column_correlation(data: DataSet) -> CorrelationMatrix:
    """Gamma(A)_ij = sum_t <x_i, x_j> / (||x_i|| ||x_j||) with norms pooled over replicates"""
    return _normalize(_column_gram(data), DegenerateColumn, "column")


def row_correlation(data: DataSet) -> CorrelationMatrix:
    """Row analogue of column_correlation, f x f"""
    return _normalize(_row_gram(data), DegenerateRow, "row")


def weights(data: DataSet) -> WeightPair:
    """Root-mean-square column and row norms plus (1/n) sum_t ||X(t)||_F^2"""
    col2 = np.zeros(data.m)
    row2 = np.zeros(data.f)
    for x in data:
        sq = x * x
        col2 += sq.sum(axis=0)
        row2 += sq.sum(axis=1)

    bad_col = np.flatnonzero(col2 <= 0)
    if bad_col.size:
        raise DegenerateColumn(f"Pooled column {int(bad_col[0]) + 1} has zero norm", index=int(bad_col[0]))
    bad_row = np.flatnonzero(row2 <= 0)
    if bad_row.size:
        raise DegenerateRow(f"Pooled row {int(bad_row[0]) + 1} has zero norm", index=int(bad_row[0]))

    w1 = np.sqrt(col2 / data.n)
    w2 = np.sqrt(row2 / data.n)
    w1.setflags(write=False)
    w2.setflags(write=False)
    frob2_mean = float(np.sum(col2) / data.n)
    return WeightPair(w1=w1, w2=w2, frob2_mean=frob2_mean)
