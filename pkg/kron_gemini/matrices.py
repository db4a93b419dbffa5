#!/usr/bin/env python3
"""
Core matrix types and the matrix-variate normal sampler
SymMatrix, DataSet, RngSpec, symmetric square root and Kronecker products
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .errors import ConfigError, DimensionGuard, DimensionMismatch, NotPD, NotPSD

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8

# RNG substream purposes
SAMPLE_STREAM = 0
MODEL_STREAM = 1
FOLD_STREAM = 2


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SymMatrix:
    """Dense symmetric matrix; construction makes the storage exactly symmetric"""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionMismatch(f"Symmetric matrix must be square and non-empty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NotPSD("Matrix contains non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        asym = float(np.max(np.abs(a - a.T)))
        if asym > SYMMETRY_TOL * scale:
            raise DimensionMismatch(f"Matrix is not symmetric (max asymmetry {asym:.3e})")
        object.__setattr__(self, "entries", _frozen((a + a.T) / 2.0))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def scaled(self, factor: float) -> "SymMatrix":
        return SymMatrix(self.entries * factor)


ArrayLike = Union[SymMatrix, np.ndarray, Sequence[Sequence[float]]]


def as_array(x: ArrayLike) -> np.ndarray:
    """Plain float64 ndarray view of a matrix-like value"""
    if isinstance(x, SymMatrix):
        return x.entries
    return np.asarray(x, dtype=np.float64)


def as_sym(x: ArrayLike) -> SymMatrix:
    return x if isinstance(x, SymMatrix) else SymMatrix(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class DataSet:
    """n replicate f x m matrices stored as an (n, f, m) array"""

    matrices: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrices, dtype=np.float64)
        if a.ndim == 2:
            a = a[np.newaxis]
        if a.ndim != 3 or a.shape[0] < 1 or a.shape[1] < 1 or a.shape[2] < 1:
            raise DimensionMismatch(f"DataSet needs n >= 1 replicates of f x m matrices, got shape {a.shape}")
        object.__setattr__(self, "matrices", _frozen(a))

    @classmethod
    def from_list(cls, replicates: Iterable[ArrayLike]) -> "DataSet":
        mats = [as_array(x) for x in replicates]
        if not mats:
            raise DimensionMismatch("DataSet needs at least one replicate")
        shape = mats[0].shape
        for t, x in enumerate(mats):
            if x.shape != shape:
                raise DimensionMismatch(f"Replicate {t + 1} has shape {x.shape}, expected {shape}")
        return cls(np.stack(mats))

    @property
    def n(self) -> int:
        return self.matrices.shape[0]

    @property
    def f(self) -> int:
        return self.matrices.shape[1]

    @property
    def m(self) -> int:
        return self.matrices.shape[2]

    def transposed(self) -> "DataSet":
        return DataSet(np.transpose(self.matrices, (0, 2, 1)))

    def take_rows(self, rows: Sequence[int]) -> "DataSet":
        return DataSet(self.matrices[:, np.asarray(rows, dtype=int), :])

    def take_columns(self, cols: Sequence[int]) -> "DataSet":
        return DataSet(self.matrices[:, :, np.asarray(cols, dtype=int)])

    def scaled(self, factor: float) -> "DataSet":
        return DataSet(self.matrices * factor)

    def __iter__(self):
        return iter(self.matrices)


@dataclass(frozen=True)
class RngSpec:
    """
    Deterministic random-number contract

    Every draw comes from a Philox stream keyed by
    SeedSequence(seed, spawn_key=(purpose, trial, replicate)), so results do not
    depend on the order in which substreams are consumed.
    """

    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")

    def substream(self, trial: int = 0, replicate: int = 0,
                  purpose: int = SAMPLE_STREAM) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(purpose, trial, replicate))
        return np.random.Generator(np.random.Philox(seq))

    def model_stream(self, tag: int = 0) -> np.random.Generator:
        return self.substream(tag, 0, purpose=MODEL_STREAM)

    def fold_stream(self, trial: int) -> np.random.Generator:
        return self.substream(trial, 0, purpose=FOLD_STREAM)


def sym_sqrt(S: ArrayLike, tol_eig: Optional[float] = None) -> SymMatrix:
    """
    Unique PSD square root through a symmetric eigendecomposition

    Eigenvalues below -tol_eig raise NotPSD; the rest are clamped at zero.
    tol_eig defaults to 1e-8 * ||S||_2.
    """
    a = as_sym(S).entries
    eigvals, eigvecs = linalg.eigh(a)
    spectral = float(np.max(np.abs(eigvals)))
    tol = 1e-8 * spectral if tol_eig is None else tol_eig
    if eigvals[0] < -tol:
        raise NotPSD(f"Matrix is not positive semi-definite (smallest eigenvalue {eigvals[0]:.3e})",
                     min_eigenvalue=float(eigvals[0]))
    roots = np.sqrt(np.clip(eigvals, 0.0, None))
    return SymMatrix((eigvecs * roots) @ eigvecs.T)


def is_positive_definite(a: ArrayLike) -> bool:
    try:
        linalg.cho_factor(as_array(a), lower=True)
        return True
    except linalg.LinAlgError:
        return False


def cholesky_factor(a: ArrayLike, what: str = "matrix", step: Optional[int] = None):
    """cho_factor wrapper that raises NotPD"""
    try:
        return linalg.cho_factor(as_array(a), lower=True)
    except linalg.LinAlgError:
        where = f" at step {step}" if step is not None else ""
        raise NotPD(f"{what} is not positive definite{where}", step=step)


def inverse_pd(a: ArrayLike, what: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via its Cholesky factor"""
    arr = as_array(a)
    factor = cholesky_factor(arr, what)
    inv = linalg.cho_solve(factor, np.eye(arr.shape[0]))
    return (inv + inv.T) / 2.0


def logdet_pd(a: ArrayLike, what: str = "matrix") -> float:
    c, _ = cholesky_factor(a, what)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def kronecker(A: ArrayLike, B: ArrayLike, guard: int = 4096) -> SymMatrix:
    """
    Exact Kronecker product A (x) B under the column-stacking vec convention

    (A (x) B)[i*f + k, j*f + l] = A[i, j] * B[k, l] with zero-based indices.
    """
    a = as_array(A)
    b = as_array(B)
    if a.shape[0] * b.shape[0] > guard:
        raise DimensionGuard(
            f"Kronecker product of size {a.shape[0] * b.shape[0]} exceeds the guard {guard}")
    return SymMatrix(np.kron(a, b))


def _draw_replicate(rng: RngSpec, trial: int, replicate: int, root_b: np.ndarray,
                    root_a: np.ndarray, scale: float) -> np.ndarray:
    z = rng.substream(trial, replicate).standard_normal((root_b.shape[0], root_a.shape[0]))
    return scale * (root_b @ z @ root_a)


def _unit_trace_root(S: ArrayLike) -> Tuple[np.ndarray, float]:
    """(sqrt(S / tr S), tr S); non-positive traces are left unscaled for sym_sqrt to reject"""
    s = as_sym(S).entries
    trace = float(np.trace(s))
    if not trace > 0:
        trace = 1.0
    return sym_sqrt(s / trace).entries, trace


def sample_matrix_normal(A: ArrayLike, B: ArrayLike, n: int, rng: RngSpec,
                         trial: int = 0, threads: int = 1) -> DataSet:
    """
    Draw n replicates X(t) = B^{1/2} Z(t) A^{1/2}

    Both factors are reduced to unit trace before their roots are taken and the
    scalar sqrt(tr A tr B) is applied last, so (eta A, B / eta) draws the same
    bits as (A, B) whenever eta A and B / eta are exact.

    Args:
        A: m x m column covariance
        B: f x f row covariance
        n: replicate count
        rng: seed contract; replicate t uses substream (trial, t)
        trial: trial index for harness use
        threads: replicates drawn concurrently when > 1

    Returns:
        DataSet: n replicates of shape f x m
    """
    if n < 1:
        raise ConfigError(f"Replicate count must be at least 1, got {n}")
    root_a, trace_a = _unit_trace_root(A)
    root_b, trace_b = _unit_trace_root(B)
    scale = math.sqrt(trace_a * trace_b)

    draw = lambda t: _draw_replicate(rng, trial, t, root_b, root_a, scale)
    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            mats = list(pool.map(draw, range(n)))
    else:
        mats = [draw(t) for t in range(n)]
    return DataSet(np.stack(mats))


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization"""
    return np.asarray(x).reshape(-1, order="F")


def correlation_form(S: ArrayLike) -> np.ndarray:
    """D^{-1/2} S D^{-1/2} with an exact unit diagonal"""
    a = as_array(S)
    d = np.sqrt(np.diag(a))
    if np.any(d <= 0):
        raise NotPD("Matrix has a non-positive diagonal entry")
    r = a / np.outer(d, d)
    np.fill_diagonal(r, 1.0)
    return (r + r.T) / 2.0


def edges_from_matrix(a: ArrayLike, edge_tol: float = 1e-8) -> List[Tuple[int, int]]:
    """Off-diagonal support (i < j, zero-based) with |a_ij| > edge_tol"""
    arr = as_array(a)
    rows, cols = np.nonzero(np.triu(np.abs(arr) > edge_tol, k=1))
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


@dataclass(frozen=True)
class PrecisionEstimate(SymMatrix):
    """Positive-definite precision matrix together with its edge set"""

    edge_tol: float = 1e-8
    edge_set: Tuple[Tuple[int, int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        super().__post_init__()
        if not is_positive_definite(self.entries):
            raise NotPD("Precision estimate is not positive definite")
        object.__setattr__(self, "edge_set", tuple(edges_from_matrix(self.entries, self.edge_tol)))
