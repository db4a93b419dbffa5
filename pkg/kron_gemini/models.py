#!/usr/bin/env python3
"""
Ground-truth covariance models for simulation
AR(1) chains, Star-Block graphs and random concentration matrices.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, DimensionTooSmall, TooManyEdges
from .matrices import RngSpec, SymMatrix, edges_from_matrix, inverse_pd

logger = logging.getLogger(__name__)

MODEL_TAGS = ("ar1", "star", "random", "identity")


@dataclass(frozen=True)
class GroundTruth:
    covariance: SymMatrix
    precision: SymMatrix
    edge_set: Tuple[Tuple[int, int], ...]
    model_tag: str
    parameters: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.covariance.dim

    def edge_weights(self) -> np.ndarray:
        """Precision entries at the edge set, in edge order"""
        if not self.edge_set:
            return np.zeros(0)
        i, j = np.array(self.edge_set).T
        return self.precision.entries[i, j]


def ar1(m: int, rho: float) -> GroundTruth:
    """A_ij = rho^|i-j| with its tridiagonal inverse written out in closed form"""
    if m < 2:
        raise DimensionTooSmall(f"AR(1) model needs m >= 2, got {m}")
    if not -1.0 < rho < 1.0:
        raise ConfigError(f"AR(1) coefficient must lie in (-1, 1), got {rho}")

    lags = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    cov = np.power(float(rho), lags)
    scale = 1.0 / (1.0 - rho * rho)
    prec = np.zeros((m, m))
    np.fill_diagonal(prec, (1.0 + rho * rho) * scale)
    prec[0, 0] = prec[-1, -1] = scale
    off = np.arange(m - 1)
    prec[off, off + 1] = prec[off + 1, off] = -rho * scale

    edges = tuple((i, i + 1) for i in range(m - 1)) if rho != 0 else ()
    return GroundTruth(covariance=SymMatrix(cov), precision=SymMatrix(prec), edge_set=edges,
                       model_tag="ar1", parameters={"m": m, "rho": rho})


def star_block(m: int, n_blocks: int = 20, leaves: int = 8, rho: float = 0.5,
               edge_tol: float = 1e-8) -> GroundTruth:
    """
    Block-diagonal star graphs

    Blocks of size leaves + 1 occupy the leading indices, hub first in each block.
    Within a block S_ij = rho for hub-leaf pairs and rho^2 for leaf-leaf pairs.
    Remaining nodes are singletons.
    """
    size = leaves + 1
    if n_blocks < 0 or leaves < 1:
        raise ConfigError(f"Star-Block needs n_blocks >= 0 and leaves >= 1 (got {n_blocks}, {leaves})")
    if m < n_blocks * size:
        raise DimensionTooSmall(f"Star-Block with {n_blocks} blocks of {size} needs m >= "
                                f"{n_blocks * size}, got {m}")
    if not -1.0 < rho < 1.0:
        raise ConfigError(f"Star-Block correlation must lie in (-1, 1), got {rho}")

    block = np.full((size, size), rho * rho)
    block[0, :] = block[:, 0] = rho
    np.fill_diagonal(block, 1.0)

    cov = np.eye(m)
    edges: List[Tuple[int, int]] = []
    for b in range(n_blocks):
        start = b * size
        cov[start:start + size, start:start + size] = block
        if rho != 0:
            edges.extend((start, start + k) for k in range(1, size))

    prec = inverse_pd(cov, "Star-Block covariance")
    prec = (prec + prec.T) / 2.0
    numeric = set(edges_from_matrix(prec, edge_tol))
    if numeric != set(edges):
        logger.warning(f"Star-Block precision pattern differs from the star edges "
                       f"({len(numeric)} vs {len(edges)} edges)")
    # leaf-leaf entries vanish analytically; clear round-off
    mask = np.zeros((m, m), dtype=bool)
    np.fill_diagonal(mask, True)
    for i, j in edges:
        mask[i, j] = mask[j, i] = True
    prec[~mask] = 0.0

    return GroundTruth(covariance=SymMatrix(cov), precision=SymMatrix(prec), edge_set=tuple(edges),
                       model_tag="star",
                       parameters={"m": m, "n_blocks": n_blocks, "leaves": leaves, "rho": rho})


def random_concentration(f: int, d: int, w_min: float, w_max: float, rng: np.random.Generator,
                         base: float = 0.25) -> GroundTruth:
    """
    Pi = base * I, then d distinct pairs each get pi_ij, pi_ji -= w and pi_ii, pi_jj += w

    Pairs are drawn without replacement in upper-triangle order and weights
    uniform on [w_min, w_max] in draw order. Diagonal dominance keeps Pi PD.
    """
    if f < 1:
        raise DimensionTooSmall(f"Random concentration model needs f >= 1, got {f}")
    if not 0 < w_min <= w_max:
        raise ConfigError(f"Edge weights need 0 < w_min <= w_max (got {w_min}, {w_max})")
    if base <= 0:
        raise ConfigError(f"Base diagonal must be positive, got {base}")
    max_edges = f * (f - 1) // 2
    if d < 0 or d > max_edges:
        raise TooManyEdges(f"Cannot place {d} edges on {f} nodes (max {max_edges})")

    rows, cols = np.triu_indices(f, k=1)
    picks = rng.choice(max_edges, size=d, replace=False) if d else np.zeros(0, dtype=np.int64)
    w = rng.uniform(w_min, w_max, size=d)

    prec = base * np.eye(f)
    for k, pick in enumerate(picks):
        i, j = int(rows[pick]), int(cols[pick])
        prec[i, j] -= w[k]
        prec[j, i] -= w[k]
        prec[i, i] += w[k]
        prec[j, j] += w[k]

    edges = tuple(sorted((int(rows[p]), int(cols[p])) for p in picks))
    cov = inverse_pd(prec, "concentration matrix")
    return GroundTruth(covariance=SymMatrix(cov), precision=SymMatrix(prec), edge_set=edges,
                       model_tag="random",
                       parameters={"f": f, "d": d, "w_min": w_min, "w_max": w_max, "base": base})


def identity(p: int) -> GroundTruth:
    eye = np.eye(p)
    return GroundTruth(covariance=SymMatrix(eye), precision=SymMatrix(eye), edge_set=(),
                       model_tag="identity", parameters={"p": p})


def parse_model_spec(spec: str) -> Tuple[str, Dict[str, float]]:
    """'ar1:rho=0.5' -> ('ar1', {'rho': 0.5})"""
    tag, _, rest = spec.strip().partition(":")
    tag = tag.strip().lower()
    if tag not in MODEL_TAGS:
        raise ConfigError(f"Unknown model '{tag}' (expected one of {', '.join(MODEL_TAGS)})")
    params: Dict[str, float] = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"Malformed model parameter '{item}' in '{spec}'")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"Model parameter {key.strip()} is not a number: '{value}'")
    return tag, params


def build_model(spec: str, dim: int, rng: Optional[RngSpec] = None, tag: int = 0) -> GroundTruth:
    """
    Build a ground truth of size dim from a model spec string

    Random models draw from rng.model_stream(tag), so the A and B sides of one
    run use distinct tags.
    """
    name, params = parse_model_spec(spec)
    try:
        if name == "ar1":
            return ar1(dim, params.get("rho", 0.5))
        if name == "star":
            return star_block(dim, n_blocks=int(params.get("n_blocks", 20)),
                              leaves=int(params.get("leaves", 8)), rho=params.get("rho", 0.5))
        if name == "random":
            if rng is None:
                raise ConfigError("Random concentration model needs a seed")
            return random_concentration(dim, int(params["d"]), params["w_min"], params["w_max"],
                                        rng.model_stream(tag), base=params.get("base", 0.25))
    except KeyError as e:
        raise ConfigError(f"Model '{spec}' is missing parameter {e}")
    return identity(dim)
