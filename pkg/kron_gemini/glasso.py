#!/usr/bin/env python3
"""
Graphical Lasso by block coordinate descent over the columns of W = Theta^{-1}

Minimizes tr(Gamma Theta) - log|Theta| + lambda |Theta|_{1,off} over Theta > 0.
Each column block is a Lasso solved by coordinate descent; the diagonal is not
penalized, so diag(W) = diag(Gamma) at every iterate.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numba import njit
from scipy import linalg

from .config import Settings
from .errors import ConfigError, NotConverged, NotPD, SingularInput
from .events import EventLogManager, NULL_EVENTS
from .matrices import (ArrayLike, PrecisionEstimate, SymMatrix, as_array, cholesky_factor,
                       inverse_pd, is_positive_definite, logdet_pd)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlassoOptions:
    conv_tol: float = 1e-6
    kkt_tol: float = 1e-6
    max_sweeps: int = 500
    inner_tol: float = 1e-10
    inner_max_iter: int = 10000
    edge_tol: float = 1e-8

    @classmethod
    def from_settings(cls, settings: Settings) -> "GlassoOptions":
        return cls(conv_tol=settings.conv_tol, kkt_tol=settings.kkt_tol,
                   max_sweeps=settings.max_sweeps, inner_tol=settings.inner_tol,
                   inner_max_iter=settings.inner_max_iter, edge_tol=settings.edge_tol)


@dataclass(frozen=True)
class GlassoSolution:
    theta: PrecisionEstimate
    w: SymMatrix
    objective: float
    iterations: int
    kkt_residual: float
    lam: float
    objective_path: List[float] = field(default_factory=list, compare=False)


@njit(cache=True, nogil=True)
def _glasso_sweep(W, theta, gamma, lam, beta, inner_tol, inner_max_iter):
    """One pass over all columns; returns the summed absolute change of W off-diagonals"""
    p = W.shape[0]
    idx = np.empty(p - 1, dtype=np.int64)
    wb = np.empty(p - 1)
    change = 0.0
    for j in range(p):
        c = 0
        for i in range(p):
            if i != j:
                idx[c] = i
                c += 1

        # wb = W11 @ beta_j
        for a in range(p - 1):
            acc = 0.0
            ia = idx[a]
            for k in range(p - 1):
                bk = beta[j, k]
                if bk != 0.0:
                    acc += W[ia, idx[k]] * bk
            wb[a] = acc

        for _ in range(inner_max_iter):
            max_delta = 0.0
            for k in range(p - 1):
                kk = idx[k]
                wkk = W[kk, kk]
                old = beta[j, k]
                u = gamma[kk, j] - (wb[k] - wkk * old)
                if u > lam:
                    new = (u - lam) / wkk
                elif u < -lam:
                    new = (u + lam) / wkk
                else:
                    new = 0.0
                if new != old:
                    d = new - old
                    for a in range(p - 1):
                        wb[a] += d * W[idx[a], kk]
                    beta[j, k] = new
                    if abs(d) > max_delta:
                        max_delta = abs(d)
            if max_delta < inner_tol:
                break

        dot = 0.0
        for a in range(p - 1):
            i = idx[a]
            change += abs(W[i, j] - wb[a])
            W[i, j] = wb[a]
            W[j, i] = wb[a]
            dot += wb[a] * beta[j, a]

        tjj = 1.0 / (W[j, j] - dot)
        theta[j, j] = tjj
        for a in range(p - 1):
            i = idx[a]
            theta[i, j] = -tjj * beta[j, a]
            theta[j, i] = -tjj * beta[j, a]
    return change


def glasso_objective(gamma: ArrayLike, theta: ArrayLike, lam: float) -> float:
    """tr(Gamma Theta) - log|Theta| + lambda * sum_{i != j} |theta_ij|"""
    g = as_array(gamma)
    t = as_array(theta)
    logdet = logdet_pd(t, "theta")
    off = np.abs(t).sum() - np.abs(np.diag(t)).sum()
    return float(np.sum(g * t) - logdet + lam * off)


def kkt_residual(gamma: ArrayLike, theta: ArrayLike, lam: float) -> float:
    """Max-norm violation of Gamma - Theta^{-1} + lambda * G = 0, G in the subdifferential"""
    g = as_array(gamma)
    t = as_array(theta)
    w = inverse_pd(t, "theta")
    diff = g - w
    off = ~np.eye(t.shape[0], dtype=bool)
    nonzero = off & (t != 0)
    zero = off & (t == 0)
    res = np.abs(np.diag(diff)).max(initial=0.0)
    if nonzero.any():
        res = max(res, float(np.abs(diff[nonzero] + lam * np.sign(t[nonzero])).max()))
    if zero.any():
        res = max(res, float(np.clip(np.abs(diff[zero]) - lam, 0.0, None).max()))
    return float(res)


def _initial_w(g: np.ndarray, theta_init: Optional[ArrayLike]) -> np.ndarray:
    if theta_init is None:
        w = g.copy()
    else:
        w = inverse_pd(theta_init, "initial theta")
    np.fill_diagonal(w, np.diag(g))
    shrink = 0
    while not is_positive_definite(w):
        off = ~np.eye(w.shape[0], dtype=bool)
        w[off] *= 0.95
        shrink += 1
        if shrink > 200:
            w = np.diag(np.diag(g))
    return w


def _diagonal_solution(g: np.ndarray, lam: float, edge_tol: float) -> GlassoSolution:
    d = np.diag(g)
    theta = np.diag(1.0 / d)
    w = np.diag(d)
    objective = glasso_objective(g, theta, lam)
    return GlassoSolution(theta=PrecisionEstimate(theta, edge_tol=edge_tol), w=SymMatrix(w),
                          objective=objective, iterations=0,
                          kkt_residual=kkt_residual(g, theta, lam), lam=lam,
                          objective_path=[objective])


def glasso(gamma: ArrayLike, lam: float, opts: Optional[GlassoOptions] = None,
           theta_init: Optional[ArrayLike] = None,
           events: EventLogManager = NULL_EVENTS) -> GlassoSolution:
    """
    Penalized log-determinant solve

    Args:
        gamma: symmetric PSD input with positive diagonal (a sample correlation)
        lam: off-diagonal l1 penalty, lam >= 0
        opts: tolerances
        theta_init: optional starting precision; W starts at its inverse with diag(Gamma)
        events: run-event sink

    Returns:
        GlassoSolution: precision, its inverse W and convergence certificate
    """
    opts = opts or GlassoOptions()
    g = as_array(SymMatrix(as_array(gamma)))
    p = g.shape[0]
    if lam < 0:
        raise ConfigError(f"Penalty must be nonnegative, got {lam}")
    if np.any(np.diag(g) <= 0):
        raise NotPD("Input has a non-positive diagonal entry")

    if lam == 0:
        try:
            cholesky_factor(g, "gamma")
        except NotPD:
            raise SingularInput("lambda = 0 requires a positive-definite input")
        theta = inverse_pd(g)
        objective = glasso_objective(g, theta, 0.0)
        return GlassoSolution(theta=PrecisionEstimate(theta, edge_tol=opts.edge_tol), w=SymMatrix(g),
                              objective=objective, iterations=0,
                              kkt_residual=kkt_residual(g, theta, 0.0), lam=0.0,
                              objective_path=[objective])

    off_mask = ~np.eye(p, dtype=bool)
    max_off = float(np.abs(g[off_mask]).max()) if p > 1 else 0.0
    if lam >= max_off:
        return _diagonal_solution(g, lam, opts.edge_tol)

    w = _initial_w(g, theta_init)
    theta = inverse_pd(w)
    beta = np.zeros((p, p - 1))
    for j in range(p):
        others = np.arange(p) != j
        beta[j] = -theta[others, j] / theta[j, j]

    mean_gamma = float(np.abs(g[off_mask]).mean())
    threshold = opts.conv_tol * mean_gamma
    path: List[float] = []
    residual = float("inf")
    sweep = 0

    for sweep in range(1, opts.max_sweeps + 1):
        change = _glasso_sweep(w, theta, g, float(lam), beta, opts.inner_tol, opts.inner_max_iter)
        mean_change = change / (p * (p - 1))
        try:
            objective = glasso_objective(g, theta, lam)
        except NotPD:
            objective = float("nan")
        if path and np.isfinite(objective) and np.isfinite(path[-1]):
            if objective > path[-1] + 1e-8 * max(1.0, abs(path[-1])):
                logger.warning(f"glasso objective increased at sweep {sweep}: "
                               f"{path[-1]:.12g} -> {objective:.12g}")
        path.append(objective)

        if mean_change <= threshold:
            try:
                residual = kkt_residual(g, theta, lam)
            except NotPD:
                residual = float("inf")
            logger.debug(f"glasso sweep {sweep}: mean change {mean_change:.3e}, kkt {residual:.3e}")
            if residual <= opts.kkt_tol:
                break
    else:
        events.log_solver_event("glasso", "not_converged",
                                {"lambda": lam, "sweeps": sweep, "kkt_residual": residual})
        partial = None
        if is_positive_definite(theta):
            partial = GlassoSolution(theta=PrecisionEstimate(theta, edge_tol=opts.edge_tol),
                                     w=SymMatrix(w), objective=path[-1], iterations=sweep,
                                     kkt_residual=residual, lam=lam, objective_path=path)
        raise NotConverged(f"glasso did not converge in {opts.max_sweeps} sweeps "
                           f"(lambda={lam:g}, kkt residual {residual:.3e})",
                           residual=residual, solution=partial)

    events.log_solver_event("glasso", "converged",
                            {"lambda": lam, "sweeps": sweep, "kkt_residual": residual})
    return GlassoSolution(theta=PrecisionEstimate(theta, edge_tol=opts.edge_tol), w=SymMatrix(w),
                          objective=path[-1], iterations=sweep, kkt_residual=residual, lam=lam,
                          objective_path=path)


def glasso_path(gamma: ArrayLike, grid, opts: Optional[GlassoOptions] = None,
                events: EventLogManager = NULL_EVENTS) -> List[GlassoSolution]:
    """Independent solves across an ascending penalty grid"""
    return [glasso(gamma, float(lam), opts, events=events) for lam in grid]
