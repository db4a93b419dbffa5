#!/usr/bin/env python3
"""
CLIME: columnwise constrained l1 minimization of an inverse correlation matrix

Each column solves  min ||theta||_1  s.t.  ||Gamma theta - e_j||_inf <= lambda,
then the estimate is symmetrized by keeping the smaller-magnitude entry of each pair.
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from .config import Settings
from .errors import ConfigError, DegenerateSolution, NotConverged, PDRepairWarning
from .events import EventLogManager, NULL_EVENTS
from .matrices import ArrayLike, SymMatrix, as_array, inverse_pd, is_positive_definite

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClimeOptions:
    feas_tol: float = 1e-6
    pd_eps: float = 1e-6
    inner: str = "highs"
    admm_tol: float = 1e-7
    admm_max_iter: int = 50000
    threads: int = 1

    @classmethod
    def from_settings(cls, settings: Settings) -> "ClimeOptions":
        return cls(feas_tol=settings.feas_tol, pd_eps=settings.pd_eps, inner=settings.clime_inner,
                   admm_tol=settings.admm_tol, admm_max_iter=settings.admm_max_iter,
                   threads=settings.threads)


@dataclass
class ClimeSolution:
    theta_raw: np.ndarray
    theta_sym: SymMatrix
    feasibility_residual: float
    is_pd: bool
    lam: float
    degenerate: bool = False
    pd_repaired: bool = False

    def column_l1(self) -> np.ndarray:
        return np.abs(self.theta_raw).sum(axis=0)


def symmetrize_min(raw: ArrayLike) -> SymMatrix:
    """theta_ij = theta~_ij if |theta~_ij| <= |theta~_ji| else theta~_ji"""
    t = as_array(raw)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ConfigError(f"symmetrize_min needs a square matrix, got shape {t.shape}")
    keep = np.abs(t) <= np.abs(t.T)
    upper = np.where(keep, t, t.T)
    out = np.triu(upper) + np.triu(upper, k=1).T
    return SymMatrix(out)


def _column_lp(g: np.ndarray, j: int, lam: float) -> np.ndarray:
    """Exact column LP in split variables theta = u - v, u, v >= 0"""
    p = g.shape[0]
    e = np.zeros(p)
    e[j] = 1.0
    c = np.ones(2 * p)
    a_ub = np.block([[g, -g], [-g, g]])
    b_ub = np.concatenate([e + lam, lam - e])
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NotConverged(f"CLIME column {j + 1}: {res.message}", column=j)
    return res.x[:p] - res.x[p:]


def _soft(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _admm_all_columns(g: np.ndarray, lam: float, opts: ClimeOptions) -> np.ndarray:
    """
    Linearized ADMM on  min ||Theta||_1 + I_box(Z)  s.t.  Gamma Theta - Z = I

    All columns share Gamma, so they advance together as matrix iterates.
    """
    p = g.shape[0]
    eye = np.eye(p)
    rho = 1.0
    step = 1.0 / max(float(linalg.eigvalsh(g)[-1]) ** 2, 1e-12)
    theta = np.zeros((p, p))
    z = np.clip(-eye, -lam, lam)
    u = np.zeros((p, p))
    gt = g @ theta
    for it in range(1, opts.admm_max_iter + 1):
        grad = g.T @ (gt - z - eye + u)
        theta = _soft(theta - step * grad, step / rho)
        gt = g @ theta
        z_old = z
        z = np.clip(gt - eye + u, -lam, lam)
        r = gt - z - eye
        u = u + r
        primal = np.abs(r).max(axis=0)
        dual = rho * np.abs(g.T @ (z - z_old)).max(axis=0)
        if np.all(primal <= opts.admm_tol) and np.all(dual <= opts.admm_tol):
            logger.debug(f"clime admm converged after {it} iterations")
            return theta
    worst = int(np.argmax(np.abs(gt - z - eye).max(axis=0)))
    raise NotConverged(f"CLIME ADMM did not converge in {opts.admm_max_iter} iterations "
                       f"(column {worst + 1})", column=worst, solution=theta)


def feasibility_residual(gamma: ArrayLike, theta_raw: ArrayLike) -> float:
    """||Gamma Theta - I||_max"""
    g = as_array(gamma)
    return float(np.abs(g @ as_array(theta_raw) - np.eye(g.shape[0])).max())


def clime(gamma: ArrayLike, lam: float, opts: Optional[ClimeOptions] = None,
          events: EventLogManager = NULL_EVENTS) -> ClimeSolution:
    """
    Constrained l1 estimate of Gamma^{-1}

    Args:
        gamma: sample correlation matrix
        lam: constraint level; lam >= 1 makes zero feasible and is flagged
        opts: inner solver and tolerances

    Returns:
        ClimeSolution: raw columns, symmetrized estimate and feasibility certificate
    """
    opts = opts or ClimeOptions()
    g = SymMatrix(as_array(gamma)).entries
    p = g.shape[0]
    if lam <= 0:
        raise ConfigError(f"CLIME constraint level must be positive, got {lam}")

    if lam >= 1:
        logger.warning(f"CLIME lambda={lam:g} >= 1: the zero matrix is feasible")
        raw = np.zeros((p, p))
    elif opts.inner == "highs":
        if opts.threads > 1:
            with ThreadPoolExecutor(max_workers=opts.threads) as pool:
                cols = list(pool.map(lambda j: _column_lp(g, j, lam), range(p)))
        else:
            cols = [_column_lp(g, j, lam) for j in range(p)]
        raw = np.column_stack(cols)
    elif opts.inner == "admm":
        raw = _admm_all_columns(g, lam, opts)
    else:
        raise ConfigError(f"Unknown CLIME inner solver: {opts.inner}")

    residual = feasibility_residual(g, raw)
    if residual > lam + opts.feas_tol:
        col = int(np.argmax(np.abs(g @ raw - np.eye(p)).max(axis=0)))
        raise NotConverged(f"CLIME column {col + 1} infeasible: residual {residual:.3e} > "
                           f"lambda + {opts.feas_tol:g}", residual=residual, column=col)

    theta_sym = symmetrize_min(raw)
    degenerate = not np.any(theta_sym.entries)
    if degenerate:
        warnings.warn(f"CLIME estimate is the zero matrix at lambda={lam:g}", DegenerateSolution)
        events.log_solver_event("clime", "degenerate", {"lambda": lam})
    else:
        events.log_solver_event("clime", "solved", {"lambda": lam, "residual": residual})

    return ClimeSolution(theta_raw=raw, theta_sym=theta_sym, feasibility_residual=residual,
                         is_pd=is_positive_definite(theta_sym.entries), lam=lam,
                         degenerate=degenerate)


def repaired_precision(sol: ClimeSolution, pd_eps: float = 1e-6) -> SymMatrix:
    """theta_sym, floored to positive definite by a diagonal shift when needed"""
    t = sol.theta_sym.entries
    if sol.is_pd:
        return sol.theta_sym
    smallest = float(linalg.eigvalsh(t)[0])
    shift = abs(smallest) + pd_eps
    warnings.warn(f"CLIME estimate not positive definite (smallest eigenvalue {smallest:.3e}); "
                  f"adding {shift:.3e} to the diagonal", PDRepairWarning)
    logger.warning(f"CLIME PD repair: eigenvalue floor shift {shift:.3e}")
    sol.pd_repaired = True
    return SymMatrix(t + shift * np.eye(t.shape[0]))


def invert_to_correlation(sol: ClimeSolution, pd_eps: float = 1e-6) -> SymMatrix:
    """Theta_clime^{-1}, after eigenvalue flooring if Theta_clime is not PD"""
    return SymMatrix(inverse_pd(repaired_precision(sol, pd_eps), "CLIME precision"))
