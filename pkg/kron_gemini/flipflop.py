#!/usr/bin/env python3
"""
Noniterative Penalized Flip-Flop (NiPFF)

Three fixed steps on the coupled sample covariances
    A~(B) = (1/(n f)) sum_t X(t)^T B^{-1} X(t)
    B~(A) = (1/(n m)) sum_t X(t) A^{-1} X(t)^T
with a glasso solve on a re-correlated input at each step. No further iteration.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Any, Optional, Tuple

import numpy as np
from scipy import linalg

from .correlation import CorrelationMatrix, row_correlation, weights
from .errors import ConfigError, NotPD, NumericalError
from .events import EventLogManager, NULL_EVENTS
from .gemini import PenaltyConfig, clamp_rate, plugin_constants
from .glasso import GlassoOptions, glasso
from .matrices import (ArrayLike, DataSet, PrecisionEstimate, SymMatrix, as_array,
                       cholesky_factor, correlation_form, inverse_pd)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NipffResult:
    b1: SymMatrix
    a_star: SymMatrix
    b_star: SymMatrix
    a_prec: PrecisionEstimate
    b_prec: PrecisionEstimate
    penalties_used: Tuple[float, float, float]
    gamma_a0: CorrelationMatrix
    gamma_b0: CorrelationMatrix
    orientation: str = "original"
    stats: Dict[str, Any] = field(default_factory=dict, compare=False)


def tilde_a(data: DataSet, B: ArrayLike) -> SymMatrix:
    """(1/(n f)) sum_t X(t)^T B^{-1} X(t), through a Cholesky solve of B"""
    b = as_array(B)
    if b.shape != (data.f, data.f):
        raise ConfigError(f"B must be {data.f} x {data.f}, got {b.shape}")
    factor = cholesky_factor(b, "B")
    acc = np.zeros((data.m, data.m))
    for x in data:
        acc += x.T @ linalg.cho_solve(factor, x)
    acc /= data.n * data.f
    return SymMatrix((acc + acc.T) / 2.0)


def tilde_b(data: DataSet, A: ArrayLike) -> SymMatrix:
    """(1/(n m)) sum_t X(t) A^{-1} X(t)^T"""
    a = as_array(A)
    if a.shape != (data.m, data.m):
        raise ConfigError(f"A must be {data.m} x {data.m}, got {a.shape}")
    factor = cholesky_factor(a, "A")
    acc = np.zeros((data.f, data.f))
    for x in data:
        acc += x @ linalg.cho_solve(factor, x.T)
    acc /= data.n * data.m
    return SymMatrix((acc + acc.T) / 2.0)


def recorrelate(cov: SymMatrix) -> Tuple[CorrelationMatrix, np.ndarray]:
    """W~^{-1} S W~^{-1} with W~ = diag(S)^{1/2}"""
    w = np.sqrt(np.diag(cov.entries))
    gamma = np.clip(correlation_form(cov), -1.0, 1.0)
    return CorrelationMatrix(gamma), w


def nipff_penalties(f: int, m: int, n: int, cfg: PenaltyConfig,
                    c_hat_a: Optional[float] = None) -> Tuple[float, float, float]:
    """
    Theory-mode penalties (lambda_A0, lambda_B1, lambda_A1)

    lambda_{m,n} = c sqrt(log(max(m, f)) / (m n)), lambda_{f,n} likewise with f;
    lambda_A0 = 2 alpha / (eps (1 - alpha)) with alpha = C_A lambda_{m,n};
    lambda_B1 = c2 (lambda_{f,n} + lambda_{m,n}); lambda_A1 = c3 (lambda_{m,n} + lambda_{f,n}).
    C_A is c_hat_a when given, else cfg.c_hat_a.
    """
    if f < 2 or m < 2 or n < 1:
        raise ConfigError(f"Theory penalties need f, m >= 2 and n >= 1 (got f={f}, m={m}, n={n})")
    c_a = cfg.c_hat_a if c_hat_a is None else c_hat_a
    log_term = math.log(max(m, f))
    lam_mn = cfg.c * math.sqrt(log_term / (m * n))
    lam_fn = cfg.c * math.sqrt(log_term / (f * n))
    alpha, _ = clamp_rate(c_a * lam_mn, "alpha")
    lambda_a0 = max(2.0 * alpha / (cfg.eps * (1.0 - alpha)), cfg.min_penalty)
    lambda_b1 = max(cfg.c2 * (lam_fn + lam_mn), cfg.min_penalty)
    lambda_a1 = max(cfg.c3 * (lam_mn + lam_fn), cfg.min_penalty)
    return lambda_a0, lambda_b1, lambda_a1


def resolve_nipff_penalties(f: int, m: int, n: int, cfg: PenaltyConfig, data: Optional[DataSet] = None,
                            opts: Optional[GlassoOptions] = None,
                            events: EventLogManager = NULL_EVENTS) -> Tuple[float, float, float]:
    """Explicit values win where given; the rest come from theory mode"""
    explicit = (cfg.lambda_a0, cfg.lambda_b1, cfg.lambda_a1)
    if cfg.mode == "explicit" and None not in explicit:
        return tuple(float(e) for e in explicit)
    c_hat_a = None
    if cfg.constants == "plugin" and cfg.lambda_a0 is None:
        if data is None:
            raise ConfigError("Plug-in theory constants require data")
        c_hat_a = plugin_constants(data, cfg, opts, events)[0]
    theory = nipff_penalties(f, m, n, cfg, c_hat_a)
    return tuple(float(e) if e is not None else float(t) for e, t in zip(explicit, theory))


def b1_from_rho(b_rho: ArrayLike, w2: np.ndarray, m: int) -> SymMatrix:
    """B1 = W2 B_rho W2 / m"""
    return SymMatrix(np.outer(w2, w2) * as_array(b_rho) / m)


def step_one(data: DataSet, lambda_a0: float, opts: GlassoOptions,
             events: EventLogManager = NULL_EVENTS) -> SymMatrix:
    """B1 from a glasso on the row correlation"""
    sol = glasso(row_correlation(data), lambda_a0, opts, events=events)
    return b1_from_rho(inverse_pd(sol.theta, "step 1 B_rho"), weights(data).w2, data.m)


def solve_recorrelated(gamma: CorrelationMatrix, w_tilde: np.ndarray, lam: float, opts: GlassoOptions,
                       events: EventLogManager = NULL_EVENTS, what: str = "rho"):
    """W~ rho W~ and its inverse from a glasso on a re-correlated input"""
    sol = glasso(gamma, lam, opts, events=events)
    rho = inverse_pd(sol.theta, what)
    star = SymMatrix(np.outer(w_tilde, w_tilde) * rho)
    d = 1.0 / w_tilde
    prec = PrecisionEstimate(np.outer(d, d) * sol.theta.entries, edge_tol=opts.edge_tol)
    return star, prec, sol


def step_two(data: DataSet, b1: ArrayLike, lambda_b1: float, opts: GlassoOptions,
             events: EventLogManager = NULL_EVENTS):
    """A_* = W~1 A_rho(B1) W~1 from the re-correlated A~(B1)"""
    gamma_a0, w_tilde1 = recorrelate(tilde_a(data, b1))
    a_star, a_prec, sol = solve_recorrelated(gamma_a0, w_tilde1, lambda_b1, opts, events, "step 2 A_rho")
    return a_star, a_prec, gamma_a0, sol


def step_three(data: DataSet, a1: ArrayLike, lambda_a1: float, opts: GlassoOptions,
               events: EventLogManager = NULL_EVENTS):
    """B_* = W~2 B_rho(A1) W~2 from the re-correlated B~(A1)"""
    gamma_b0, w_tilde2 = recorrelate(tilde_b(data, a1))
    b_star, b_prec, sol = solve_recorrelated(gamma_b0, w_tilde2, lambda_a1, opts, events, "step 3 B_rho")
    return b_star, b_prec, gamma_b0, sol


def _run_steps(data: DataSet, penalties: Tuple[float, float, float], opts: GlassoOptions,
               events: EventLogManager):
    lambda_a0, lambda_b1, lambda_a1 = penalties
    step = 1
    try:
        b1 = step_one(data, lambda_a0, opts, events)
        step = 2
        a_star, a_prec, gamma_a0, sol_a = step_two(data, b1, lambda_b1, opts, events)
        step = 3
        b_star, b_prec, gamma_b0, sol_b = step_three(data, a_star, lambda_a1, opts, events)
    except NotPD as e:
        raise NotPD(f"NiPFF step {step}: {e}", step=step) from e
    except NumericalError as e:
        e.args = (f"NiPFF step {step}: {e}",)
        raise
    stats = {"step2_sweeps": sol_a.iterations, "step3_sweeps": sol_b.iterations}
    return b1, a_star, b_star, a_prec, b_prec, gamma_a0, gamma_b0, stats


def nipff(data: DataSet, cfg: PenaltyConfig, opts: Optional[GlassoOptions] = None,
          events: EventLogManager = NULL_EVENTS) -> NipffResult:
    """
    Run the three flip-flop steps

    Step 1 assumes f <= m; when f > m the data are transposed, the steps run with
    the roles of rows and columns exchanged, and outputs are mapped back so that
    a_star is always m x m. The result records orientation='transposed'.
    """
    opts = opts or GlassoOptions()
    transposed = data.f > data.m
    work = data.transposed() if transposed else data
    penalties = resolve_nipff_penalties(work.f, work.m, work.n, cfg, work, opts, events)
    logger.info(f"NiPFF: f={data.f}, m={data.m}, n={data.n}, orientation="
                f"{'transposed' if transposed else 'original'}, penalties={penalties}")

    b1, a_star, b_star, a_prec, b_prec, gamma_a0, gamma_b0, stats = _run_steps(work, penalties, opts, events)
    events.log_solver_event("nipff", "completed", {"penalties": list(penalties), **stats})

    if transposed:
        return NipffResult(b1=b1, a_star=b_star, b_star=a_star, a_prec=b_prec, b_prec=a_prec,
                           penalties_used=penalties, gamma_a0=gamma_b0, gamma_b0=gamma_a0,
                           orientation="transposed", stats=stats)
    return NipffResult(b1=b1, a_star=a_star, b_star=b_star, a_prec=a_prec, b_prec=b_prec,
                       penalties_used=penalties, gamma_a0=gamma_a0, gamma_b0=gamma_b0,
                       orientation="original", stats=stats)
