#!/usr/bin/env python3
"""
Gemini estimators of a Kronecker covariance A (x) B
Penalty selection, penalized correlation estimation on both sides, weighting
and assembly of the Kronecker factors.
"""

import math
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Dict, Any, Optional, Sequence, Tuple

import numpy as np

from .clime import ClimeOptions, clime, repaired_precision
from .correlation import WeightPair, column_correlation, row_correlation, weights
from .errors import ConcentrationOutOfRange, ConfigError, DimensionGuard
from .events import EventLogManager, NULL_EVENTS
from .glasso import GlassoOptions, glasso
from .matrices import (ArrayLike, DataSet, PrecisionEstimate, RngSpec, SymMatrix, as_array, inverse_pd,
                       kronecker)

logger = logging.getLogger(__name__)

PENALTY_MODES = ("explicit", "theory", "cv")
CONSTANT_MODES = ("fixed", "plugin")
SOLVERS = ("glasso", "clime")
RATE_CAP = 1.0 / 3.0 - 1e-9
DEFAULT_GRID = tuple(round(0.02 * k, 2) for k in range(1, 37))


@dataclass(frozen=True)
class PenaltyConfig:
    """
    Penalty selection for the Gemini and flip-flop programs

    lambda_b penalizes the A-side (column) program and lambda_a the B-side (row)
    program. Theory mode derives both from concentration rates; cv mode picks
    them from the grid by cross-validation. With constants="plugin" the theory
    constants C_A, C_B come from a pilot glasso fit instead of c_hat_a, c_hat_b.
    """

    mode: str = "theory"
    lambda_a: Optional[float] = None
    lambda_b: Optional[float] = None
    c: float = 0.5
    eps: float = 0.5
    c_hat_a: float = 1.0
    c_hat_b: float = 1.0
    constants: str = "fixed"
    grid: Tuple[float, ...] = DEFAULT_GRID
    min_penalty: float = 1e-6
    # flip-flop extensions
    lambda_a0: Optional[float] = None
    lambda_b1: Optional[float] = None
    lambda_a1: Optional[float] = None
    eps1: float = 0.5
    c2: float = 1.0
    c3: float = 1.0
    folds: int = 10
    cv_trials: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PENALTY_MODES:
            raise ConfigError(f"Unknown penalty mode: {self.mode}")
        if self.mode == "explicit":
            for name in ("lambda_a", "lambda_b"):
                value = getattr(self, name)
                if value is None or value <= 0:
                    raise ConfigError(f"Explicit penalty mode requires {name} > 0")
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.eps1 < 1:
            raise ConfigError(f"eps1 must lie in (0, 1), got {self.eps1}")
        if self.c < 0:
            raise ConfigError(f"Theory constant c must be nonnegative, got {self.c}")
        if self.constants not in CONSTANT_MODES:
            raise ConfigError(f"Unknown constants mode: {self.constants}")
        if not (self.c_hat_a > 0 and self.c_hat_b > 0):
            raise ConfigError(f"c_hat_a and c_hat_b must be positive (got {self.c_hat_a}, {self.c_hat_b})")
        grid = tuple(float(x) for x in self.grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("Penalty grid must be non-empty and strictly ascending")
        object.__setattr__(self, "grid", grid)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


@dataclass(frozen=True)
class PenaltySelection:
    lambda_a: float
    lambda_b: float
    clamped: bool = False
    details: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __iter__(self):
        return iter((self.lambda_a, self.lambda_b))


@dataclass(frozen=True)
class GeminiFit:
    a_rho: SymMatrix
    b_rho: SymMatrix
    a_prec: PrecisionEstimate
    b_prec: PrecisionEstimate
    weights: WeightPair
    solver_used: str
    penalties: PenaltyConfig
    lambda_a: float
    lambda_b: float
    stats: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return self.a_rho.dim

    @property
    def f(self) -> int:
        return self.b_rho.dim


@dataclass(frozen=True)
class KroneckerEstimate:
    """Factor form of the estimate of A (x) B; explicit matrices only under the size guard"""

    a_factor: SymMatrix
    b_factor: SymMatrix
    explicit: Optional[SymMatrix] = None
    explicit_inverse: Optional[SymMatrix] = None


def clamp_rate(rate: float, name: str) -> Tuple[float, bool]:
    if rate < RATE_CAP:
        return rate, False
    warnings.warn(f"{name} = {rate:.4g} clamped below 1/3", ConcentrationOutOfRange)
    logger.warning(f"Concentration rate {name} = {rate:.4g} clamped to {RATE_CAP:.6f}")
    return RATE_CAP, True


def theory_penalties(f: int, m: int, n: int, cfg: PenaltyConfig,
                     constants: Optional[Tuple[float, float]] = None) -> PenaltySelection:
    """
    tau0 = c * sqrt(log(max(m, f)) / n), alpha = C_A tau0 / sqrt(m), beta = C_B tau0 / sqrt(f),
    lambda_b = 2 beta / (1 - beta) / eps and lambda_a = 2 alpha / (1 - alpha) / eps

    (C_A, C_B) is `constants` when given, else (cfg.c_hat_a, cfg.c_hat_b).
    """
    if f < 2 or m < 2 or n < 1:
        raise ConfigError(f"Theory penalties need f, m >= 2 and n >= 1 (got f={f}, m={m}, n={n})")
    c_a, c_b = constants if constants is not None else (cfg.c_hat_a, cfg.c_hat_b)
    tau0 = cfg.c * math.sqrt(math.log(max(m, f)) / n)
    alpha, clamped_a = clamp_rate(c_a * tau0 / math.sqrt(m), "alpha_n")
    beta, clamped_b = clamp_rate(c_b * tau0 / math.sqrt(f), "beta_n")
    lambda_b = max(2.0 * beta / (1.0 - beta) / cfg.eps, cfg.min_penalty)
    lambda_a = max(2.0 * alpha / (1.0 - alpha) / cfg.eps, cfg.min_penalty)
    return PenaltySelection(lambda_a=lambda_a, lambda_b=lambda_b, clamped=clamped_a or clamped_b,
                            details={"tau0": tau0, "alpha_n": alpha, "beta_n": beta,
                                     "c_hat_a": c_a, "c_hat_b": c_b})


def frob_trace_constant(S: ArrayLike) -> float:
    """sqrt(p) ||S||_F / tr(S); at least 1 for PSD S, equal to 1 for multiples of I"""
    s = as_array(S)
    return float(math.sqrt(s.shape[0]) * np.linalg.norm(s, "fro") / np.trace(s))


def plugin_constants(data: DataSet, cfg: PenaltyConfig, glasso_opts: Optional[GlassoOptions] = None,
                     events: EventLogManager = NULL_EVENTS) -> Tuple[float, float]:
    """
    (C_A, C_B) from a pilot glasso fit

    The pilot runs at the theory penalties with unit constants; C_A and C_B are
    frob_trace_constant of the weighted factors W1 A_rho W1 and W2 B_rho W2.
    """
    glasso_opts = glasso_opts or GlassoOptions()
    pilot = theory_penalties(data.f, data.m, data.n, cfg, constants=(1.0, 1.0))
    w = weights(data)
    a_rho, _, _ = solve_side(column_correlation(data), pilot.lambda_b, "glasso", glasso_opts,
                             ClimeOptions(), events)
    b_rho, _, _ = solve_side(row_correlation(data), pilot.lambda_a, "glasso", glasso_opts,
                             ClimeOptions(), events)
    c_a = frob_trace_constant(np.outer(w.w1, w.w1) * a_rho.entries)
    c_b = frob_trace_constant(np.outer(w.w2, w.w2) * b_rho.entries)
    logger.info(f"Plug-in constants from pilot fit at lambda_a={pilot.lambda_a:.6g}, "
                f"lambda_b={pilot.lambda_b:.6g}: C_A={c_a:.6g}, C_B={c_b:.6g}")
    return c_a, c_b


def select_penalties(f: int, m: int, n: int, cfg: PenaltyConfig,
                     data: Optional[DataSet] = None, glasso_opts: Optional[GlassoOptions] = None,
                     events: EventLogManager = NULL_EVENTS) -> PenaltySelection:
    """Resolve (lambda_a, lambda_b) for the configured mode"""
    if cfg.mode == "explicit":
        return PenaltySelection(lambda_a=float(cfg.lambda_a), lambda_b=float(cfg.lambda_b))
    if cfg.mode == "theory":
        constants = None
        if cfg.constants == "plugin" and (cfg.lambda_a is None or cfg.lambda_b is None):
            if data is None:
                raise ConfigError("Plug-in theory constants require data")
            constants = plugin_constants(data, cfg, glasso_opts, events)
        return _with_overrides(theory_penalties(f, m, n, cfg, constants), cfg)

    if data is None:
        raise ConfigError("Cross-validated penalties require data")
    from .evaluation import cross_validate

    rng = RngSpec(cfg.seed)
    cv_b = cross_validate(data, cfg.grid, folds=cfg.folds, trials=cfg.cv_trials, side="A", rng=rng)
    cv_a = cross_validate(data, cfg.grid, folds=cfg.folds, trials=cfg.cv_trials, side="B", rng=rng)
    selection = PenaltySelection(lambda_a=cv_a.chosen, lambda_b=cv_b.chosen,
                                 details={"cv_scores_a": list(cv_a.scores), "cv_scores_b": list(cv_b.scores)})
    return _with_overrides(selection, cfg)


def _with_overrides(selection: PenaltySelection, cfg: PenaltyConfig) -> PenaltySelection:
    """Explicit lambda_a / lambda_b replace the derived value on their side"""
    if cfg.lambda_a is None and cfg.lambda_b is None:
        return selection
    return PenaltySelection(
        lambda_a=float(cfg.lambda_a) if cfg.lambda_a is not None else selection.lambda_a,
        lambda_b=float(cfg.lambda_b) if cfg.lambda_b is not None else selection.lambda_b,
        clamped=selection.clamped, details={**selection.details, "overridden": True})


def solve_side(gamma: SymMatrix, lam: float, solver: str, glasso_opts: GlassoOptions,
               clime_opts: ClimeOptions, events: EventLogManager = NULL_EVENTS):
    """(rho, precision, stats) for one side at one penalty"""
    if solver == "glasso":
        sol = glasso(gamma, lam, glasso_opts, events=events)
        stats = {"iterations": sol.iterations, "kkt_residual": sol.kkt_residual,
                 "objective": sol.objective}
        # exact inverse of the precision keeps a_prec = a_rho^{-1} to round-off
        return SymMatrix(inverse_pd(sol.theta, "glasso precision")), sol.theta, stats

    sol = clime(gamma, lam, clime_opts, events=events)
    theta = repaired_precision(sol, clime_opts.pd_eps)
    prec = PrecisionEstimate(theta.entries, edge_tol=glasso_opts.edge_tol)
    rho = SymMatrix(inverse_pd(prec, "CLIME precision"))
    stats = {"feasibility_residual": sol.feasibility_residual, "pd_repaired": sol.pd_repaired,
             "degenerate": sol.degenerate}
    return rho, prec, stats


def gemini_estimate(data: DataSet, cfg: PenaltyConfig, solver: str = "glasso",
                    glasso_opts: Optional[GlassoOptions] = None,
                    clime_opts: Optional[ClimeOptions] = None, threads: int = 1,
                    events: EventLogManager = NULL_EVENTS) -> GeminiFit:
    """
    Baseline Gemini fit

    The A side solves on the column correlation with lambda_b, the B side on the
    row correlation with lambda_a. The two solves are independent.
    """
    if solver not in SOLVERS:
        raise ConfigError(f"Unknown solver: {solver}")
    glasso_opts = glasso_opts or GlassoOptions()
    clime_opts = clime_opts or ClimeOptions()

    selection = select_penalties(data.f, data.m, data.n, cfg, data, glasso_opts, events)
    gamma_a = column_correlation(data)
    gamma_b = row_correlation(data)
    w = weights(data)
    logger.info(f"Gemini fit: f={data.f}, m={data.m}, n={data.n}, solver={solver}, "
                f"lambda_a={selection.lambda_a:.6g}, lambda_b={selection.lambda_b:.6g}")

    jobs = [(gamma_a, selection.lambda_b), (gamma_b, selection.lambda_a)]
    run = lambda job: solve_side(job[0], job[1], solver, glasso_opts, clime_opts, events)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            (a_rho, a_prec, a_stats), (b_rho, b_prec, b_stats) = list(pool.map(run, jobs))
    else:
        (a_rho, a_prec, a_stats), (b_rho, b_prec, b_stats) = [run(job) for job in jobs]

    return GeminiFit(a_rho=a_rho, b_rho=b_rho, a_prec=a_prec, b_prec=b_prec, weights=w,
                     solver_used=solver, penalties=cfg, lambda_a=selection.lambda_a,
                     lambda_b=selection.lambda_b,
                     stats={"a_side": a_stats, "b_side": b_stats, "clamped": selection.clamped,
                            "selection": selection.details})


def gemini_factors(fit: GeminiFit) -> Tuple[np.ndarray, np.ndarray]:
    """A = W1 A_rho W1 / frob2_mean and B = W2 B_rho W2"""
    w1 = fit.weights.w1
    w2 = fit.weights.w2
    a = np.outer(w1, w1) * fit.a_rho.entries / fit.weights.frob2_mean
    b = np.outer(w2, w2) * fit.b_rho.entries
    return a, b


def assemble_kronecker(fit: GeminiFit, guard: int = 4096) -> KroneckerEstimate:
    """Factor form of the Gemini estimate and, within the guard, the explicit product and inverse"""
    if fit.weights.frob2_mean <= 0:
        raise ConfigError("frob2_mean must be positive")
    a, b = gemini_factors(fit)
    a_factor, b_factor = SymMatrix(a), SymMatrix(b)
    try:
        explicit = kronecker(a_factor, b_factor, guard)
        inverse = kronecker(inverse_pd(a_factor, "A factor"), inverse_pd(b_factor, "B factor"), guard)
    except DimensionGuard:
        logger.info(f"Kronecker product of size {fit.m * fit.f} not materialized (guard {guard})")
        explicit = inverse = None
    return KroneckerEstimate(a_factor=a_factor, b_factor=b_factor, explicit=explicit,
                             explicit_inverse=inverse)


def star_factors(fit: GeminiFit) -> Tuple[SymMatrix, SymMatrix]:
    """A_* = m A / tr(A) and B_* = (tr(A) / m) B, so A_* (x) B_* = A (x) B"""
    a, b = gemini_factors(fit)
    scale = fit.m / float(np.trace(a))
    return SymMatrix(a * scale), SymMatrix(b / scale)


def normalize_star(fit: GeminiFit, edge_tol: float = 1e-8) -> Tuple[PrecisionEstimate, PrecisionEstimate]:
    """
    Inverses of the *-normalized factors with their edge sets

    Computed as diagonal rescalings of the solver precisions, so the zero
    pattern of a_prec and b_prec carries over exactly.
    """
    w1, w2 = fit.weights.w1, fit.weights.w2
    trace_a = float(np.dot(w1 * w1, np.diag(fit.a_rho.entries)))
    scale_a = fit.m / trace_a
    scale_b = trace_a / (fit.weights.frob2_mean * fit.m)
    return (PrecisionEstimate(precision_from_weights(fit.a_prec, w1, scale_a), edge_tol=edge_tol),
            PrecisionEstimate(precision_from_weights(fit.b_prec, w2, scale_b), edge_tol=edge_tol))


def precision_from_weights(rho_prec: SymMatrix, w: Sequence[float], scale: float = 1.0) -> np.ndarray:
    """(D rho D * scale)^{-1} = D^{-1} rho^{-1} D^{-1} / scale without a dense inverse"""
    d = 1.0 / np.asarray(w, dtype=np.float64)
    return np.outer(d, d) * as_array(rho_prec) / scale
