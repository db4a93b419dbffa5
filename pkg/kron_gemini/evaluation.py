#!/usr/bin/env python3
"""
Evaluation harness
Edge-recovery metrics, relative errors, covariance diagnostics, ROC sweeps over
penalty grids and cross-validated penalty choice.
"""

import os
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Dict, Any, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .clime import ClimeOptions
from .correlation import column_correlation, row_correlation, weights
from .errors import (ConfigError, DegenerateColumn, DegenerateRow, DimensionMismatch, FoldTooSmall,
                     InvalidEdge, KronGeminiError, NumericalError, ZeroTruth)
from .events import EventLogManager, NULL_EVENTS
from .flipflop import b1_from_rho, recorrelate, solve_recorrelated, tilde_a, tilde_b
from .gemini import SOLVERS, precision_from_weights, solve_side
from .glasso import GlassoOptions, glasso
from .matrices import (ArrayLike, DataSet, RngSpec, SymMatrix, as_array, cholesky_factor,
                       correlation_form, edges_from_matrix, inverse_pd, logdet_pd,
                       sample_matrix_normal)
from .models import GroundTruth
from .storage import read_json, write_json, write_rows_csv

logger = logging.getLogger(__name__)

METHODS = ("gemini", "nipff")
CRITERIA = ("fnr+fpr", "rel_err_op", "rel_err_frob")
METRIC_FIELDS = ("fpr", "fnr", "mcc", "rel_err_op", "rel_err_frob")
CSV_COLUMNS = ("target", "label", "trial", "penalty", "lambda_prev", "tp", "fp", "fn", "tn",
               "fpr", "fnr", "mcc", "rel_err_op", "rel_err_frob")


# ---------------------------------------------------------------------------
# edge recovery
# ---------------------------------------------------------------------------

def matthews(tp: int, fp: int, fn: int, tn: int) -> float:
    """(TP TN - FP FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)); 0 when a marginal is empty"""
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return float((tp * tn - fp * fn) / math.sqrt(denom))


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    p: int
    true_edge_count: int

    def __post_init__(self):
        pairs = self.p * (self.p - 1) // 2
        if self.tp + self.fn != self.true_edge_count or self.fp + self.tn != pairs - self.true_edge_count:
            raise ConfigError(f"Inconsistent confusion counts {self}")

    @property
    def fpr(self) -> float:
        negatives = self.fp + self.tn
        return self.fp / negatives if negatives else 0.0

    @property
    def fnr(self) -> float:
        positives = self.tp + self.fn
        return self.fn / positives if positives else 0.0

    @property
    def mcc(self) -> float:
        return matthews(self.tp, self.fp, self.fn, self.tn)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d.update(fpr=self.fpr, fnr=self.fnr, mcc=self.mcc)
        return d


def _edge_set(edges: Iterable[Sequence[int]], p: int, what: str) -> set:
    out = set()
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if i < 0 or j >= p or i >= j:
            raise InvalidEdge(f"{what} edge ({i}, {j}) is not a pair i < j over {p} nodes")
        out.add((i, j))
    return out


def confusion(est_edges: Iterable[Sequence[int]], true_edges: Iterable[Sequence[int]],
              p: int) -> ConfusionCounts:
    """Confusion counts of an estimated edge set against the true one (zero-based, i < j)"""
    est = _edge_set(est_edges, p, "estimated")
    truth = _edge_set(true_edges, p, "true")
    tp = len(est & truth)
    fp = len(est - truth)
    fn = len(truth - est)
    tn = p * (p - 1) // 2 - len(truth) - fp
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn, p=p, true_edge_count=len(truth))


def relative_error(est: ArrayLike, truth: ArrayLike, norm: str = "frobenius") -> float:
    """||est - truth|| / ||truth|| in the operator (spectral) or Frobenius norm"""
    e, t = as_array(est), as_array(truth)
    if e.shape != t.shape:
        raise DimensionMismatch(f"Estimate {e.shape} and truth {t.shape} differ in shape")
    if norm == "operator":
        order = 2
    elif norm == "frobenius":
        order = "fro"
    else:
        raise ConfigError(f"Unknown norm: {norm}")
    denom = float(np.linalg.norm(t, order))
    if denom == 0:
        raise ZeroTruth("Relative error against a zero matrix")
    return float(np.linalg.norm(e - t, order) / denom)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostics:
    total_correlation: float
    frob_over_trace: float
    l1_off: float
    l1_full: float
    stable_rank: float
    condition_number: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def diagnostics(S: ArrayLike) -> Diagnostics:
    """
    Summary statistics of a covariance

    total_correlation is sum_{i<j} rho_ij^2 / C(p, 2) over the correlation form,
    l1_off and l1_full are the entrywise l1 norms of the inverse correlation.
    """
    s = SymMatrix(as_array(S)).entries
    cholesky_factor(s, "covariance")
    p = s.shape[0]
    r = correlation_form(s)

    iu = np.triu_indices(p, k=1)
    total = float(np.sum(r[iu] ** 2) / (p * (p - 1) / 2)) if p > 1 else 0.0
    frob = float(linalg.norm(s, "fro"))
    r_inv = inverse_pd(r, "correlation")
    l1_full = float(np.abs(r_inv).sum())
    l1_off = l1_full - float(np.abs(np.diag(r_inv)).sum())
    eig = linalg.eigvalsh(s)
    return Diagnostics(total_correlation=total, frob_over_trace=frob / float(np.trace(s)),
                       l1_off=l1_off, l1_full=l1_full,
                       stable_rank=frob ** 2 / float(eig[-1]) ** 2,
                       condition_number=float(eig[-1] / eig[0]))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StarTruth:
    """Truth precisions in the *-normalized convention: tr(A_*) = m"""

    omega: np.ndarray
    pi: np.ndarray
    omega_edges: Tuple[Tuple[int, int], ...]
    pi_edges: Tuple[Tuple[int, int], ...]


def star_truth(truth_a: GroundTruth, truth_b: GroundTruth) -> StarTruth:
    """Omega_* = (tr(A) / m) Omega and Pi_* = (m / tr(A)) Pi"""
    m = truth_a.dim
    trace_a = float(np.trace(truth_a.covariance.entries))
    return StarTruth(omega=truth_a.precision.entries * (trace_a / m),
                     pi=truth_b.precision.entries * (m / trace_a),
                     omega_edges=tuple(truth_a.edge_set), pi_edges=tuple(truth_b.edge_set))


def score_estimate(est_prec: ArrayLike, truth_prec: np.ndarray, true_edges, edge_tol: float = 1e-8) -> Dict[str, Any]:
    """Confusion counts, rates and relative errors of one precision estimate"""
    est = as_array(est_prec)
    counts = confusion(edges_from_matrix(est, edge_tol), true_edges, truth_prec.shape[0])
    row = counts.to_dict()
    del row["p"], row["true_edge_count"]
    row["rel_err_op"] = relative_error(est, truth_prec, "operator")
    row["rel_err_frob"] = relative_error(est, truth_prec, "frobenius")
    return row


def criterion_value(row: Dict[str, Any], criterion: str) -> float:
    if criterion == "fnr+fpr":
        return row["fnr"] + row["fpr"]
    if criterion in ("rel_err_op", "rel_err_frob"):
        return row[criterion]
    raise ConfigError(f"Unknown selection criterion: {criterion}")


def select_index(rows: Sequence[Dict[str, Any]], criterion: str) -> int:
    """argmin over an ascending grid; ties go to the smaller penalty"""
    best, best_val = 0, float("inf")
    for k, row in enumerate(rows):
        val = criterion_value(row, criterion)
        if val < best_val:
            best, best_val = k, val
    return best


@dataclass
class EvalReport:
    """One ROC curve: per-penalty averages over the trials that completed"""

    label: str
    target: str
    penalties: Tuple[float, ...]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    trial_rows: List[Dict[str, Any]] = field(default_factory=list)
    trials_used: int = 0
    failed_trials: List[Dict[str, Any]] = field(default_factory=list)

    def best(self, criterion: str) -> Dict[str, Any]:
        if not self.rows:
            raise NumericalError(f"Report {self.target}/{self.label} has no completed trials")
        return self.rows[select_index(self.rows, criterion)]

    def to_dict(self) -> Dict[str, Any]:
        return {"label": self.label, "target": self.target, "penalties": list(self.penalties),
                "rows": self.rows, "trial_rows": self.trial_rows, "trials_used": self.trials_used,
                "failed_trials": self.failed_trials}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "EvalReport":
        return cls(label=d["label"], target=d["target"], penalties=tuple(d["penalties"]),
                   rows=list(d["rows"]), trial_rows=list(d["trial_rows"]),
                   trials_used=int(d["trials_used"]), failed_trials=list(d["failed_trials"]))


ReportMap = Dict[str, EvalReport]


def reports_to_document(omega: ReportMap, pi: ReportMap) -> Dict[str, Any]:
    return {"omega": {k: r.to_dict() for k, r in omega.items()},
            "pi": {k: r.to_dict() for k, r in pi.items()}}


def reports_from_document(doc: Dict[str, Any]) -> Tuple[ReportMap, ReportMap]:
    return ({k: EvalReport.from_dict(v) for k, v in doc["omega"].items()},
            {k: EvalReport.from_dict(v) for k, v in doc["pi"].items()})


def write_reports(out_dir: str, omega: ReportMap, pi: ReportMap, stem: str = "roc") -> Tuple[str, str]:
    """<stem>.json with the full reports and <stem>.csv with one row per trial x penalty"""
    json_path = write_json(os.path.join(out_dir, f"{stem}.json"), reports_to_document(omega, pi))
    rows = [row for reports in (omega, pi) for r in reports.values() for row in r.trial_rows]
    csv_path = write_rows_csv(os.path.join(out_dir, f"{stem}.csv"), rows, CSV_COLUMNS)
    return json_path, csv_path


def read_reports(path: str) -> Tuple[ReportMap, ReportMap]:
    return reports_from_document(read_json(path))


# ---------------------------------------------------------------------------
# ROC sweeps
# ---------------------------------------------------------------------------

def _check_grid(grid: Sequence[float], name: str) -> Tuple[float, ...]:
    g = tuple(float(x) for x in grid)
    if not g or any(b <= a for a, b in zip(g, g[1:])) or g[0] < 0:
        raise ConfigError(f"{name} must be a non-empty, strictly ascending list of nonnegative penalties")
    return g


def _gemini_paths(data: DataSet, star: StarTruth, grid_a, grid_b, solver: str,
                  glasso_opts: GlassoOptions, clime_opts: ClimeOptions, events: EventLogManager):
    """
    Omega and Pi regularization paths of the baseline estimator

    The Pi point at penalty nu is *-normalized with tr(A) from the A-side fit at
    the same penalty, reusing the Omega path fit when nu lies on grid_a. For a
    unit-diagonal rho(A) this is frob2_mean; CLIME inverses are not unit-diagonal.
    """
    w = weights(data)
    m = data.m
    gamma_a = column_correlation(data)
    gamma_b = row_correlation(data)
    traces: Dict[float, float] = {}

    def a_trace(rho: SymMatrix) -> float:
        return float(np.dot(w.w1 * w.w1, np.diag(rho.entries)))

    omega_rows = []
    for lam in grid_a:
        rho, prec, _ = solve_side(gamma_a, lam, solver, glasso_opts, clime_opts, events)
        trace_a = traces[lam] = a_trace(rho)
        est = precision_from_weights(prec, w.w1, m / trace_a)
        omega_rows.append({"penalty": lam, **score_estimate(est, star.omega, star.omega_edges,
                                                           glasso_opts.edge_tol)})

    pi_rows, b_rhos = [], []
    for nu in grid_b:
        if nu not in traces:
            traces[nu] = a_trace(solve_side(gamma_a, nu, solver, glasso_opts, clime_opts, events)[0])
        rho, prec, _ = solve_side(gamma_b, nu, solver, glasso_opts, clime_opts, events)
        est = precision_from_weights(prec, w.w2, traces[nu] / (w.frob2_mean * m))
        pi_rows.append({"penalty": nu, **score_estimate(est, star.pi, star.pi_edges,
                                                        glasso_opts.edge_tol)})
        b_rhos.append(rho)
    return omega_rows, pi_rows, b_rhos, w


def _gemini_trial(data, star, grid_a, grid_b, solver, glasso_opts, clime_opts, events):
    omega_rows, pi_rows, _, _ = _gemini_paths(data, star, grid_a, grid_b, solver, glasso_opts,
                                              clime_opts, events)
    return {"omega": {"gemini": omega_rows}, "pi": {"gemini": pi_rows}}


def _nipff_trial(data, star, grid_a, grid_b, glasso_opts, events):
    """
    Staged flip-flop sweep

    B1 candidates come from the baseline Pi path at the penalties minimizing each
    criterion; each feeds a step-2 path over grid_a. The best (B1, phi) per
    criterion then feeds a step-3 path over grid_b.
    """
    omega_g, pi_g, b_rhos, w = _gemini_paths(data, star, grid_a, grid_b, "glasso", glasso_opts,
                                             ClimeOptions(), events)
    omega = {"gemini": omega_g}
    pi = {"gemini": pi_g}

    nu_idx = [select_index(pi_g, c) for c in CRITERIA]
    step2 = {}
    for i, k in enumerate(nu_idx, start=1):
        if k not in step2:
            b1 = b1_from_rho(b_rhos[k], w.w2, data.m)
            gamma, w_tilde = recorrelate(tilde_a(data, b1))
            rows, stars = [], []
            for phi in grid_a:
                a_star, a_prec, _ = solve_recorrelated(gamma, w_tilde, phi, glasso_opts, events, "step 2 A_rho")
                rows.append({"penalty": phi, "lambda_prev": grid_b[k],
                             **score_estimate(a_prec, star.omega, star.omega_edges, glasso_opts.edge_tol)})
                stars.append(a_star)
            step2[k] = (rows, stars)
        omega[f"ff:{i}"] = step2[k][0]

    step3 = {}
    for j, crit in enumerate(CRITERIA, start=1):
        best = None
        for k_phi in range(len(grid_a)):
            for i in range(1, len(CRITERIA) + 1):
                val = criterion_value(omega[f"ff:{i}"][k_phi], crit)
                if best is None or val < best[0]:
                    best = (val, i, k_phi)
        _, i, k_phi = best
        key = (nu_idx[i - 1], k_phi)
        if key not in step3:
            a1 = step2[key[0]][1][k_phi]
            gamma, w_tilde = recorrelate(tilde_b(data, a1))
            rows = []
            for upsilon in grid_b:
                _, b_prec, _ = solve_recorrelated(gamma, w_tilde, upsilon, glasso_opts, events, "step 3 B_rho")
                rows.append({"penalty": upsilon, "lambda_prev": grid_a[k_phi],
                             **score_estimate(b_prec, star.pi, star.pi_edges, glasso_opts.edge_tol)})
            step3[key] = rows
        pi[f"ff:{j}"] = step3[key]
    return {"omega": omega, "pi": pi}


def _labels(method: str) -> List[str]:
    if method == "gemini":
        return ["gemini"]
    return ["gemini"] + [f"ff:{i}" for i in range(1, len(CRITERIA) + 1)]


def _reduce(outcomes, grid_a, grid_b, method: str) -> Tuple[ReportMap, ReportMap]:
    failed = [{"trial": t, "cause": cause} for t, _, cause in outcomes if cause is not None]
    done = [(t, res) for t, res, cause in outcomes if cause is None]
    maps: Dict[str, ReportMap] = {"omega": {}, "pi": {}}

    for target, grid in (("omega", grid_a), ("pi", grid_b)):
        for label in _labels(method):
            report = EvalReport(label=label, target=target, penalties=grid, trials_used=len(done),
                                failed_trials=list(failed))
            for t, res in done:
                for row in res[target][label]:
                    report.trial_rows.append({"target": target, "label": label, "trial": t, **row})
            if done:
                for k, lam in enumerate(grid):
                    avg = {"penalty": lam, "trials": len(done)}
                    for name in METRIC_FIELDS:
                        # ascending trial order keeps the sum bit-stable
                        avg[name] = math.fsum(res[target][label][k][name] for _, res in done) / len(done)
                    report.rows.append(avg)
            maps[target][label] = report
    return maps["omega"], maps["pi"]


def roc_sweep(truth_a: GroundTruth, truth_b: GroundTruth, n: int, grid_a: Sequence[float],
              grid_b: Sequence[float], trials: int, method: str = "gemini",
              rng: Optional[RngSpec] = None, solver: str = "glasso",
              glasso_opts: Optional[GlassoOptions] = None, clime_opts: Optional[ClimeOptions] = None,
              threads: int = 1, events: EventLogManager = NULL_EVENTS) -> Tuple[ReportMap, ReportMap]:
    """
    Monte-Carlo ROC sweep over penalty grids

    grid_a holds the penalties of the A-side program (Omega path) and grid_b those
    of the B-side program (Pi path). Each trial samples fresh data from substream
    (trial, replicate). Trials that raise are recorded with their cause and left
    out of the averages.

    Returns:
        (omega_reports, pi_reports): label -> EvalReport; 'gemini' always, plus
        'ff:1'..'ff:3' for method='nipff'
    """
    if method not in METHODS:
        raise ConfigError(f"Unknown method: {method}")
    if solver not in SOLVERS:
        raise ConfigError(f"Unknown solver: {solver}")
    if method == "nipff" and solver != "glasso":
        raise ConfigError("The flip-flop sweep runs on glasso only")
    if trials < 1 or n < 1:
        raise ConfigError(f"Need trials >= 1 and n >= 1 (got trials={trials}, n={n})")
    if method == "nipff" and truth_b.dim > truth_a.dim:
        raise ConfigError(f"The staged flip-flop sweep needs f <= m (got f={truth_b.dim}, m={truth_a.dim})")
    grid_a = _check_grid(grid_a, "grid_a")
    grid_b = _check_grid(grid_b, "grid_b")
    rng = rng or RngSpec(0)
    glasso_opts = glasso_opts or GlassoOptions()
    clime_opts = clime_opts or ClimeOptions()
    star = star_truth(truth_a, truth_b)
    logger.info(f"ROC sweep: method={method}, solver={solver}, m={truth_a.dim}, f={truth_b.dim}, "
                f"n={n}, trials={trials}, |grid_a|={len(grid_a)}, |grid_b|={len(grid_b)}")

    def run(trial: int):
        try:
            data = sample_matrix_normal(truth_a.covariance, truth_b.covariance, n, rng, trial=trial)
            if method == "gemini":
                result = _gemini_trial(data, star, grid_a, grid_b, solver, glasso_opts, clime_opts, events)
            else:
                result = _nipff_trial(data, star, grid_a, grid_b, glasso_opts, events)
        except KronGeminiError as e:
            cause = f"{type(e).__name__}: {e}"
            logger.warning(f"ROC trial {trial} failed: {cause}")
            events.log_trial_event(trial, False, {"method": method, "cause": cause})
            return trial, None, cause
        events.log_trial_event(trial, True, {"method": method})
        return trial, result, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, range(trials)))
    else:
        outcomes = [run(t) for t in range(trials)]

    n_failed = sum(1 for _, _, cause in outcomes if cause is not None)
    if n_failed:
        logger.warning(f"ROC sweep: {n_failed} of {trials} trials failed and were excluded")
    return _reduce(outcomes, grid_a, grid_b, method)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CVResult:
    chosen: float
    scores: Tuple[float, ...]
    grid: Tuple[float, ...]
    side: str
    folds: int
    trials: int
    skipped_folds: int = 0

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["scores"] = list(self.scores)
        d["grid"] = list(self.grid)
        return d


def fold_partition(count: int, folds: int, gen: np.random.Generator) -> List[np.ndarray]:
    """Uniform random permutation split into near-equal contiguous chunks"""
    return [np.sort(chunk) for chunk in np.array_split(gen.permutation(count), folds)]


def cv_score(theta: ArrayLike, gamma_v: ArrayLike) -> float:
    """tr(Theta Gamma_V) - log|Theta|"""
    t = as_array(theta)
    return float(np.sum(t * as_array(gamma_v)) - logdet_pd(t, "theta"))


def cross_validate(data: DataSet, grid: Sequence[float], folds: int = 10, trials: int = 10,
                   side: str = "A", rng: Optional[RngSpec] = None,
                   glasso_opts: Optional[GlassoOptions] = None,
                   events: EventLogManager = NULL_EVENTS) -> CVResult:
    """
    K-fold cross-validated glasso penalty

    Side A holds out ROWS of every replicate and scores the column correlation
    (the A-side program); side B holds out COLUMNS and scores the row correlation.
    Each trial draws a fresh partition from the fold substream.
    """
    if side not in ("A", "B"):
        raise ConfigError(f"Unknown side: {side}")
    grid = _check_grid(grid, "grid")
    if folds < 2 or trials < 1:
        raise ConfigError(f"Need folds >= 2 and trials >= 1 (got folds={folds}, trials={trials})")
    count = data.f if side == "A" else data.m
    if count < folds:
        raise FoldTooSmall(f"Side {side} has {count} {'rows' if side == 'A' else 'columns'} "
                           f"for {folds} folds")
    rng = rng or RngSpec(0)
    opts = glasso_opts or GlassoOptions()
    take = data.take_rows if side == "A" else data.take_columns
    correlate = column_correlation if side == "A" else row_correlation

    totals = np.zeros(len(grid))
    used = skipped = 0
    for trial in range(trials):
        parts = fold_partition(count, folds, rng.fold_stream(trial))
        for k, val_idx in enumerate(parts):
            train_idx = np.sort(np.concatenate([p for i, p in enumerate(parts) if i != k]))
            try:
                gamma_v = correlate(take(val_idx))
                gamma_t = correlate(take(train_idx))
            except (DegenerateColumn, DegenerateRow) as e:
                logger.warning(f"CV side {side}, trial {trial}, fold {k + 1} skipped: {e}")
                skipped += 1
                continue
            for g, lam in enumerate(grid):
                sol = glasso(gamma_t, lam, opts, events=events)
                totals[g] += cv_score(sol.theta, gamma_v)
            used += 1

    if used == 0:
        raise NumericalError(f"Every CV fold on side {side} was degenerate")
    scores = totals / used
    chosen = grid[int(np.argmin(scores))]
    logger.info(f"CV side {side}: chose {chosen:g} over {used} folds ({skipped} skipped)")
    return CVResult(chosen=chosen, scores=tuple(float(s) for s in scores), grid=grid, side=side,
                    folds=folds, trials=trials, skipped_folds=skipped)
