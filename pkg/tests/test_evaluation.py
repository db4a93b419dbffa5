#!/usr/bin/env python3
"""
Tests for edge-recovery metrics, diagnostics, ROC sweeps and cross-validation
"""

import unittest
import os
import sys
import tempfile

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from kron_gemini import evaluation
from kron_gemini.errors import (ConfigError, DimensionMismatch, FoldTooSmall, InvalidEdge, NotPD,
                                NumericalError, ZeroTruth)
from kron_gemini.evaluation import (ConfusionCounts, confusion, cross_validate, cv_score,
                                    diagnostics, fold_partition, matthews, read_reports,
                                    relative_error, roc_sweep, score_estimate, select_index,
                                    star_truth, write_reports)
from kron_gemini.clime import ClimeOptions
from kron_gemini.events import NULL_EVENTS
from kron_gemini.gemini import PenaltyConfig, gemini_estimate, normalize_star
from kron_gemini.glasso import GlassoOptions
from kron_gemini.matrices import DataSet, RngSpec, sample_matrix_normal
from kron_gemini.models import GroundTruth, ar1, identity, random_concentration
from kron_gemini.storage import read_rows_csv


class TestConfusion(unittest.TestCase):
    """Confusion counts and MCC"""

    def test_worked_example(self):
        counts = confusion([(0, 1), (0, 2), (1, 2)], [(0, 1), (0, 2), (0, 3)], p=4)
        self.assertEqual((counts.tp, counts.fp, counts.fn, counts.tn), (2, 1, 1, 2))
        self.assertAlmostEqual(counts.mcc, 1.0 / 3.0, places=12)
        self.assertAlmostEqual(counts.fpr, 1.0 / 3.0, places=12)
        self.assertAlmostEqual(counts.fnr, 1.0 / 3.0, places=12)

    def test_empty_estimate(self):
        counts = confusion([], [(0, 1)], p=3)
        self.assertEqual(counts.fnr, 1.0)
        self.assertEqual(counts.fpr, 0.0)
        self.assertEqual(counts.mcc, 0.0)

    def test_perfect_recovery(self):
        counts = confusion([(1, 2)], [(1, 2)], p=3)
        self.assertEqual(counts.mcc, 1.0)

    def test_invalid_edges(self):
        with self.assertRaises(InvalidEdge):
            confusion([(2, 1)], [], p=3)
        with self.assertRaises(InvalidEdge):
            confusion([], [(0, 5)], p=3)

    def test_counts_checked(self):
        with self.assertRaises(ConfigError):
            ConfusionCounts(tp=1, fp=0, fn=0, tn=0, p=3, true_edge_count=1)

    def test_matthews_formula(self):
        self.assertAlmostEqual(matthews(5, 1, 2, 10), (50 - 2) / np.sqrt(6 * 7 * 11 * 12), places=12)


class TestRelativeError(unittest.TestCase):
    """Operator and Frobenius relative errors"""

    def test_examples(self):
        est = np.diag([1.0, 2.0])
        self.assertAlmostEqual(relative_error(est, np.eye(2), "frobenius"), 1.0 / np.sqrt(2.0), places=12)
        self.assertAlmostEqual(relative_error(est, np.eye(2), "operator"), 1.0, places=12)
        self.assertEqual(relative_error(np.eye(2), np.eye(2)), 0.0)

    def test_errors(self):
        with self.assertRaises(DimensionMismatch):
            relative_error(np.eye(2), np.eye(3))
        with self.assertRaises(ZeroTruth):
            relative_error(np.eye(2), np.zeros((2, 2)))
        with self.assertRaises(ConfigError):
            relative_error(np.eye(2), np.eye(2), "nuclear")


class TestDiagnostics(unittest.TestCase):
    """Covariance diagnostics"""

    def test_ar1_moderate(self):
        diag = diagnostics(ar1(400, 0.5).covariance)
        self.assertAlmostEqual(diag.frob_over_trace, 0.065, delta=0.001)
        self.assertAlmostEqual(diag.l1_off, 532.0, delta=1e-6)
        self.assertAlmostEqual(diag.l1_full, 1198.0, delta=1e-6)

    def test_ar1_strong(self):
        diag = diagnostics(ar1(400, 0.7).covariance)
        self.assertAlmostEqual(diag.frob_over_trace, 0.085, delta=0.001)
        self.assertAlmostEqual(diag.l1_off, 798 * 0.7 / 0.51, delta=1e-6)
        self.assertAlmostEqual(diag.l1_full, 2262.0, delta=1.0)

    def test_identity(self):
        diag = diagnostics(np.eye(4))
        self.assertEqual(diag.total_correlation, 0.0)
        self.assertAlmostEqual(diag.frob_over_trace, 0.5, places=12)
        self.assertAlmostEqual(diag.condition_number, 1.0, places=12)
        self.assertAlmostEqual(diag.stable_rank, 4.0, places=12)
        self.assertEqual(diag.l1_off, 0.0)

    def test_total_correlation(self):
        s = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]])
        self.assertAlmostEqual(diagnostics(s).total_correlation, 0.25 / 3.0, places=12)

    def test_not_pd(self):
        with self.assertRaises(NotPD):
            diagnostics(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestScoring(unittest.TestCase):
    """Truth normalization and per-estimate scoring"""

    def test_star_truth_scaling(self):
        a = identity(3)
        a2 = GroundTruth(covariance=a.covariance.scaled(2.0), precision=a.precision.scaled(0.5),
                         edge_set=(), model_tag="identity")
        star = star_truth(a2, identity(2))
        np.testing.assert_allclose(star.omega, np.eye(3))
        np.testing.assert_allclose(star.pi, 0.5 * np.eye(2))

    def test_exact_estimate(self):
        truth = ar1(5, 0.5)
        row = score_estimate(truth.precision, truth.precision.entries, truth.edge_set)
        self.assertEqual(row["fn"], 0)
        self.assertEqual(row["fp"], 0)
        self.assertEqual(row["rel_err_frob"], 0.0)
        self.assertEqual(row["mcc"], 1.0)

    def test_select_index_ties_go_left(self):
        rows = [{"fnr": 0.2, "fpr": 0.1}, {"fnr": 0.1, "fpr": 0.2}, {"fnr": 0.5, "fpr": 0.0}]
        self.assertEqual(select_index(rows, "fnr+fpr"), 0)
        with self.assertRaises(ConfigError):
            select_index(rows, "auc")


class TestRocSweep(unittest.TestCase):
    """Monte-Carlo ROC harness"""

    def setUp(self):
        self.truth_a = ar1(8, 0.5)
        self.truth_b = random_concentration(6, 4, 0.1, 0.3, RngSpec(2).model_stream(1))
        self.grid = (0.05, 0.2, 1.0)

    def sweep(self, **kwargs):
        return roc_sweep(self.truth_a, self.truth_b, 2, self.grid, self.grid, 2, rng=RngSpec(13), **kwargs)

    def test_report_structure(self):
        omega, pi = self.sweep()
        self.assertEqual(list(omega), ["gemini"])
        report = omega["gemini"]
        self.assertEqual(report.trials_used, 2)
        self.assertEqual(len(report.rows), 3)
        self.assertEqual(len(report.trial_rows), 6)
        self.assertEqual(report.rows[0]["penalty"], 0.05)

    def test_full_shrinkage_misses_every_edge(self):
        omega, pi = self.sweep()
        self.assertEqual(omega["gemini"].rows[-1]["fnr"], 1.0)
        self.assertEqual(omega["gemini"].rows[-1]["fpr"], 0.0)
        self.assertEqual(pi["gemini"].rows[-1]["fnr"], 1.0)

    def test_deterministic_across_threads(self):
        o1, p1 = self.sweep(threads=1)
        o4, p4 = self.sweep(threads=4)
        self.assertEqual(o1["gemini"].to_dict(), o4["gemini"].to_dict())
        self.assertEqual(p1["gemini"].to_dict(), p4["gemini"].to_dict())

    def test_clime_solver(self):
        omega, _ = self.sweep(solver="clime")
        self.assertEqual(omega["gemini"].trials_used, 2)

    def test_nipff_curves(self):
        omega, pi = self.sweep(method="nipff")
        self.assertEqual(sorted(omega), ["ff:1", "ff:2", "ff:3", "gemini"])
        self.assertEqual(sorted(pi), ["ff:1", "ff:2", "ff:3", "gemini"])
        row = omega["ff:1"].trial_rows[0]
        self.assertIn(row["lambda_prev"], self.grid)
        self.assertEqual(len(pi["ff:2"].rows), len(self.grid))

    def test_argument_errors(self):
        with self.assertRaises(ConfigError):
            self.sweep(method="oracle")
        with self.assertRaises(ConfigError):
            self.sweep(method="nipff", solver="clime")
        with self.assertRaises(ConfigError):
            roc_sweep(self.truth_a, self.truth_b, 1, (0.2, 0.1), self.grid, 1)
        with self.assertRaises(ConfigError):
            roc_sweep(self.truth_b, self.truth_a, 1, self.grid, self.grid, 1, method="nipff")

    def test_reports_round_trip(self):
        omega, pi = self.sweep()
        with tempfile.TemporaryDirectory() as d:
            json_path, csv_path = write_reports(d, omega, pi)
            omega2, pi2 = read_reports(json_path)
            rows = read_rows_csv(csv_path)
        self.assertEqual(omega2["gemini"].to_dict(), omega["gemini"].to_dict())
        self.assertEqual(len(rows), 12)
        self.assertEqual(rows[0]["target"], "omega")
        self.assertEqual(rows[0]["lambda_prev"], "")


class TestPathNormalization(unittest.TestCase):
    """Path estimates agree with the *-normalized fit at the same penalty"""

    def setUp(self):
        self.truth_a = ar1(8, 0.5)
        self.truth_b = random_concentration(6, 4, 0.1, 0.3, RngSpec(2).model_stream(1))
        self.star = star_truth(self.truth_a, self.truth_b)
        self.data = sample_matrix_normal(self.truth_a.covariance, self.truth_b.covariance, 2, RngSpec(21))

    def check(self, solver: str):
        grid_a, grid_b = (0.2, 0.4), (0.3, 0.4)
        omega_rows, pi_rows, _, _ = evaluation._gemini_paths(
            self.data, self.star, grid_a, grid_b, solver, GlassoOptions(), ClimeOptions(), NULL_EVENTS)
        for rows, grid, target in ((omega_rows, grid_a, "omega"), (pi_rows, grid_b, "pi")):
            for row, lam in zip(rows, grid):
                fit = gemini_estimate(self.data, PenaltyConfig(mode="explicit", lambda_a=lam, lambda_b=lam),
                                      solver=solver)
                a_prec, b_prec = normalize_star(fit)
                if target == "omega":
                    expected = score_estimate(a_prec, self.star.omega, self.star.omega_edges)
                else:
                    expected = score_estimate(b_prec, self.star.pi, self.star.pi_edges)
                with self.subTest(target=target, penalty=lam):
                    self.assertAlmostEqual(row["rel_err_frob"], expected["rel_err_frob"], places=9)
                    self.assertAlmostEqual(row["rel_err_op"], expected["rel_err_op"], places=9)
                    self.assertEqual((row["tp"], row["fp"]), (expected["tp"], expected["fp"]))
        return fit

    def test_clime_pi_uses_actual_trace(self):
        fit = self.check("clime")
        # CLIME inverses are not unit-diagonal, so tr(A_rho) differs from m
        self.assertGreater(float(np.max(np.abs(np.diag(fit.a_rho.entries) - 1.0))), 1e-6)

    def test_glasso_paths(self):
        self.check("glasso")


def test_failed_trials_excluded(mocker):
    """A trial that raises is recorded with its cause and left out of the averages"""
    real = evaluation.sample_matrix_normal

    def flaky(a, b, n, rng, trial=0, threads=1):
        if trial == 0:
            raise NotPD("forced failure")
        return real(a, b, n, rng, trial=trial, threads=threads)

    mocker.patch("kron_gemini.evaluation.sample_matrix_normal", side_effect=flaky)
    omega, _ = roc_sweep(ar1(6, 0.5), identity(5), 2, (0.1, 0.5), (0.1, 0.5), 3, rng=RngSpec(1))
    report = omega["gemini"]
    assert report.trials_used == 2
    assert report.failed_trials == [{"trial": 0, "cause": "NotPD: forced failure"}]
    assert {row["trial"] for row in report.trial_rows} == {1, 2}


def test_all_trials_failed(mocker):
    mocker.patch("kron_gemini.evaluation.sample_matrix_normal", side_effect=NotPD("forced failure"))
    omega, _ = roc_sweep(ar1(6, 0.5), identity(5), 1, (0.1,), (0.1,), 2)
    assert omega["gemini"].rows == []
    with pytest.raises(NumericalError):
        omega["gemini"].best("fnr+fpr")


class TestCrossValidation(unittest.TestCase):
    """K-fold penalty selection"""

    def setUp(self):
        gen = np.random.default_rng(21)
        self.data = DataSet(gen.standard_normal((2, 10, 6)))

    def test_fold_partition(self):
        parts = fold_partition(10, 3, np.random.default_rng(0))
        self.assertEqual(sorted(len(p) for p in parts), [3, 3, 4])
        np.testing.assert_array_equal(np.sort(np.concatenate(parts)), np.arange(10))

    def test_cv_score_at_identity(self):
        gamma = np.array([[1.0, 0.3], [0.3, 1.0]])
        self.assertAlmostEqual(cv_score(np.eye(2), gamma), 2.0, places=12)

    def test_single_value_grid(self):
        res = cross_validate(self.data, (0.3,), folds=5, trials=2, side="A")
        self.assertEqual(res.chosen, 0.3)
        self.assertEqual(len(res.scores), 1)

    def test_full_penalty_scores_dimension(self):
        res_a = cross_validate(self.data, (5.0,), folds=5, trials=1, side="A")
        res_b = cross_validate(self.data, (5.0,), folds=3, trials=1, side="B")
        self.assertAlmostEqual(res_a.scores[0], 6.0, places=10)
        self.assertAlmostEqual(res_b.scores[0], 10.0, places=10)

    def test_ties_choose_smaller_penalty(self):
        res = cross_validate(self.data, (2.0, 5.0), folds=5, trials=1, side="A")
        self.assertEqual(res.chosen, 2.0)

    def test_deterministic(self):
        r1 = cross_validate(self.data, (0.05, 0.2, 0.5), folds=5, trials=2, side="B", rng=RngSpec(4))
        r2 = cross_validate(self.data, (0.05, 0.2, 0.5), folds=5, trials=2, side="B", rng=RngSpec(4))
        self.assertEqual(r1.to_dict(), r2.to_dict())

    def test_fold_too_small(self):
        with self.assertRaises(FoldTooSmall):
            cross_validate(self.data, (0.1,), folds=11, side="A")

    def test_degenerate_fold_skipped(self):
        x = np.random.default_rng(5).standard_normal((4, 3))
        x[3, 0] = 0.0
        res = cross_validate(DataSet(x), (0.2,), folds=4, trials=2, side="A")
        self.assertEqual(res.skipped_folds, 2)

    def test_bad_side(self):
        with self.assertRaises(ConfigError):
            cross_validate(self.data, (0.1,), side="C")


def best_frob_per_trial(report) -> dict:
    best = {}
    for row in report.trial_rows:
        best[row["trial"]] = min(best.get(row["trial"], np.inf), row["rel_err_frob"])
    return best


@pytest.mark.slow
def test_montecarlo_recovery_curves():
    """AR(1) columns and sparse random rows at m = 400, f = 80 over 20 trials"""
    rng = RngSpec(2024)
    truth_a = ar1(400, 0.5)
    truth_b = random_concentration(80, 80, 0.1, 0.3, rng.model_stream(1))
    grid = tuple(float(v) for v in np.round(np.arange(0.02, 0.7201, 0.05), 2))
    assert (grid[0], grid[-1], len(grid)) == (0.02, 0.72, 15)

    single, _ = roc_sweep(truth_a, truth_b, 1, grid, grid, 20, rng=rng, threads=4)
    report = single["gemini"]
    assert report.trials_used == 20
    rates = [row["fnr"] + row["fpr"] for row in report.rows]
    mcc = [row["mcc"] for row in report.rows]
    frob = [row["rel_err_frob"] for row in report.rows]
    assert 0 < int(np.argmin(rates)) < len(grid) - 1
    k = int(np.argmax(mcc))
    assert 0 < k < len(grid) - 1
    assert mcc[k] >= 0.5
    assert min(frob) <= frob[-1]

    triple, _ = roc_sweep(truth_a, truth_b, 3, grid, grid, 20, rng=rng, threads=4)
    one, three = best_frob_per_trial(report), best_frob_per_trial(triple["gemini"])
    improved = sum(1 for t in range(20) if three[t] < one[t])
    assert improved >= 16


if __name__ == '__main__':
    unittest.main()
