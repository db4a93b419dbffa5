#!/usr/bin/env python3
"""
Tests for pooled sample correlations and weights
"""

import unittest
import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from kron_gemini.correlation import CorrelationMatrix, column_correlation, row_correlation, weights
from kron_gemini.errors import ConfigError, DegenerateColumn, DegenerateRow
from kron_gemini.matrices import DataSet, RngSpec, sample_matrix_normal
from kron_gemini.models import ar1, random_concentration


class TestCorrelationMatrix(unittest.TestCase):
    """Unit-diagonal contract"""

    def test_round_off_diagonal_snapped_to_one(self):
        g = CorrelationMatrix(np.array([[1.0 - 1e-12, 0.2], [0.2, 1.0 + 3e-15]]))
        np.testing.assert_array_equal(np.diag(g.entries), [1.0, 1.0])

    def test_non_unit_diagonal_rejected(self):
        for diag in ((0.9999999, 1.0), (1.0, 2.0), (0.5, 0.5), (np.nan, 1.0)):
            with self.subTest(diag=diag):
                with self.assertRaises(ConfigError):
                    CorrelationMatrix(np.array([[diag[0], 0.2], [0.2, diag[1]]]))

    def test_covariance_is_not_a_correlation(self):
        with self.assertRaises(ConfigError):
            CorrelationMatrix(np.array([[4.0, 2.0], [2.0, 9.0]]))

    def test_entries_above_one_rejected(self):
        with self.assertRaises(ConfigError):
            CorrelationMatrix(np.array([[1.0, 1.5], [1.5, 1.0]]))


class TestTwoByTwo(unittest.TestCase):
    """X = [[1, 2], [3, 4]]"""

    def setUp(self):
        self.data = DataSet(np.array([[1.0, 2.0], [3.0, 4.0]]))

    def test_column_correlation(self):
        g = column_correlation(self.data).entries
        expected = 14.0 / (np.sqrt(10.0) * np.sqrt(20.0))
        self.assertAlmostEqual(g[0, 1], expected, places=12)
        self.assertAlmostEqual(g[0, 1], 0.98995, places=5)
        self.assertEqual(g[0, 0], 1.0)

    def test_row_correlation(self):
        g = row_correlation(self.data).entries
        self.assertAlmostEqual(g[0, 1], 11.0 / (np.sqrt(5.0) * 5.0), places=12)

    def test_weights(self):
        w = weights(self.data)
        np.testing.assert_allclose(w.w1, [np.sqrt(10.0), np.sqrt(20.0)])
        np.testing.assert_allclose(w.w2, [np.sqrt(5.0), 5.0])
        self.assertAlmostEqual(w.frob2_mean, 30.0, places=12)


class TestPooling(unittest.TestCase):
    """Pooling over replicates"""

    def test_identity_data(self):
        data = DataSet(np.eye(3))
        np.testing.assert_array_equal(column_correlation(data).entries, np.eye(3))
        np.testing.assert_array_equal(row_correlation(data).entries, np.eye(3))

    def test_duplicated_replicate_matches_single(self):
        x = np.array([[1.0, 2.0, -1.0], [0.5, 4.0, 2.0]])
        one = DataSet(x)
        two = DataSet.from_list([x, x])
        np.testing.assert_allclose(column_correlation(two).entries, column_correlation(one).entries,
                                   atol=1e-14)
        w1, w2 = weights(one), weights(two)
        np.testing.assert_allclose(w2.w1, w1.w1)
        np.testing.assert_allclose(w2.frob2_mean, w1.frob2_mean)

    def test_weights_consistent_with_frobenius(self):
        data = sample_matrix_normal(ar1(5, 0.5).covariance, np.eye(4), 3, RngSpec(8))
        w = weights(data)
        self.assertAlmostEqual(float(np.sum(w.w1 ** 2)), w.frob2_mean, places=10)
        self.assertAlmostEqual(float(np.sum(w.w2 ** 2)), w.frob2_mean, places=10)

    def test_column_rescale_invariance(self):
        data = sample_matrix_normal(ar1(5, 0.5).covariance, np.eye(6), 2, RngSpec(8))
        c = np.array([1.0, 2.0, 0.5, 3.0, 7.0])
        scaled = DataSet(data.matrices * c)
        np.testing.assert_allclose(column_correlation(scaled).entries,
                                   column_correlation(data).entries, atol=1e-12)
        np.testing.assert_allclose(weights(scaled).w1, weights(data).w1 * c, rtol=1e-12)


class TestDegenerate(unittest.TestCase):
    """Zero pooled norms"""

    def test_zero_column(self):
        data = DataSet(np.array([[1.0, 0.0], [2.0, 0.0]]))
        with self.assertRaises(DegenerateColumn) as ctx:
            column_correlation(data)
        self.assertEqual(ctx.exception.index, 1)
        with self.assertRaises(DegenerateColumn):
            weights(data)

    def test_zero_row(self):
        data = DataSet(np.array([[0.0, 0.0], [2.0, 1.0]]))
        with self.assertRaises(DegenerateRow) as ctx:
            row_correlation(data)
        self.assertEqual(ctx.exception.index, 0)


def median_max_error(f: int, n: int, m: int = 100, seeds: int = 50) -> float:
    """Median over seeds of max_{i != j} |Gamma(A)_ij - rho(A)_ij| for AR(1) columns"""
    truth = ar1(m, 0.5).covariance.entries
    off = ~np.eye(m, dtype=bool)
    errors = []
    for seed in range(seeds):
        rng = RngSpec(seed)
        b = random_concentration(f, f, 0.1, 0.3, rng.model_stream(1)).covariance
        gamma = column_correlation(sample_matrix_normal(truth, b, n, rng)).entries
        errors.append(np.max(np.abs(gamma - truth)[off]))
    return float(np.median(errors))


@pytest.mark.slow
def test_montecarlo_column_correlation_concentrates():
    """Max-entry error shrinks by a factor near 2 when f or n grows fourfold"""
    base = median_max_error(f=40, n=1)
    more_rows = median_max_error(f=160, n=1)
    more_replicates = median_max_error(f=40, n=4)
    assert 1.4 <= base / more_rows <= 2.9
    assert 1.4 <= base / more_replicates <= 2.9


if __name__ == '__main__':
    unittest.main()
