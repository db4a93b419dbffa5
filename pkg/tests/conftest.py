#!/usr/bin/env python3
"""
Pytest configuration and fixtures for kron-gemini tests
"""

import pytest
import os
import sys
import logging

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from kron_gemini.matrices import DataSet, RngSpec, sample_matrix_normal
from kron_gemini.models import ar1, identity, random_concentration


@pytest.fixture
def rng():
    """Fixed-seed RNG contract"""
    return RngSpec(seed=20240101)


@pytest.fixture
def ar1_truth():
    """AR(1) column model, m = 12, rho = 0.5"""
    return ar1(12, 0.5)


@pytest.fixture
def random_truth(rng):
    """Sparse random row concentration model, f = 8"""
    return random_concentration(8, 6, 0.1, 0.3, rng.model_stream(1))


@pytest.fixture
def small_dataset(rng, ar1_truth, random_truth):
    """Three replicates of an 8 x 12 matrix-normal sample"""
    return sample_matrix_normal(ar1_truth.covariance, random_truth.covariance, 3, rng)


@pytest.fixture
def tiny_dataset():
    """Single 2 x 2 replicate with hand-checkable correlations"""
    return DataSet(np.array([[1.0, 2.0], [3.0, 4.0]]))


@pytest.fixture
def identity_truths():
    return identity(6), identity(5)


@pytest.fixture
def out_dir(tmp_path):
    """Fresh output directory per test"""
    path = tmp_path / "out"
    path.mkdir()
    return str(path)


@pytest.fixture(autouse=True)
def quiet_numerics_logs():
    """Keep solver debug chatter out of test output"""
    logging.getLogger("kron_gemini").setLevel(logging.INFO)
    yield


# Pytest configuration
def pytest_configure(config):
    """Configure pytest"""
    # Add custom markers
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )
    config.addinivalue_line(
        "markers", "montecarlo: mark test as a Monte-Carlo property check"
    )


def pytest_collection_modifyitems(config, items):
    """Modify test collection"""
    # Add markers to tests based on their names
    for item in items:
        if "integration" in item.nodeid or "test_cli" in item.nodeid:
            item.add_marker(pytest.mark.integration)
        if "montecarlo" in item.nodeid:
            item.add_marker(pytest.mark.montecarlo)
            item.add_marker(pytest.mark.slow)
        if "slow" in item.nodeid:
            item.add_marker(pytest.mark.slow)
