"""Shared fixtures.  BLAS threading is pinned before numpy loads: the models
here are small enough that thread fan-out only adds latency."""
import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

import elastosync as es  # noqa: E402


@pytest.fixture(scope="session")
def beam_mesh():
    """Coarse 25 cm cantilever, one cell through the cross-section."""
    return es.generate_beam_mesh(25.0, 1.0, 1.0, 25, 1, 1)


@pytest.fixture(scope="session")
def material():
    return es.Material(E=1e6, nu=0.3, rho=1.0, alpha=0.4)


@pytest.fixture(scope="session")
def small_mesh():
    """Two-cell box for quick element-level checks."""
    return es.generate_beam_mesh(2.0, 1.0, 1.0, 2, 1, 1)


def rel_err(a, b, floor=1.0):
    return np.abs(a - b) / np.maximum(floor, np.abs(a))
