"""Shared pytest fixtures and helpers"""

import os
from typing import Callable

import numpy as np
import pytest

FD_STEP = 1e-5
FD_RTOL = 1e-4
# partials smaller than this are compared absolutely
FD_FLOOR = 1e-4


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-second learning or convergence runs")
    config.addinivalue_line(
        "markers",
        "benchmark: hardware-sensitive throughput checks (need >= 8 cores and ASYNCRL_RUN_BENCHMARKS=1)",
    )


def pytest_collection_modifyitems(config, items):
    enabled = os.environ.get("ASYNCRL_RUN_BENCHMARKS") == "1" and (os.cpu_count() or 1) >= 8
    if enabled:
        return
    skip = pytest.mark.skip(reason="benchmarks need >= 8 logical cores and ASYNCRL_RUN_BENCHMARKS=1")
    for item in items:
        if "benchmark" in item.keywords:
            item.add_marker(skip)


def numerical_gradient(loss: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function of a float64 vector"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        plus = loss(x)
        x[i] = orig - step
        minus = loss(x)
        x[i] = orig
        grad[i] = (plus - minus) / (2.0 * step)
    return grad


def assert_gradient_close(analytic: np.ndarray, numeric: np.ndarray, rtol: float = FD_RTOL) -> None:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FD_FLOOR)
    rel = np.abs(analytic - numeric) / scale
    worst = int(np.argmax(rel)) if rel.size else 0
    assert rel.size == 0 or rel.max() <= rtol, (
        f"partial {worst}: analytic {analytic[worst]!r} vs numeric {numeric[worst]!r} (rel {rel[worst]:.3e})"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fd():
    """(numerical_gradient, assert_gradient_close)"""
    return numerical_gradient, assert_gradient_close
