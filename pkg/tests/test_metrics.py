import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from encmf.errors import DomainError
from encmf.metrics import RunMetrics, aggregate, coverage_step, rmse_step, spread_step
from encmf.stats import ensemble_cov

vec = arrays(float, 5, elements=st.floats(-1e3, 1e3))
# definiteness needs differences whose square does not underflow to zero
coarse = arrays(float, 5, elements=st.integers(-10**6, 10**6).map(lambda i: i / 1024))


def test_rmse_examples():
    assert rmse_step([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse_step(np.ones(4), np.zeros(4)) == 1.0
    assert rmse_step([3, 0, 4], [0, 0, 0]) == pytest.approx(5 / math.sqrt(3), rel=1e-15)
    with pytest.raises(DomainError):
        rmse_step([1, 2], [1, 2, 3])


@given(vec, vec)
def test_rmse_symmetric(a, b):
    assert rmse_step(a, b) == rmse_step(b, a)


@given(coarse, coarse)
def test_rmse_definite(a, b):
    assert (rmse_step(a, b) == 0) == bool(np.array_equal(a, b))


def test_spread_examples():
    assert spread_step(np.full((4, 3), 2.0)) == 0.0
    assert spread_step([[-1.0], [1.0]]) == 1.0
    with pytest.raises(DomainError):
        spread_step([[1.0, 2.0]])


@given(arrays(float, (6, 3), elements=st.floats(-100, 100)), arrays(float, 3, elements=st.floats(-100, 100)))
def test_spread_translation_and_trace(E, c):
    s = spread_step(E)
    assert spread_step(E + c) == pytest.approx(s, abs=1e-6)
    assert s * s * 3 == pytest.approx(np.trace(ensemble_cov(E)), rel=1e-12, abs=1e-12)


def test_coverage_examples():
    E = np.random.default_rng(0).normal(size=(101, 4))
    assert coverage_step(E, np.median(E, axis=0)) == 4
    assert coverage_step(E, np.median(E, axis=0) + 1e6) == 0
    grid = np.linspace(0, 1, 1000)[:, None]
    # linear-interpolated 2.5% quantile of the grid is 0.025
    assert coverage_step(grid, [0.5]) == 1
    assert coverage_step(grid, [0.01]) == 0


def test_coverage_levels():
    E = np.random.default_rng(1).normal(size=(30, 3))
    inside = E[5]
    assert coverage_step(E, inside, level=1.0) == 3
    assert coverage_step(E, inside, level=0.0) == 0


def test_aggregate_examples():
    assert aggregate([1, 2, 3]) == (2.0, 2.0)
    assert aggregate([1, 2, 3, 100]) == (26.5, 2.5)
    assert aggregate([7.25]) == (7.25, 7.25)
    with pytest.raises(DomainError):
        aggregate([])


def test_run_metrics_burn_in():
    m = RunMetrics.from_series([10, 1, 2, 3], [1, 1, 1, 1], [0, 3, 3, 2], 3, burn_in=1)
    assert m.avg_rmse == 2.0 and m.median_rmse == 2.0
    assert m.coverage_prob == pytest.approx(8 / 9)
    full = RunMetrics.from_series([10, 1, 2, 3], [1, 1, 1, 1], [0, 3, 3, 2], 3)
    assert full.avg_rmse == 4.0 and full.coverage_prob == pytest.approx(8 / 12)
    assert set(full.to_dict()) == {"avg_rmse", "median_rmse", "avg_spread", "coverage_prob"}
