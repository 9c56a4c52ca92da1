import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intcurve.core import (
    GridMismatch,
    NonFiniteError,
    SampledCurve,
    TimeGrid,
    TimeInterval,
    clamp_time,
    eval_curve,
    lipschitz_constant_on_grid,
    sup_distance,
)

UNIT = TimeInterval(0.0, 1.0, 0.0)


@pytest.mark.parametrize("t, expected", [(0.7, 0.7), (-3.0, 0.0), (2.5, 1.0)])
def test_clamp_time(t, expected):
    assert clamp_time(t, UNIT) == expected


@given(st.floats(-1e6, 1e6), st.floats(-10, 10), st.floats(0, 10))
def test_clamp_idempotent(t, lo, width):
    iv = TimeInterval(lo, lo + width, lo)
    c = clamp_time(t, iv)
    assert clamp_time(c, iv) == c
    assert iv.tmin <= c <= iv.tmax


def test_interval_rejects_t0_outside():
    with pytest.raises(ValueError):
        TimeInterval(0.0, 1.0, 2.0)
    with pytest.raises(NonFiniteError):
        TimeInterval(0.0, math.nan, 0.0)


def test_grid_anchor_exact():
    grid = TimeGrid(TimeInterval(-0.5, 0.5, 0.0), 1000)
    assert grid.i0 == 500
    assert grid.node(grid.i0) == 0.0
    assert grid.node(1000) == 0.5
    assert grid.h == pytest.approx(1e-3)


def test_grid_off_node_t0():
    iv = TimeInterval(0.0, 1.0, 0.3333)
    with pytest.raises(ValueError, match="not a grid node"):
        TimeGrid(iv, 10)
    grid, err = TimeGrid.snapped(iv, 10)
    assert grid.i0 == 3
    assert err == pytest.approx(0.0333, abs=1e-12)


def test_grid_from_counts():
    grid = TimeGrid.from_counts(1.0, 0.25, 2, 4)
    assert grid.interval == TimeInterval(0.5, 2.0, 1.0)
    assert grid.i0 == 2 and grid.n_steps == 6


def test_degenerate_grid():
    grid = TimeGrid(TimeInterval(1.0, 1.0, 1.0), 0)
    c = SampledCurve.constant(grid, [3.0])
    assert np.array_equal(eval_curve(c, 5.0), [3.0])
    with pytest.raises(ValueError):
        TimeGrid(TimeInterval(1.0, 1.0, 1.0), 4)


def test_curve_rejects_nan():
    grid = TimeGrid(UNIT, 2)
    with pytest.raises(NonFiniteError):
        SampledCurve(grid, [0.0, math.nan, 1.0])


def test_sup_distance_examples():
    grid = TimeGrid(UNIT, 100)
    f = SampledCurve.from_function(grid, lambda t: t)
    g = SampledCurve.from_function(grid, lambda t: t * t)
    assert sup_distance(f, f) == 0.0
    # max of t - t^2 on [0, 1] is 1/4 at t = 1/2, a grid node here
    assert sup_distance(f, g) == pytest.approx(0.25, abs=1e-15)
    zero = SampledCurve.constant(grid, [0.0, 0.0])
    c = SampledCurve.constant(grid, [3.0, 4.0])
    assert sup_distance(zero, c) == pytest.approx(5.0)


def test_sup_distance_grid_mismatch():
    a = SampledCurve.constant(TimeGrid(UNIT, 10), [0.0])
    b = SampledCurve.constant(TimeGrid(UNIT, 20), [0.0])
    with pytest.raises(GridMismatch):
        sup_distance(a, b)


def test_eval_curve():
    grid = TimeGrid(UNIT, 2)
    c = SampledCurve(grid, [0.0, 2.0, 3.0])
    assert eval_curve(c, 0.5)[0] == 2.0
    assert eval_curve(c, 0.25)[0] == 1.0
    assert eval_curve(c, 6.0)[0] == 3.0
    assert eval_curve(c, -1.0)[0] == 0.0


def test_lipschitz_examples():
    grid = TimeGrid(UNIT, 50)
    assert lipschitz_constant_on_grid(SampledCurve.constant(grid, [2.0])) == 0.0
    assert lipschitz_constant_on_grid(SampledCurve.from_function(grid, lambda t: 3 * t)) == pytest.approx(3.0, rel=1e-12)
    fine = TimeGrid(TimeInterval(0.0, math.pi, 0.0), 10_000)
    lip = lipschitz_constant_on_grid(SampledCurve.from_function(fine, math.sin))
    assert abs(lip - 1.0) <= 2 * fine.h


curves = st.lists(st.floats(-100, 100), min_size=11, max_size=11)


@given(curves, curves, curves)
def test_sup_distance_is_metric(a, b, c):
    grid = TimeGrid(UNIT, 10)
    f, g, k = (SampledCurve(grid, v) for v in (a, b, c))
    assert sup_distance(f, g) == sup_distance(g, f)
    assert sup_distance(f, k) <= sup_distance(f, g) + sup_distance(g, k) + 1e-9
    assert (sup_distance(f, g) == 0) == np.array_equal(f.values, g.values)


@settings(max_examples=50)
@given(curves, st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=20))
def test_eval_curve_lipschitz(vals, pairs):
    grid = TimeGrid(UNIT, 10)
    f = SampledCurve(grid, vals)
    lip = lipschitz_constant_on_grid(f)
    for s, t in pairs:
        gap = np.linalg.norm(eval_curve(f, s) - eval_curve(f, t))
        assert gap <= lip * abs(s - t) * (1 + 1e-9) + 1e-9
