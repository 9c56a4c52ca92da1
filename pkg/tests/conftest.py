import numpy as np
import pytest

from intcurve.core import SampledCurve, TimeGrid, TimeInterval, VectorField
from intcurve.picard import PicardProblem

ACCEPTANCE_LINES: list[str] = []


def linear_field(center=(1.0,), radius=2.0, L=2.0, K=1.0, scale=1.0):
    return VectorField(
        len(center), lambda t, x: scale * np.asarray(x), L, K, center, radius, vectorized=True
    )


def const_field(c, center=None, radius=10.0):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    center = np.zeros_like(c) if center is None else center
    return VectorField(
        len(c), lambda t, x: np.broadcast_to(c, np.shape(x)), float(np.linalg.norm(c)), 0.0,
        center, radius, vectorized=True,
    )


def random_member(rng, grid: TimeGrid, x, L: float, kind: str = "walk") -> SampledCurve:
    """A random curve with Lipschitz constant < L and value ``x`` at t0."""
    n = grid.n_steps
    d = len(x)
    if kind == "walk":
        slopes = rng.uniform(-1, 1, (n, d))
    else:
        knots = rng.uniform(-1, 1, (8, d))
        slopes = np.array([np.interp(np.linspace(0, 7, n), np.arange(8), knots[:, k]) for k in range(d)]).T
    norms = np.linalg.norm(slopes, axis=1, keepdims=True)
    slopes = 0.999 * L * slopes / np.maximum(norms, 1.0) * (norms.max() > 0)
    steps = slopes * np.diff(grid.nodes)[:, None]
    vals = np.zeros((n + 1, d))
    i0 = grid.i0
    vals[i0 + 1:] = np.cumsum(steps[i0:], axis=0)
    vals[:i0] = -np.cumsum(steps[:i0][::-1], axis=0)[::-1]
    return SampledCurve(grid, vals + np.asarray(x, dtype=float))


@pytest.fixture
def exp_problem():
    """v = x from x0 = 1 on [-0.5, 0.5] with a=2, r=0, L=2, K=1."""
    iv = TimeInterval(-0.5, 0.5, 0.0)
    return PicardProblem(linear_field(), iv, [1.0], 2.0, 0.0, 2.0, 1.0)


@pytest.fixture
def flow_problem():
    """v = x about x0 = 1 with a flow ball of radius 0.5 on [-0.25, 0.25]."""
    iv = TimeInterval(-0.25, 0.25, 0.0)
    return PicardProblem(linear_field(radius=1.5, L=2.5), iv, [1.0], 1.5, 0.5, 2.5, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
