"""Time grids, sampled curves and the basic metric operations on them.

Curves are piecewise linear on a uniform grid whose anchor time ``t0`` sits
exactly on a node. Everything is double precision; non-finite values are
rejected at construction rather than propagated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# relative tolerance used when deciding whether t0 sits on a grid node
_SNAP_RTOL = 1e-9


class NonFiniteError(ValueError):
    """A NaN or infinite value showed up where only finite reals are allowed."""


class GridMismatch(ValueError):
    """Two curves that must share a grid do not."""


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Return ``x`` as a finite 1-D float array (a read-only copy)."""
    v = np.array(x, dtype=float, ndmin=1)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"non-finite vector {v}")
    v.setflags(write=False)
    return v


def norm(x) -> float:
    return float(np.linalg.norm(x))


def dist(x, y) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


@dataclass(frozen=True)
class TimeInterval:
    """Closed interval ``[tmin, tmax]`` with a distinguished time ``t0`` inside it."""

    tmin: float
    tmax: float
    t0: float

    def __post_init__(self):
        for name in ("tmin", "tmax", "t0"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise NonFiniteError(f"{name} = {val}")
            object.__setattr__(self, name, val)
        if not self.tmin <= self.t0 <= self.tmax:
            raise ValueError(
                f"need tmin <= t0 <= tmax, got {self.tmin}, {self.t0}, {self.tmax}"
            )

    @property
    def length(self) -> float:
        return self.tmax - self.tmin

    @property
    def degenerate(self) -> bool:
        return self.tmin == self.tmax

    @property
    def half_width(self) -> float:
        """``max(tmax - t0, t0 - tmin)``, the longest stretch away from t0."""
        return max(self.tmax - self.t0, self.t0 - self.tmin)

    def contains(self, t: float) -> bool:
        return self.tmin <= t <= self.tmax

    def reversed(self) -> TimeInterval:
        return TimeInterval(self.tmin, self.tmax, self.tmin + self.tmax - self.t0)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on an interval with ``t0`` landing exactly on node ``i0``.

    Use :meth:`snapped` when t0 is not on the grid implied by ``n_steps``; the
    plain constructor refuses off-grid anchors.
    """

    interval: TimeInterval
    n_steps: int
    i0: int = field(init=False)
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        iv = self.interval
        n = int(self.n_steps)
        object.__setattr__(self, "n_steps", n)
        if iv.degenerate:
            if n != 0:
                raise ValueError("a degenerate interval only admits n_steps = 0")
            h, i0 = 0.0, 0
        else:
            if n < 1:
                raise ValueError(f"n_steps must be positive, got {n}")
            h = iv.length / n
            pos = (iv.t0 - iv.tmin) / h
            i0 = int(round(pos))
            if abs(pos - i0) > _SNAP_RTOL * max(1.0, pos):
                raise ValueError(
                    f"t0 = {iv.t0} is not a grid node (index {pos:.6g}); "
                    "use TimeGrid.snapped or TimeGrid.from_counts"
                )
        nodes = iv.tmin + h * np.arange(n + 1, dtype=float)
        nodes[-1] = iv.tmax
        nodes[i0] = iv.t0
        nodes.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "i0", i0)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_counts(cls, t0: float, h: float, n_left: int, n_right: int) -> TimeGrid:
        """Grid with ``n_left`` steps before t0 and ``n_right`` after, spacing ``h``."""
        iv = TimeInterval(t0 - n_left * h, t0 + n_right * h, t0)
        return cls(iv, n_left + n_right)

    @classmethod
    def snapped(cls, interval: TimeInterval, n_steps: int) -> tuple[TimeGrid, float]:
        """Move t0 to the nearest node; return the grid and the snap error."""
        if interval.degenerate:
            return cls(interval, 0), 0.0
        h = interval.length / n_steps
        i0 = int(round((interval.t0 - interval.tmin) / h))
        t0 = interval.tmin + i0 * h if i0 < n_steps else interval.tmax
        iv = TimeInterval(interval.tmin, interval.tmax, t0)
        return cls(iv, n_steps), abs(t0 - interval.t0)

    def node(self, i: int) -> float:
        return float(self.nodes[i])

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.interval == other.interval and self.n_steps == other.n_steps

    def __hash__(self):
        return hash((self.interval, self.n_steps))


@dataclass(frozen=True)
class SampledCurve:
    """Piecewise-linear curve given by its values at the nodes of ``grid``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"need {self.grid.n_steps + 1} node values, got array of shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise NonFiniteError("curve has non-finite node values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: TimeGrid, x) -> SampledCurve:
        x = as_vector(x)
        return cls(grid, np.tile(x, (grid.n_steps + 1, 1)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[float], object]) -> SampledCurve:
        return cls(grid, np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    def at_t0(self) -> np.ndarray:
        return self.values[self.grid.i0]

    def __call__(self, t: float) -> np.ndarray:
        return eval_curve(self, t)


@dataclass(frozen=True)
class VectorField:
    """Time-dependent vector field ``v(t, x)`` with its declared constants.

    ``L`` bounds the norm and ``K`` the Lipschitz constant in x on the closed
    ball of radius ``radius`` about ``center``. The constants are trusted
    inputs; :func:`intcurve.picard.validate_problem` can only refute them.

    With ``vectorized=True`` the function also accepts a time array of shape
    ``(n,)`` and states of shape ``(n, d)``, which lets grid-wide evaluation
    skip the Python loop.
    """

    dim: int
    func: Callable
    L: float
    K: float
    center: np.ndarray
    radius: float
    vectorized: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, self.dim))
        for name in ("L", "K", "radius"):
            val = float(getattr(self, name))
            if not (math.isfinite(val) or (name == "radius" and val == math.inf)):
                raise NonFiniteError(f"{name} = {val}")
            if val < 0:
                raise ValueError(f"{name} must be nonnegative, got {val}")
            object.__setattr__(self, name, val)

    def __call__(self, t: float, x) -> np.ndarray:
        out = np.asarray(self.func(float(t), np.asarray(x, dtype=float)), dtype=float)
        out = np.atleast_1d(out)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"field is non-finite at t={t}, x={x}")
        return out

    def along(self, times: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Evaluate at every ``(times[i], values[i])``; returns shape ``(n, d)``."""
        if self.vectorized:
            out = np.asarray(self.func(np.asarray(times, dtype=float), values), dtype=float)
            out = np.broadcast_to(out, values.shape).copy()
        else:
            out = np.array(
                [np.atleast_1d(self.func(float(t), x)) for t, x in zip(times, values)],
                dtype=float,
            ).reshape(values.shape)
        if not np.all(np.isfinite(out)):
            bad = int(np.argmin(np.all(np.isfinite(out), axis=1)))
            raise NonFiniteError(f"field is non-finite at t={times[bad]}, x={values[bad]}")
        return out

    def in_ball(self, x, tol: float = 0.0) -> bool:
        return dist(x, self.center) <= self.radius + tol


def clamp_time(t: float, interval: TimeInterval) -> float:
    """Nearest point of ``[tmin, tmax]`` to ``t``."""
    return min(max(float(t), interval.tmin), interval.tmax)


def _check_same_grid(f: SampledCurve, g: SampledCurve) -> None:
    if f.grid != g.grid:
        raise GridMismatch(f"{f.grid.interval}/{f.grid.n_steps} vs {g.grid.interval}/{g.grid.n_steps}")


def pointwise_distance(f: SampledCurve, g: SampledCurve) -> np.ndarray:
    _check_same_grid(f, g)
    # hypot avoids the underflow of squaring tiny differences
    return np.hypot.reduce(f.values - g.values, axis=1)


def sup_distance(f: SampledCurve, g: SampledCurve) -> float:
    """Max over grid nodes of ``dist(f(t_i), g(t_i))``."""
    return float(np.max(pointwise_distance(f, g)))


def eval_curve(f: SampledCurve, t: float) -> np.ndarray:
    """Piecewise-linear value of ``f`` at ``t`` (clamped into the grid interval)."""
    grid = f.grid
    t = clamp_time(t, grid.interval)
    if grid.n_steps == 0:
        return f.values[0].copy()
    pos = (t - grid.interval.tmin) / grid.h
    i = min(int(math.floor(pos)), grid.n_steps - 1)
    # nodes are exact; avoid a spurious interpolation step there
    if t == grid.nodes[i]:
        return f.values[i].copy()
    if t == grid.nodes[i + 1]:
        return f.values[i + 1].copy()
    w = (t - grid.nodes[i]) / (grid.nodes[i + 1] - grid.nodes[i])
    w = min(max(w, 0.0), 1.0)
    return (1.0 - w) * f.values[i] + w * f.values[i + 1]


def lipschitz_constant_on_grid(f: SampledCurve) -> float:
    """Exact Lipschitz constant of the piecewise-linear curve ``f``."""
    if f.grid.n_steps < 1:
        raise ValueError("need at least one step")
    steps = np.linalg.norm(np.diff(f.values, axis=0), axis=1)
    return float(np.max(steps / np.diff(f.grid.nodes)))
