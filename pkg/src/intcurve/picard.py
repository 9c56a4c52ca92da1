"""Picard iteration on Lipschitz curve spaces, with convergence certificates.

A :class:`PicardProblem` carries a vector field, a time interval and the
constants ``(a, r, L, K)``. When ``L * max(tmax - t0, t0 - tmin) <= a - r``
holds, the Picard operator maps the space of L-Lipschitz curves starting in
the closed r-ball around ``x0`` into itself for every start in that ball, so
one grid serves a whole family of starts (a local flow).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    NonFiniteError,
    SampledCurve,
    TimeGrid,
    VectorField,
    as_vector,
    dist,
    eval_curve,
    sup_distance,
)

TOL_LIP = 1e-9  # relative
TOL_BALL = 1e-9  # absolute
DEFAULT_TOL_FIX = 1e-10


class NonFiniteField(NonFiniteError):
    """The field returned NaN/Inf somewhere along a curve."""


class SpaceEscape(RuntimeError):
    """A Picard iterate left the Lipschitz curve space.

    This falsifies at least one of the declared constants (L, K, a, r).
    """

    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


class NoConvergence(RuntimeError):
    def __init__(self, message: str, certificate: ConvergenceCertificate):
        super().__init__(message)
        self.certificate = certificate


class HypothesisViolation(ValueError):
    """The problem constants fail the arithmetic side conditions."""


CONDITION_4 = "L * max (tmax - t₀) (t₀ - tmin) ≤ a - r"


@dataclass(frozen=True)
class PicardProblem:
    field: VectorField
    interval: TimeInterval
    x0: np.ndarray
    a: float
    r: float
    L: float
    K: float

    def __post_init__(self):
        object.__setattr__(self, "x0", as_vector(self.x0, self.field.dim))
        for name in ("a", "r", "L", "K"):
            val = float(getattr(self, name))
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {val}")
            object.__setattr__(self, name, val)

    @property
    def T(self) -> float:
        return self.interval.half_width

    def condition_4_holds(self) -> bool:
        return self.L * self.T <= self.a - self.r

    def violations(self) -> list[str]:
        out = []
        if self.r > self.a:
            out.append(f"r ≤ a fails: r = {self.r!r} > a = {self.a!r}")
        if not self.condition_4_holds():
            out.append(
                f"{CONDITION_4} fails: {self.L!r} * {self.T!r} = {self.L * self.T!r}"
                f" > {self.a - self.r!r}"
            )
        return out

    def require_valid(self) -> None:
        problems = self.violations()
        if problems:
            raise HypothesisViolation("; ".join(problems))

    def grid(self, n_steps: int) -> TimeGrid:
        if self.interval.degenerate:
            return TimeGrid(self.interval, 0)
        return TimeGrid(self.interval, n_steps)

    def space(self, grid: TimeGrid) -> LipschitzCurveSpace:
        return LipschitzCurveSpace(grid, self.x0, self.r, self.L)


@dataclass(frozen=True)
class LipschitzCurveSpace:
    """L-Lipschitz curves on ``grid`` whose value at t0 lies within r of x0."""

    grid: TimeGrid
    x0: np.ndarray
    r: float
    L: float

    def violation(self, f: SampledCurve) -> dict | None:
        """None for members, otherwise a witness describing the failure."""
        if f.grid != self.grid:
            return {"reason": "grid mismatch"}
        start_dist = dist(f.at_t0(), self.x0)
        if start_dist > self.r + TOL_BALL:
            return {"reason": "start outside ball", "dist": start_dist, "r": self.r}
        if self.grid.n_steps >= 1:
            slopes = np.linalg.norm(np.diff(f.values, axis=0), axis=1) / np.diff(self.grid.nodes)
            i = int(np.argmax(slopes))
            if slopes[i] > self.L * (1 + TOL_LIP) + TOL_LIP * 1e-3:
                return {
                    "reason": "Lipschitz bound exceeded",
                    "slope": float(slopes[i]),
                    "L": self.L,
                    "t": float(self.grid.nodes[i]),
                }
        return None

    def __contains__(self, f: SampledCurve) -> bool:
        return self.violation(f) is None


class ConditionCheck(NamedTuple):
    name: str
    passed: bool
    estimate: float
    witness: dict


@dataclass(frozen=True)
class ValidationReport:
    conditions: tuple[ConditionCheck, ...]
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> ConditionCheck:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "seed": self.seed,
            "conditions": [c._asdict() for c in self.conditions],
        }


def sample_ball(rng: np.random.Generator, center: np.ndarray, radius: float, n: int) -> np.ndarray:
    """``n`` points uniformly distributed in the closed ball."""
    d = center.shape[0]
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / d)
    return center + dirs * radii[:, None]


def validate_problem(p: PicardProblem, samples: int = 1000, seed: int = 0) -> ValidationReport:
    """Try to refute the four hypotheses by sampling ``B̄_a(x0) × I``.

    Passing proves nothing about the field; failing exhibits a witness.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    iv = p.interval
    v = p.field
    ts = iv.tmin + (iv.tmax - iv.tmin) * rng.random(samples)
    xs = sample_ball(rng, p.x0, p.a, samples)
    ys = sample_ball(rng, p.x0, p.a, samples)

    fx = np.array([v(t, x) for t, x in zip(ts, xs)])
    fy = np.array([v(t, y) for t, y in zip(ts, ys)])

    # (i) Lipschitz in x
    num = np.linalg.norm(fx - fy, axis=1)
    den = np.linalg.norm(xs - ys, axis=1)
    ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    k = int(np.argmax(ratios))
    lip = ConditionCheck(
        "lipschitz",
        bool(ratios[k] <= p.K * (1 + TOL_LIP) + 1e-12),
        float(ratios[k]),
        {"t": float(ts[k]), "x": xs[k].tolist(), "y": ys[k].tolist()},
    )

    # (ii) norm bound
    norms = np.concatenate([np.linalg.norm(fx, axis=1), np.linalg.norm(fy, axis=1)])
    pts = np.concatenate([xs, ys])
    k = int(np.argmax(norms))
    bound = ConditionCheck(
        "norm_bound",
        bool(norms[k] <= p.L * (1 + TOL_LIP) + 1e-12),
        float(norms[k]),
        {"t": float(ts[k % samples]), "x": pts[k].tolist()},
    )

    # (iii) strengthened condition 4, exact arithmetic
    lhs = p.L * p.T
    cond4 = ConditionCheck(
        "condition_4",
        bool(lhs <= p.a - p.r and p.r <= p.a),
        lhs - (p.a - p.r),
        {"inequality": CONDITION_4, "lhs": lhs, "rhs": p.a - p.r},
    )

    # (iv) continuity in t: a jump survives shrinking the perturbation
    dt = 1e-9 * max(iv.length, 1.0)
    jumps = np.zeros(samples)
    if iv.length > 0:
        for n, (t, x) in enumerate(zip(ts, xs)):
            t2 = t + dt if t + dt <= iv.tmax else t - dt
            jumps[n] = np.linalg.norm(v(t2, x) - fx[n])
    k = int(np.argmax(jumps))
    cont = ConditionCheck(
        "continuity",
        bool(jumps[k] <= 1e-6 * (1.0 + p.L)),
        float(jumps[k]),
        {"t": float(ts[k]), "x": xs[k].tolist(), "dt": dt},
    )
    return ValidationReport((lip, bound, cond4, cont), seed)


def _trapezoid_from_anchor(g: np.ndarray, nodes: np.ndarray, i0: int) -> np.ndarray:
    """Cumulative trapezoid integral of node samples ``g``, zero at node ``i0``."""
    out = np.zeros_like(g)
    if len(nodes) == 1:
        return out
    widths = np.diff(nodes)[:, None]
    pieces = 0.5 * widths * (g[1:] + g[:-1])
    out[i0 + 1:] = np.cumsum(pieces[i0:], axis=0)
    if i0 > 0:
        out[:i0] = -np.cumsum(pieces[:i0][::-1], axis=0)[::-1]
    return out


def picard_map(field: VectorField, t0: float, x, alpha: SampledCurve) -> SampledCurve:
    """Node values of ``t ↦ x + ∫_{t0}^{t} field(τ, α(τ)) dτ`` by composite trapezoid."""
    grid = alpha.grid
    if grid.node(grid.i0) != t0:
        raise ValueError(f"t0 = {t0} is not the anchor node of the curve's grid")
    x = as_vector(x, alpha.dim)
    try:
        g = field.along(grid.nodes, alpha.values)
    except NonFiniteError as exc:
        raise NonFiniteField(str(exc)) from exc
    vals = x + _trapezoid_from_anchor(g, grid.nodes, grid.i0)
    vals[grid.i0] = x
    return SampledCurve(grid, vals)


def next_iterate(p: PicardProblem, x, alpha: SampledCurve) -> SampledCurve:
    """One Picard step on the problem's curve space; escaping it is an error."""
    x = as_vector(x, p.field.dim)
    if dist(x, p.x0) > p.r + TOL_BALL:
        raise SpaceEscape(
            f"start {x.tolist()} is {dist(x, p.x0)!r} from x0, beyond r = {p.r!r}",
            {"reason": "start outside ball", "dist": dist(x, p.x0), "r": p.r},
        )
    space = p.space(alpha.grid)
    out = picard_map(p.field, p.interval.t0, x, alpha)
    witness = space.violation(out)
    if witness is not None:
        raise SpaceEscape(f"Picard iterate left the curve space: {witness}", witness)
    return out


def contraction_bound(p: PicardProblem, n: int) -> float:
    """``(K T)^n / n!``: Lipschitz constant of the n-fold Picard operator in sup norm."""
    if n < 1:
        raise ValueError("n must be at least 1")
    kt = p.K * p.T
    if kt == 0:
        return 0.0
    return math.exp(n * math.log(kt) - math.lgamma(n + 1))


def contraction_power(p: PicardProblem, target: float = 0.5) -> int:
    """Smallest n with ``contraction_bound(p, n) <= target``."""
    n = 1
    while contraction_bound(p, n) > target:
        n += 1
    return n


class CurveCheck(NamedTuple):
    max_defect: float
    passed: bool


def node_defects(alpha: SampledCurve, field: VectorField) -> np.ndarray:
    """Per-node distance between the difference quotient of α and the field.

    Central differences inside, one-sided at the two endpoints (the derivative
    within the interval there).
    """
    grid = alpha.grid
    if grid.n_steps < 2:
        raise ValueError("need at least two steps")
    v, t = alpha.values, grid.nodes
    deriv = np.empty_like(v)
    deriv[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])[:, None]
    deriv[0] = (v[1] - v[0]) / (t[1] - t[0])
    deriv[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2])
    return np.linalg.norm(deriv - field.along(grid.nodes, alpha.values), axis=1)


def verify_integral_curve(alpha: SampledCurve, field: VectorField, tol: float) -> CurveCheck:
    worst = float(np.max(node_defects(alpha, field)))
    return CurveCheck(worst, worst <= tol)


@dataclass(frozen=True)
class ConvergenceCertificate:
    iterations: int
    final_step: float
    residual: float
    contraction_ratio_observed: float
    contraction_bound_theoretical: float
    converged: bool
    tol_fix: float = DEFAULT_TOL_FIX
    tol_res: float = 0.0
    fixed_point_gap: float = 0.0
    steps: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_step": self.final_step,
            "residual": self.residual,
            "contraction_ratio_observed": self.contraction_ratio_observed,
            "contraction_bound_theoretical": self.contraction_bound_theoretical,
            "converged": self.converged,
            "tol_fix": self.tol_fix,
            "tol_res": self.tol_res,
            "fixed_point_gap": self.fixed_point_gap,
            "steps": list(self.steps),
        }


def _observed_ratio(steps: list[float], scale: float) -> float:
    # ratios of successive sup-norm steps, ignoring steps already at roundoff level
    floor = 1e-12 * (1.0 + scale)
    ratios = [b / a for a, b in zip(steps, steps[1:]) if a > floor and b > floor]
    return max(ratios) if ratios else 0.0


def solve_ivp(
    p: PicardProblem,
    x,
    n_steps: int = 1000,
    tol_fix: float = DEFAULT_TOL_FIX,
    max_iter: int = 200,
    tol_res: float | None = None,
    initial: SampledCurve | None = None,
) -> tuple[SampledCurve, ConvergenceCertificate]:
    """Iterate :func:`next_iterate` from the constant curve ≡ x to a fixed point.

    ``initial`` replaces the constant starting curve; it must be a member of
    the problem's curve space. Raises :class:`NoConvergence` when ``max_iter``
    is exhausted.
    """
    p.require_valid()
    x = as_vector(x, p.field.dim)
    grid = p.grid(n_steps)
    if grid.n_steps == 0:
        if dist(x, p.x0) > p.r + TOL_BALL:
            raise SpaceEscape("start outside ball", {"dist": dist(x, p.x0), "r": p.r})
        curve = SampledCurve.constant(grid, x)
        cert = ConvergenceCertificate(0, 0.0, 0.0, 0.0, 0.0, True, tol_fix, 0.0)
        return curve, cert
    if tol_res is None:
        tol_res = 10.0 * grid.h

    alpha = SampledCurve.constant(grid, x) if initial is None else initial
    if initial is not None:
        witness = p.space(grid).violation(initial)
        if witness is not None:
            raise SpaceEscape(f"initial curve is not in the curve space: {witness}", witness)

    steps: list[float] = []
    scale = float(np.max(np.abs(alpha.values)))
    converged_fix = False
    for _ in range(max_iter):
        new = next_iterate(p, x, alpha)
        steps.append(sup_distance(new, alpha))
        alpha = new
        if steps[-1] <= tol_fix:
            converged_fix = True
            break

    gap = sup_distance(next_iterate(p, x, alpha), alpha)
    residual = verify_integral_curve(alpha, p.field, tol_res).max_defect if grid.n_steps >= 2 else 0.0
    cert = ConvergenceCertificate(
        iterations=len(steps),
        final_step=steps[-1] if steps else 0.0,
        residual=residual,
        contraction_ratio_observed=_observed_ratio(steps, scale),
        contraction_bound_theoretical=contraction_bound(p, 1),
        converged=converged_fix and residual <= tol_res,
        tol_fix=tol_fix,
        tol_res=tol_res,
        fixed_point_gap=gap,
        steps=tuple(steps),
    )
    if not converged_fix:
        raise NoConvergence(
            f"no fixed point within {max_iter} iterations (last step {cert.final_step:.3e})", cert
        )
    return alpha, cert


@dataclass
class FlowTable:
    """Integral curves for several starts, all on one shared grid."""

    problem: PicardProblem
    grid: TimeGrid
    starts: list[np.ndarray]
    curves: list[SampledCurve | None]
    certificates: list[ConvergenceCertificate | None]
    failures: dict[int, str]

    def index_of(self, x, tol: float = 1e-12) -> int:
        x = as_vector(x)
        for k, s in enumerate(self.starts):
            if dist(s, x) <= tol:
                return k
        raise KeyError(f"no flow line starts at {x.tolist()}")

    def flow(self, x, t: float) -> np.ndarray:
        k = self.index_of(x)
        curve = self.curves[k]
        if curve is None:
            raise KeyError(f"flow line {k} failed: {self.failures[k]}")
        return eval_curve(curve, t)

    @property
    def ok(self) -> bool:
        return not self.failures


def build_local_flow(
    p: PicardProblem,
    starts: Sequence,
    n_steps: int = 1000,
    tol_fix: float = DEFAULT_TOL_FIX,
    max_iter: int = 200,
    workers: int | None = None,
) -> FlowTable:
    """Solve from every start in ``B̄_r(x0)`` on one grid.

    Per-start solves are independent; with ``workers > 1`` they run in a thread
    pool. Results keep start order and failures are collected, not raised.
    """
    p.require_valid()
    starts = [as_vector(s, p.field.dim) for s in starts]
    for s in starts:
        if dist(s, p.x0) > p.r + TOL_BALL:
            raise SpaceEscape(
                f"start {s.tolist()} lies outside the flow ball of radius {p.r}",
                {"dist": dist(s, p.x0), "r": p.r},
            )
    grid = p.grid(n_steps)

    def one(s):
        try:
            return solve_ivp(p, s, n_steps, tol_fix, max_iter), None
        except (NoConvergence, SpaceEscape, NonFiniteError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, starts))
    else:
        results = [one(s) for s in starts]

    curves, certs, failures = [], [], {}
    for k, (res, err) in enumerate(results):
        if err is None:
            curves.append(res[0])
            certs.append(res[1])
        else:
            curves.append(None)
            certs.append(None)
            failures[k] = err
    return FlowTable(p, grid, starts, curves, certs, failures)
