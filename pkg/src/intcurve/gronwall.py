"""Grönwall envelopes for pairs of approximate integral curves.

Two ε-approximate integral curves of a K-Lipschitz field that start δ apart
stay within ``gronwall_bound(δ, K, ε_f + ε_g, t - t_start)`` of each other.
Defects are measured from the discretization, never taken on trust.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import (
    SampledCurve,
    TimeGrid,
    TimeInterval,
    VectorField,
    dist,
    pointwise_distance,
    _check_same_grid,
)
from .picard import TOL_BALL, node_defects


class DomainError(ValueError):
    pass


class BallEscape(ValueError):
    """A curve leaves the region where the field's Lipschitz constant is declared."""


def gronwall_bound(delta: float, K: float, eps: float, x: float) -> float:
    if delta < 0 or K < 0 or eps < 0 or x < 0:
        raise DomainError(f"arguments must be nonnegative: δ={delta}, K={K}, ε={eps}, x={x}")
    if K == 0:
        return delta + eps * x
    y = K * x
    # ε(e^y − 1)/K written as εx·expm1(y)/y stays accurate for tiny K
    growth = math.expm1(y) / y if y > 0 else 1.0
    return delta * math.exp(y) + eps * x * growth


def gronwall_bounds(delta: float, K: float, eps: float, xs: np.ndarray) -> np.ndarray:
    return np.array([gronwall_bound(delta, K, eps, float(x)) for x in xs])


@dataclass(frozen=True)
class DefectReport:
    eps_f: float
    eps_g: float
    delta: float
    K: float

    def __post_init__(self):
        for name in ("eps_f", "eps_g", "delta", "K"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise DomainError(f"{name} must be finite and nonnegative, got {val}")


@dataclass(frozen=True)
class GronwallCertificate:
    """Per-node margins ``bound(δ, K, ε+slack, t) − dist(f(t), g(t))``.

    The certificate passes when no margin drops below ``-slack_used``.
    """

    report: DefectReport
    direction: Literal["forward", "backward"]
    per_node_margin: np.ndarray
    pass_: bool
    slack_used: float
    anchor_time: float = 0.0

    @property
    def passed(self) -> bool:
        return self.pass_

    @property
    def min_margin(self) -> float:
        return float(np.min(self.per_node_margin))

    @property
    def worst_node(self) -> int:
        return int(np.argmin(self.per_node_margin))

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "delta": self.report.delta,
            "eps_f": self.report.eps_f,
            "eps_g": self.report.eps_g,
            "K": self.report.K,
            "slack_used": self.slack_used,
            "anchor_time": self.anchor_time,
            "min_margin": self.min_margin,
            "worst_node": self.worst_node,
            "pass": self.pass_,
        }


def measure_defect(alpha: SampledCurve, field: VectorField) -> float:
    """Smallest ε for which α certifies as an ε-approximate integral curve."""
    return float(np.max(node_defects(alpha, field)))


def default_slack(grid: TimeGrid, K: float) -> float:
    T = grid.interval.length
    return 10.0 * grid.h * (1.0 + K) * math.exp(K * T)


def _check_in_ball(curve: SampledCurve, field: VectorField, label: str) -> None:
    d = np.linalg.norm(curve.values - field.center, axis=1)
    i = int(np.argmax(d))
    if d[i] > field.radius + TOL_BALL:
        raise BallEscape(
            f"curve {label} leaves the Lipschitz ball at t={curve.grid.nodes[i]!r}: "
            f"distance {d[i]!r} > {field.radius!r}"
        )


def _resolve(measured: float, override: float | None, label: str, strict: bool = True) -> float:
    if override is None:
        return measured
    if strict and override < measured:
        raise ValueError(f"ε_{label} override {override} is below the measured defect {measured}")
    return override


def certify_pair(
    f: SampledCurve,
    g: SampledCurve,
    field: VectorField,
    K: float | None = None,
    slack: float | None = None,
    eps_f: float | None = None,
    eps_g: float | None = None,
    strict: bool = True,
) -> GronwallCertificate:
    """Check ``dist(f, g) <= gronwall_bound(δ, K, ε_f+ε_g+slack, t−tmin) + slack`` at every node.

    Defects default to their measured values. An ``eps_f``/``eps_g`` override
    must dominate the measurement unless ``strict`` is off, in which case the
    override is a claim whose consequences the margins test.
    """
    _check_same_grid(f, g)
    K = field.K if K is None else float(K)
    if K < field.K:
        raise ValueError(f"K = {K} is below the field's declared Lipschitz constant {field.K}")
    _check_in_ball(f, field, "f")
    _check_in_ball(g, field, "g")
    grid = f.grid
    if slack is None:
        slack = default_slack(grid, K)
    ef = _resolve(measure_defect(f, field), eps_f, "f", strict)
    eg = _resolve(measure_defect(g, field), eps_g, "g", strict)
    delta = dist(f.values[0], g.values[0])
    report = DefectReport(ef, eg, delta, K)

    elapsed = np.maximum(grid.nodes - grid.interval.tmin, 0.0)
    bound = gronwall_bounds(delta, K, ef + eg + slack, elapsed)
    margin = bound - pointwise_distance(f, g)
    return GronwallCertificate(
        report, "forward", margin, bool(np.min(margin) >= -slack), slack, grid.interval.tmin
    )


def time_reverse(alpha: SampledCurve) -> SampledCurve:
    """``β(t) = α(tmin + tmax − t)`` on the mirrored grid."""
    grid = TimeGrid(alpha.grid.interval.reversed(), alpha.grid.n_steps)
    return SampledCurve(grid, alpha.values[::-1])


def time_reverse_field(field: VectorField, interval: TimeInterval) -> VectorField:
    """``w(t, x) = −field(tmin + tmax − t, x)``, whose integral curves are the reversed ones."""
    s = interval.tmin + interval.tmax
    fn = field.func

    def reversed_func(t, x):
        return -np.asarray(fn(s - t, x), dtype=float)

    return VectorField(
        field.dim, reversed_func, field.L, field.K, field.center, field.radius,
        vectorized=field.vectorized, name=f"reversed({field.name})",
    )


def certify_backward(
    f: SampledCurve,
    g: SampledCurve,
    field: VectorField,
    K: float | None = None,
    slack: float | None = None,
    eps_f: float | None = None,
    eps_g: float | None = None,
    strict: bool = True,
) -> GronwallCertificate:
    """Envelope anchored at ``tmax`` and growing toward ``tmin``."""
    iv = f.grid.interval
    cert = certify_pair(
        time_reverse(f), time_reverse(g), time_reverse_field(field, iv), K, slack, eps_f, eps_g, strict
    )
    return GronwallCertificate(
        cert.report, "backward", cert.per_node_margin[::-1].copy(), cert.pass_,
        cert.slack_used, iv.tmax,
    )


def uniqueness_certificate(
    f: SampledCurve,
    g: SampledCurve,
    field: VectorField,
    K: float | None = None,
    tol: float = 0.0,
    tol_anchor: float = 1e-12,
    anchor: int | None = None,
) -> GronwallCertificate:
    """Two-sided envelope around a shared start at node ``anchor`` (default: t0).

    Nodes before the anchor use the backward envelope, which has the same form
    in ``|t − t_anchor|`` since the reversed field keeps the Lipschitz constant.
    """
    _check_same_grid(f, g)
    K = field.K if K is None else float(K)
    if K < field.K:
        raise ValueError(f"K = {K} is below the field's declared Lipschitz constant {field.K}")
    _check_in_ball(f, field, "f")
    _check_in_ball(g, field, "g")
    grid = f.grid
    anchor = grid.i0 if anchor is None else anchor
    start_gap = dist(f.values[anchor], g.values[anchor])
    if start_gap > tol_anchor:
        raise ValueError(f"curves differ by {start_gap!r} at the anchor, above {tol_anchor!r}")
    ef = measure_defect(f, field)
    eg = measure_defect(g, field)
    report = DefectReport(ef, eg, tol_anchor, K)
    elapsed = np.abs(grid.nodes - grid.nodes[anchor])
    bound = gronwall_bounds(tol_anchor, K, ef + eg, elapsed) + tol
    margin = bound - pointwise_distance(f, g)
    return GronwallCertificate(
        report, "forward", margin, bool(np.min(margin) >= 0.0), tol, float(grid.nodes[anchor])
    )


def certify_uniqueness(
    f: SampledCurve,
    g: SampledCurve,
    field: VectorField,
    K: float | None = None,
    tol: float = 0.0,
    tol_anchor: float = 1e-12,
) -> bool:
    return uniqueness_certificate(f, g, field, K, tol, tol_anchor).pass_
