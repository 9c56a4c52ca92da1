"""Chart atlases and chart-switching integration of vector fields on manifolds.

The integrator never touches the ambient embedding. It solves a Picard
problem for the chart-local principal part inside one chart, stops once the
local coordinates reach the switch radius, re-expresses the exit point in the
preferred chart there and carries on. The embedding only serves verification
and reporting.

Two compact manifolds ship with the module: the circle with two angle charts
and the unit sphere with the two stereographic charts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import SampledCurve, TimeGrid, TimeInterval, VectorField, as_vector, eval_curve
from .picard import PicardProblem, node_defects, sample_ball, solve_ivp

TOL_CHART = 1e-10
H_FD = 1e-5


class OutsideOverlap(ValueError):
    pass


class ChartTooSmall(ValueError):
    pass


class NoProgress(RuntimeError):
    pass


class InconsistentField(ValueError):
    """The chart-local principal parts disagree on an overlap."""


class JacobianMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class Chart:
    """Coordinates ``to_local`` valid on the open ball ``‖z‖ < rho``."""

    id: int
    to_local: Callable[[np.ndarray], np.ndarray]
    from_local: Callable[[np.ndarray], np.ndarray]
    rho: float

    def contains(self, p) -> bool:
        return np.linalg.norm(self.to_local(np.asarray(p, dtype=float))) < self.rho


@dataclass(frozen=True)
class Atlas:
    charts: tuple[Chart, ...]
    ambient_dist: Callable[[np.ndarray, np.ndarray], float]
    sample_ambient: Callable[[np.random.Generator, int], np.ndarray]
    dim: int
    name: str = ""
    switch_factor: float = 0.8

    def chart(self, i: int) -> Chart:
        return self.charts[i]

    def rho_switch(self, i: int, factor: float | None = None) -> float:
        return (self.switch_factor if factor is None else factor) * self.charts[i].rho

    def preferred_chart(self, p) -> int:
        """Chart with the smallest local norm at ``p``; ties go to the lower id."""
        p = np.asarray(p, dtype=float)
        best, best_norm = -1, math.inf
        for c in self.charts:
            n = float(np.linalg.norm(c.to_local(p)))
            if n < c.rho and n < best_norm:
                best, best_norm = c.id, n
        if best < 0:
            raise ValueError(f"no chart contains {p.tolist()}")
        return best

    def transition(self, i: int, j: int, z) -> np.ndarray:
        return self.charts[j].to_local(self.charts[i].from_local(np.asarray(z, dtype=float)))

    def check_covering(self, samples: int = 1000, seed: int = 0, factor: float | None = None) -> float:
        """Largest ``min_i ‖φ_i(p)‖ / ρ_switch,i`` over sampled points; below 1 means covered."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for p in self.sample_ambient(rng, samples):
            ratio = min(
                np.linalg.norm(c.to_local(p)) / self.rho_switch(c.id, factor) for c in self.charts
            )
            worst = max(worst, float(ratio))
        return worst


@dataclass(frozen=True)
class ChartVectorField:
    """Time-independent field given by its principal part in every chart.

    ``L[i]`` and ``K[i]`` bound the norm and Lipschitz constant of ``parts[i]``
    on the closed chart ball ``‖z‖ <= rho_i``. ``jacobians`` optionally maps a
    chart pair ``(i, j)`` to the analytic derivative of the transition map.
    Parts may be vectorized over a leading axis when ``vectorized`` is set.
    """

    parts: tuple[Callable[[np.ndarray], np.ndarray], ...]
    L: tuple[float, ...]
    K: tuple[float, ...]
    jacobians: dict = field(default_factory=dict)
    vectorized: bool = False
    name: str = ""

    def part(self, i: int, z) -> np.ndarray:
        return np.asarray(self.parts[i](np.asarray(z, dtype=float)), dtype=float)

    def local_field(self, atlas: Atlas, i: int) -> VectorField:
        """The principal part in chart ``i`` as an autonomous :class:`VectorField`."""
        part = self.parts[i]

        def fn(t, z):
            return part(z)

        center = np.zeros(atlas.dim)
        return VectorField(
            atlas.dim, fn, self.L[i], self.K[i], center, atlas.charts[i].rho,
            vectorized=self.vectorized, name=f"{self.name}[chart {i}]",
        )

    def negated(self) -> ChartVectorField:
        parts = tuple((lambda f: (lambda z: -np.asarray(f(z), dtype=float)))(f) for f in self.parts)
        return replace(self, parts=parts, name=f"-{self.name}")

    def with_jacobians(self, jacobians: dict) -> ChartVectorField:
        return replace(self, jacobians=dict(jacobians))


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], z: np.ndarray, h: float) -> np.ndarray:
    d = z.shape[0]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((np.asarray(fn(z + e)) - np.asarray(fn(z - e))) / (2 * h))
    return np.column_stack(cols)


def transition_jacobian(
    field: ChartVectorField,
    atlas: Atlas,
    i: int,
    j: int,
    z,
    h_fd: float = H_FD,
    mode: str = "auto",
) -> np.ndarray:
    """Derivative of ``φ_j ∘ φ_i⁻¹`` at ``z``.

    ``mode="auto"`` uses a registered analytic Jacobian and cross-checks it
    against central differences; ``"analytic"`` skips the check and ``"fd"``
    ignores any registered formula.
    """
    z = as_vector(z, atlas.dim)
    ci, cj = atlas.charts[i], atlas.charts[j]
    stencil = [z] + [z + s * h_fd * e for e in np.eye(atlas.dim) for s in (1, -1)]
    for w in stencil:
        # written as "not <" so that NaN images count as outside
        if not (np.linalg.norm(w) < ci.rho and np.linalg.norm(atlas.transition(i, j, w)) < cj.rho):
            raise OutsideOverlap(f"{w.tolist()} is not in the overlap of charts {i} and {j}")
    analytic = field.jacobians.get((i, j))
    if mode == "analytic" or (mode == "auto" and analytic is not None):
        if analytic is None:
            raise KeyError(f"no analytic Jacobian registered for ({i}, {j})")
        J = np.atleast_2d(np.asarray(analytic(z), dtype=float))
        if mode == "auto":
            J_fd = fd_jacobian(lambda w: atlas.transition(i, j, w), z, h_fd)
            if np.max(np.abs(J - J_fd)) > 1e-4 * (1.0 + np.max(np.abs(J))):
                raise JacobianMismatch(f"analytic and finite-difference Jacobians disagree at {z.tolist()}")
        return J
    return fd_jacobian(lambda w: atlas.transition(i, j, w), z, h_fd)


@dataclass(frozen=True)
class ConsistencyReport:
    max_violation: float
    worst_pair: tuple[int, int] | None
    worst_point: list[float] | None
    per_pair: dict
    samples: int
    seed: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def to_dict(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "worst_point": self.worst_point,
            "per_pair": {f"{i}->{j}": v for (i, j), v in sorted(self.per_pair.items())},
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
            "pass": self.passed,
        }


def _sample_overlap(atlas: Atlas, i: int, j: int, rng, n: int, shrink: float = 0.95) -> list[np.ndarray]:
    ci, cj = atlas.charts[i], atlas.charts[j]
    out: list[np.ndarray] = []
    for _ in range(200):
        if len(out) >= n:
            break
        for z in sample_ball(rng, np.zeros(atlas.dim), shrink * ci.rho, 4 * n):
            if np.linalg.norm(atlas.transition(i, j, z)) < shrink * cj.rho:
                out.append(z)
                if len(out) >= n:
                    break
    return out


def check_field_consistency(
    field: ChartVectorField,
    atlas: Atlas,
    samples: int = 200,
    seed: int = 0,
    tol: float = 1e-6,
    mode: str = "auto",
    h_fd: float = H_FD,
) -> ConsistencyReport:
    """Compare ``v_j(τ_ij(z))`` with ``Dτ_ij(z) v_i(z)`` on random overlap points."""
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    worst, worst_pair, worst_point = 0.0, None, None
    per_pair = {}
    for ci in atlas.charts:
        for cj in atlas.charts:
            i, j = ci.id, cj.id
            if i == j:
                continue
            pair_worst = 0.0
            for z in _sample_overlap(atlas, i, j, rng, samples):
                J = transition_jacobian(field, atlas, i, j, z, h_fd, mode)
                lhs = field.part(j, atlas.transition(i, j, z))
                rhs = J @ field.part(i, z)
                v = float(np.linalg.norm(lhs - rhs))
                pair_worst = max(pair_worst, v)
                if v > worst or worst_pair is None:
                    worst, worst_pair, worst_point = v, (i, j), z.tolist()
            per_pair[(i, j)] = pair_worst
    return ConsistencyReport(worst, worst_pair, worst_point, per_pair, samples, seed, tol)


@dataclass(frozen=True)
class SolverConfig:
    n_steps: int = 1000
    switch_factor: float | None = None
    tol_fix: float = 1e-12
    max_iter: int = 200
    max_segments: int = 100_000


class Segment(NamedTuple):
    chart: int
    curve: SampledCurve
    t_start: float
    t_end: float


@dataclass(frozen=True)
class ManifoldTrajectory:
    segments: tuple[Segment, ...]

    @property
    def switch_times(self) -> list[float]:
        return [s.t_start for s in self.segments[1:]]

    @property
    def chart_switches(self) -> int:
        return sum(1 for a, b in zip(self.segments, self.segments[1:]) if a.chart != b.chart)

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    def segment_at(self, t: float) -> Segment:
        for s in self.segments:
            if t <= s.t_end:
                return s
        return self.segments[-1]

    def local_at(self, t: float) -> tuple[int, np.ndarray]:
        s = self.segment_at(t)
        return s.chart, eval_curve(s.curve, t)

    def ambient_at(self, t: float, atlas: Atlas) -> np.ndarray:
        chart, z = self.local_at(t)
        return atlas.charts[chart].from_local(z)

    def end_point(self, atlas: Atlas) -> np.ndarray:
        last = self.segments[-1]
        return atlas.charts[last.chart].from_local(last.curve.values[-1])


class ChartExit(NamedTuple):
    curve: SampledCurve
    exit: str  # "reached_horizon", "hit_switch_radius" or "step_limit"
    t_exit: float

    @property
    def hit_switch(self) -> bool:
        return self.exit == "hit_switch_radius"


def solve_in_chart(
    field: ChartVectorField,
    atlas: Atlas,
    chart: int,
    z_start,
    t_start: float,
    horizon: float,
    cfg: SolverConfig = SolverConfig(),
) -> ChartExit:
    """Integrate inside one chart for at most ``horizon`` time units.

    The Picard ball is the largest one about ``z_start`` inside the chart, so
    the admissible step is ``(rho − ‖z_start‖) / L``. The returned curve is cut
    at the first node reaching the switch radius.
    """
    z_start = as_vector(z_start, atlas.dim)
    rho = atlas.charts[chart].rho
    rho_switch = atlas.rho_switch(chart, cfg.switch_factor)
    if np.linalg.norm(z_start) >= rho_switch:
        raise ValueError(f"start {z_start.tolist()} is beyond the switch radius {rho_switch}")
    a = rho - float(np.linalg.norm(z_start))
    if a <= 0:
        raise ChartTooSmall(f"no room inside chart {chart} around {z_start.tolist()}")
    L = field.L[chart]
    dt_max = a / L if L > 0 else math.inf
    dt = min(dt_max, horizon)
    if dt <= 0:
        raise NoProgress(f"non-positive step {dt}")
    local = field.local_field(atlas, chart)
    local = replace(local, center=z_start, radius=a)

    # keep the node spacing of a full-length segment
    full = dt_max if math.isfinite(dt_max) else dt
    n = max(2, int(math.ceil(cfg.n_steps * dt / full - 1e-9)))
    t_stop = t_start + dt
    # rounding in t_start + dt may break L * (t_stop - t_start) <= a by an ulp
    while L * (t_stop - t_start) > a:
        t_stop = math.nextafter(t_stop, -math.inf)
    iv = TimeInterval(t_start, t_stop, t_start)
    problem = PicardProblem(local, iv, z_start, a, 0.0, L, field.K[chart])
    curve, _ = solve_ivp(problem, z_start, n, cfg.tol_fix, cfg.max_iter)

    norms = np.linalg.norm(curve.values, axis=1)
    hits = np.nonzero(norms >= rho_switch)[0]
    if hits.size == 0:
        exit = "reached_horizon" if dt == horizon else "step_limit"
        return ChartExit(curve, exit, curve.grid.interval.tmax)
    k = int(hits[0])
    t_exit = float(curve.grid.nodes[k])
    grid = TimeGrid(TimeInterval(t_start, t_exit, t_start), k)
    return ChartExit(SampledCurve(grid, curve.values[: k + 1]), "hit_switch_radius", t_exit)


def integrate_on_manifold(
    field: ChartVectorField,
    atlas: Atlas,
    p_start,
    t_start: float,
    t_end: float,
    cfg: SolverConfig = SolverConfig(),
) -> ManifoldTrajectory:
    """Chain chart-local solves from ``t_start`` to ``t_end``."""
    if not t_end > t_start:
        raise ValueError("need t_end > t_start")
    p = np.asarray(p_start, dtype=float)
    t = float(t_start)
    segments: list[Segment] = []
    while t < t_end:
        if len(segments) >= cfg.max_segments:
            raise NoProgress(f"gave up after {cfg.max_segments} segments at t={t}")
        chart = atlas.preferred_chart(p)
        z = atlas.charts[chart].to_local(p)
        if np.linalg.norm(z) >= atlas.rho_switch(chart, cfg.switch_factor):
            raise NoProgress(
                f"point {p.tolist()} is outside every chart's switch radius; "
                "the atlas does not cover at this switch factor"
            )
        remaining = t_end - t
        out = solve_in_chart(field, atlas, chart, z, t, remaining, cfg)
        advance = out.t_exit - t
        if advance < out.curve.grid.h or advance <= 0:
            raise NoProgress(f"chart {chart} step advanced only {advance} at t={t}")
        t_next = t_end if out.exit == "reached_horizon" else out.t_exit
        segments.append(Segment(chart, out.curve, t, t_next))
        p = atlas.charts[chart].from_local(out.curve.values[-1])
        t = t_next
    return ManifoldTrajectory(tuple(segments))


class ManifoldCurveCheck(NamedTuple):
    max_defect: float
    passed: bool
    max_switch_gap: float
    worst_switch: int | None


def verify_manifold_curve(
    traj: ManifoldTrajectory, field: ChartVectorField, atlas: Atlas, tol: float
) -> ManifoldCurveCheck:
    """Chart-local defect inside every segment and ambient continuity across switches."""
    worst = 0.0
    for seg in traj.segments:
        if seg.curve.grid.n_steps >= 2:
            worst = max(worst, float(np.max(node_defects(seg.curve, field.local_field(atlas, seg.chart)))))
    gap, worst_switch = 0.0, None
    for k, (a, b) in enumerate(zip(traj.segments, traj.segments[1:])):
        pa = atlas.charts[a.chart].from_local(a.curve.values[-1])
        pb = atlas.charts[b.chart].from_local(b.curve.values[0])
        g = float(atlas.ambient_dist(pa, pb))
        if g > gap or worst_switch is None:
            gap, worst_switch = max(gap, g), k
    max_defect = max(worst, gap)
    return ManifoldCurveCheck(max_defect, max_defect <= tol, gap, worst_switch)


def trajectory_distance(
    a: ManifoldTrajectory, b: ManifoldTrajectory, atlas: Atlas, times: Sequence[float]
) -> float:
    return max(float(atlas.ambient_dist(a.ambient_at(t, atlas), b.ambient_at(t, atlas))) for t in times)


def certify_manifold_uniqueness(
    field: ChartVectorField,
    atlas: Atlas,
    p_start,
    t_range: tuple[float, float],
    cfg_a: SolverConfig,
    cfg_b: SolverConfig,
    tol: float,
    n_samples: int = 401,
    consistency_tol: float = 1e-6,
) -> bool:
    """Integrate with two configurations and compare in the ambient space.

    Refuses to run for fields whose chart parts disagree on overlaps.
    """
    report = check_field_consistency(field, atlas, tol=consistency_tol)
    if not report.passed:
        raise InconsistentField(
            f"field violates overlap consistency by {report.max_violation:.3e} on charts {report.worst_pair}"
        )
    t0, t1 = t_range
    ta = integrate_on_manifold(field, atlas, p_start, t0, t1, cfg_a)
    tb = integrate_on_manifold(field, atlas, p_start, t0, t1, cfg_b)
    times = np.linspace(t0, t1, n_samples)
    return trajectory_distance(ta, tb, atlas, times) <= tol


# --- builtin manifolds -------------------------------------------------------

def _euclid(p, q) -> float:
    return float(np.linalg.norm(np.asarray(p) - np.asarray(q)))


def _wrap(theta):
    return (theta + math.pi) % (2 * math.pi) - math.pi


def builtin_circle(speed: float = 1.0) -> tuple[Atlas, ChartVectorField]:
    """Unit circle in R² with angle charts centred at angles 0 and π.

    The field turns at constant angular ``speed``; its principal part is the
    constant ``speed`` in both charts and every transition has Jacobian 1.
    """
    charts = []
    for cid, centre in enumerate((0.0, math.pi)):
        def to_local(p, c=centre):
            p = np.asarray(p, dtype=float)
            return np.array([_wrap(math.atan2(p[1], p[0]) - c)])

        def from_local(z, c=centre):
            th = c + float(np.asarray(z, dtype=float).reshape(-1)[0])
            return np.array([math.cos(th), math.sin(th)])

        charts.append(Chart(cid, to_local, from_local, math.pi))

    def sample(rng, n):
        th = rng.uniform(-math.pi, math.pi, n)
        return np.column_stack([np.cos(th), np.sin(th)])

    atlas = Atlas(tuple(charts), _euclid, sample, dim=1, name="circle")

    def part(z):
        z = np.asarray(z, dtype=float)
        return np.full(z.shape, float(speed))

    one = lambda z: np.eye(1)
    field = ChartVectorField(
        (part, part), (abs(speed), abs(speed)), (0.0, 0.0),
        jacobians={(0, 1): one, (1, 0): one}, vectorized=True, name="circle-rotation",
    )
    return atlas, field


def _stereo(sign: float):
    # sign=+1 projects from the north pole, -1 from the south pole
    def to_local(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return p[:2] / (1.0 - sign * p[2])

    def from_local(z):
        z = np.asarray(z, dtype=float)
        s = float(z @ z)
        return np.array([2 * z[0], 2 * z[1], sign * (s - 1.0)]) / (1.0 + s)

    return to_local, from_local


def _inversion_jacobian(z):
    z = np.asarray(z, dtype=float)
    s = float(z @ z)
    return (s * np.eye(2) - 2.0 * np.outer(z, z)) / s**2


def sphere_rotation_parts(omega) -> tuple[Callable, Callable]:
    """Principal parts of ``p ↦ ω × p`` in the north and south stereographic charts.

    Writing chart points as complex numbers w, the north part is
    ``i ω₃ w + (i/2)(Ω − Ω̄ w²)`` and the south part ``i ω₃ w − (i/2)(Ω − Ω̄ w²)``
    with ``Ω = ω₁ + i ω₂``. Both accept a single point or an ``(n, 2)`` array.
    """
    w3 = float(omega[2])
    big = complex(omega[0], omega[1])

    def make(sign):
        def part(z):
            z = np.asarray(z, dtype=float)
            w = z[..., 0] + 1j * z[..., 1]
            out = 1j * w3 * w + sign * 0.5j * (big - big.conjugate() * w * w)
            return np.stack([out.real, out.imag], axis=-1)
        return part

    return make(1.0), make(-1.0)


def builtin_sphere(omega=(0.0, 0.0, 1.0), rho: float = 2.0) -> tuple[Atlas, ChartVectorField]:
    """Unit sphere with north/south stereographic charts of radius ``rho``.

    The field is the rigid rotation ``p ↦ ω × p``. Transitions are the
    inversion ``z ↦ z/‖z‖²`` with analytic Jacobian. On ``‖z‖ <= rho`` the
    principal parts satisfy ``‖v‖ <= |ω₃| rho + |Ω| (1 + rho²)/2`` and are
    ``(|ω₃| + |Ω| rho)``-Lipschitz, which are the declared constants.
    """
    if rho <= 1.0:
        raise ValueError("stereographic charts need rho > 1 to cover the equator")
    north = Chart(0, *_stereo(1.0), rho)
    south = Chart(1, *_stereo(-1.0), rho)

    def sample(rng, n):
        p = rng.standard_normal((n, 3))
        return p / np.linalg.norm(p, axis=1, keepdims=True)

    atlas = Atlas((north, south), _euclid, sample, dim=2, name="sphere")
    w3 = abs(float(omega[2]))
    wxy = math.hypot(float(omega[0]), float(omega[1]))
    L = w3 * rho + wxy * (1.0 + rho**2) / 2.0
    K = w3 + wxy * rho
    pn, ps = sphere_rotation_parts(omega)
    field = ChartVectorField(
        (pn, ps), (L, L), (K, K),
        jacobians={(0, 1): _inversion_jacobian, (1, 0): _inversion_jacobian},
        vectorized=True,
        name="sphere-rotation" if wxy == 0 else "sphere-tilted-rotation",
    )
    return atlas, field


def sphere_rotation_exact(p_start, omega, t: float) -> np.ndarray:
    """Closed-form ``exp(t [ω]×) p_start`` (Rodrigues)."""
    from scipy.spatial.transform import Rotation

    return Rotation.from_rotvec(np.asarray(omega, dtype=float) * t).apply(np.asarray(p_start, dtype=float))


def zero_field(atlas: Atlas) -> ChartVectorField:
    def part(z):
        return np.zeros(np.shape(z))

    n = len(atlas.charts)
    return ChartVectorField(tuple([part] * n), (0.0,) * n, (0.0,) * n, vectorized=True, name="zero")


BUILTIN_MANIFOLDS = {
    "circle": lambda: builtin_circle(),
    "sphere-rotation": lambda: builtin_sphere(),
    "sphere-tilted": lambda: builtin_sphere(omega=(1.0 / math.sqrt(2), 0.0, 1.0 / math.sqrt(2))),
}
