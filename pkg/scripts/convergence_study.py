"""Error and defect against grid size for the exponential oracle and a tilted sphere rotation.

The trapezoid Picard fixed point is second order in h; the difference-quotient
defect is first order because of the one-sided end stencils.

    python3 scripts/convergence_study.py
"""
from __future__ import annotations

import math

import numpy as np

from intcurve.core import TimeInterval, VectorField
from intcurve.manifold import SolverConfig, builtin_sphere, integrate_on_manifold, sphere_rotation_exact
from intcurve.picard import PicardProblem, contraction_power, solve_ivp, verify_integral_curve


def exp_problem() -> PicardProblem:
    field = VectorField(1, lambda t, x: np.asarray(x), 2.0, 1.0, [0.0], 2.0, vectorized=True, name="x")
    return PicardProblem(field, TimeInterval(-0.5, 0.5, 0.0), [0.0], 2.0, 1.0, 2.0, 1.0)


def exponential_table(sizes=(50, 100, 200, 400, 800, 1600)):
    p = exp_problem()
    rows = []
    for n in sizes:
        curve, cert = solve_ivp(p, [1.0], n_steps=n, tol_fix=1e-13)
        err = float(np.max(np.abs(curve.values[:, 0] - np.exp(curve.grid.nodes))))
        defect = verify_integral_curve(curve, p.field, math.inf).max_defect
        rows.append((n, err, defect, cert.iterations))
    return rows


TILT = (1 / math.sqrt(2), 0.0, 1 / math.sqrt(2))


def sphere_table(sizes=(125, 250, 500, 1000), horizon=10.0):
    atlas, field = builtin_sphere(omega=TILT)
    start = [0.0, 1.0, 0.0]
    rows = []
    for n in sizes:
        traj = integrate_on_manifold(field, atlas, start, 0.0, horizon, SolverConfig(n_steps=n))
        ts = np.linspace(0.0, horizon, 501)
        amb = np.array([traj.ambient_at(t, atlas) for t in ts])
        exact = np.array([sphere_rotation_exact(start, TILT, t) for t in ts])
        rows.append((n, float(np.max(np.linalg.norm(amb - exact, axis=1))), traj.chart_switches))
    return rows


def orders(values):
    return [math.log2(a / b) if b > 0 else math.nan for a, b in zip(values, values[1:])]


def main() -> None:
    p = exp_problem()
    print(f"v = x on [-0.5, 0.5]: (K T)^n / n! <= 1/2 from n = {contraction_power(p)}")
    rows = exponential_table()
    errs = [r[1] for r in rows]
    defs = [r[2] for r in rows]
    print(f"{'n_steps':>8}{'max error':>12}{'order':>7}{'defect':>12}{'order':>7}{'iters':>7}")
    for k, (n, err, defect, iters) in enumerate(rows):
        oe = f"{orders(errs)[k - 1]:7.2f}" if k else " " * 7
        od = f"{orders(defs)[k - 1]:7.2f}" if k else " " * 7
        print(f"{n:>8}{err:>12.3e}{oe}{defect:>12.3e}{od}{iters:>7}")

    print("\nsphere rotation about (1, 0, 1)/sqrt(2) from (0, 1, 0), horizon 10")
    rows = sphere_table()
    errs = [r[1] for r in rows]
    print(f"{'n_steps':>8}{'max error':>12}{'order':>7}{'switches':>9}")
    for k, (n, err, sw) in enumerate(rows):
        oe = f"{orders(errs)[k - 1]:7.2f}" if k else " " * 7
        print(f"{n:>8}{err:>12.3e}{oe}{sw:>9}")


if __name__ == "__main__":
    main()
