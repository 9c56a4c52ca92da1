"""Acceptance criteria, one test each; every test reports a PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from intcurve.cli.main import main
from intcurve.cli.config import load_config
from intcurve.core import SampledCurve, TimeGrid, TimeInterval, sup_distance
from intcurve.gronwall import certify_pair, certify_uniqueness, gronwall_bound
from intcurve.manifold import (
    SolverConfig,
    TOL_CHART,
    builtin_circle,
    builtin_sphere,
    certify_manifold_uniqueness,
    check_field_consistency,
    integrate_on_manifold,
    trajectory_distance,
    verify_manifold_curve,
)
from intcurve.picard import (
    build_local_flow,
    contraction_bound,
    next_iterate,
    solve_ivp,
    verify_integral_curve,
)

from conftest import ACCEPTANCE_LINES, linear_field, random_member

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_exponential_oracle(exp_problem):
    curve, cert = solve_ivp(exp_problem, [1.0], n_steps=1000, tol_fix=1e-12)
    err = float(np.max(np.abs(curve.values[:, 0] - np.exp(curve.grid.nodes))))
    check = verify_integral_curve(curve, exp_problem.field, 10 * curve.grid.h)
    ok = exp_problem.condition_4_holds and err <= 1e-4 and check.passed and cert.converged
    record(1, "exponential oracle", ok, f"max error {err:.2e} <= 1e-4, defect {check.max_defect:.2e} <= {10 * curve.grid.h:.0e}")


def test_02_picard_taylor(exp_problem):
    grid = exp_problem.grid(10000)
    t = grid.nodes
    alpha = SampledCurve.constant(grid, [1.0])
    worst = 0.0
    for k in range(1, 9):
        alpha = next_iterate(exp_problem, [1.0], alpha)
        taylor = sum(t**j / math.factorial(j) for j in range(k + 1))
        worst = max(worst, float(np.max(np.abs(alpha.values[:, 0] - taylor))))
    record(2, "Picard/Taylor equivalence", worst <= 1e-6, f"max deviation over k <= 8 is {worst:.2e} <= 1e-6")


def test_03_contraction(exp_problem):
    rng = np.random.default_rng(3)
    grid = exp_problem.grid(1000)
    L = exp_problem.L
    worst = 0.0
    for k in range(50):
        kind = "walk" if k % 2 else "smooth"
        a = random_member(rng, grid, [1.0], L, kind)
        b = random_member(rng, grid, [1.0], L, kind)
        d0 = sup_distance(a, b)
        for _ in range(4):
            a = next_iterate(exp_problem, [1.0], a)
            b = next_iterate(exp_problem, [1.0], b)
        worst = max(worst, sup_distance(a, b) / d0)
    limit = contraction_bound(exp_problem, 4) + 0.05
    ok = worst <= limit and contraction_bound(exp_problem, 4) == pytest.approx(1 / 384)
    record(3, "contraction", ok, f"worst 4-step ratio {worst:.3e} <= {limit:.4f}")


def test_04_gronwall_equality():
    grid = TimeGrid(TimeInterval(0.0, 1.0, 0.0), 1000)
    t = grid.nodes
    f = SampledCurve(grid, ((1.0 + 0.1) * np.exp(t))[:, None])
    g = SampledCurve(grid, np.exp(t)[:, None])
    observed = np.abs(f.values[:, 0] - g.values[:, 0])
    bound = np.array([gronwall_bound(0.1, 1.0, 0.0, x) for x in t])
    rel = float(np.max(np.abs(observed - bound) / bound))
    record(4, "Gronwall equality case", rel <= 1e-6, f"max relative gap {rel:.2e} <= 1e-6")


def test_05_zero_K_branch():
    exact = gronwall_bound(2, 0, 3, 4)
    rng = np.random.default_rng(5)
    worst = 0.0
    for delta, eps, x in rng.uniform(0, [5, 5, 3], (100, 3)):
        lin = delta + eps * x
        worst = max(worst, abs(gronwall_bound(delta, 1e-8, eps, x) - lin) / (lin + 1))
    ok = exact == 14 and worst <= 1e-6
    record(5, "K = 0 branch", ok, f"bound(2,0,3,4) = {exact!r}, near-zero K scaled gap {worst:.2e} <= 1e-6")


def test_06_uniqueness(exp_problem):
    rng = np.random.default_rng(6)
    grid = exp_problem.grid(1000)
    tol_fix = 1e-12
    runs = [
        solve_ivp(exp_problem, [1.0], 1000, tol_fix, initial=random_member(rng, grid, [1.0], 1.5, kind))[0]
        for kind in ("walk", "smooth")
    ]
    gap = sup_distance(*runs)
    tol = 2 * tol_fix + 10 * grid.h
    certified = certify_uniqueness(runs[0], runs[1], exp_problem.field, tol=tol)
    record(6, "uniqueness", gap <= tol and certified, f"sup distance {gap:.2e} <= {tol:.2e}, certify_uniqueness={certified}")


def test_07_local_flow(flow_problem):
    p = flow_problem
    table = build_local_flow(p, [[0.9], [1.0], [1.1]], n_steps=1000, tol_fix=1e-12)
    grids_shared = all(c.grid == table.grid for c in table.curves)
    # group law φ_s(φ_t(x)) = φ_{s+t}(x) with t a grid node
    grid = table.grid
    k = grid.i0 + 200
    t = float(grid.nodes[k])
    y = table.flow([1.0], t)
    through_y, _ = solve_ivp(p, y, 1000, 1e-12)
    shift = k - grid.i0
    lhs = through_y.values[: grid.n_steps + 1 - shift]
    rhs = table.curves[1].values[shift:]
    group_err = float(np.max(np.abs(lhs - rhs)))
    margins = []
    for i, j in ((0, 1), (1, 2), (0, 2)):
        cert = certify_pair(table.curves[i], table.curves[j], p.field)
        margins.append(cert.per_node_margin)
    m = np.stack(margins)
    # the margin at tmin is the bound δ minus the distance δ, identically zero
    positive = bool(np.all(m[:, 1:] > 0) and np.all(m[:, 0] >= 0))
    ok = table.ok and grids_shared and group_err <= 5e-4 and positive
    record(7, "local flow", ok, f"group law error {group_err:.2e} <= 5e-4, min margin after tmin {m[:, 1:].min():.2e} > 0")


def test_08_circle():
    atlas, field = builtin_circle()
    traj = integrate_on_manifold(field, atlas, [1.0, 0.0], 0.0, 20.0)
    end = traj.end_point(atlas)
    angle_err = abs(math.remainder(math.atan2(end[1], end[0]) - 20.0, 2 * math.pi))
    h = max(s.curve.grid.h for s in traj.segments)
    check = verify_manifold_curve(traj, field, atlas, tol=10 * h)
    gap_tol = TOL_CHART + 2 * h * max(field.L)
    ok = traj.chart_switches >= 2 and angle_err <= 1e-3 and check.passed and check.max_switch_gap <= gap_tol
    record(8, "circle", ok, f"{traj.chart_switches} switches, angle error {angle_err:.2e}, switch gap {check.max_switch_gap:.1e} <= {gap_tol:.1e}")


def test_09_sphere():
    atlas, field = builtin_sphere()
    start = time.perf_counter()
    traj = integrate_on_manifold(field, atlas, [1.0, 0.0, 0.0], 0.0, 50.0)
    ts = np.linspace(0.0, 50.0, 2001)
    amb = np.array([traj.ambient_at(t, atlas) for t in ts])
    elapsed = time.perf_counter() - start
    exact = np.column_stack([np.cos(ts), np.sin(ts), np.zeros_like(ts)])
    err = float(np.max(np.linalg.norm(amb - exact, axis=1)))
    drift = float(np.max(np.abs(np.linalg.norm(amb, axis=1) - 1.0)))
    ok = err <= 1e-3 and drift <= 1e-4 and elapsed <= 60.0
    record(9, "sphere rotation", ok, f"ambient error {err:.2e}, norm drift {drift:.1e}, {elapsed:.2f} s")


@pytest.mark.parametrize("omega", [(0.0, 0.0, 1.0), (1 / math.sqrt(2), 0.0, 1 / math.sqrt(2))])
def test_10_manifold_uniqueness(omega):
    atlas, field = builtin_sphere(omega=omega)
    p0 = [1.0, 0.0, 0.0] if omega[0] == 0 else [0.0, 1.0, 0.0]
    cfg_a, cfg_b = SolverConfig(n_steps=1000, switch_factor=0.8), SolverConfig(n_steps=1400, switch_factor=0.6)
    ta = integrate_on_manifold(field, atlas, p0, 0.0, 20.0, cfg_a)
    tb = integrate_on_manifold(field, atlas, p0, 0.0, 20.0, cfg_b)
    gap = trajectory_distance(ta, tb, atlas, np.linspace(0.0, 20.0, 401))
    ok = gap <= 1e-3 and certify_manifold_uniqueness(field, atlas, p0, (0.0, 20.0), cfg_a, cfg_b, 1e-3)
    record(10, f"manifold uniqueness ω={tuple(round(w, 3) for w in omega)}", ok, f"ambient gap {gap:.2e} <= 1e-3")


def test_11_field_consistency():
    atlas, field = builtin_sphere()
    analytic = check_field_consistency(field, atlas, mode="analytic").max_violation
    fd = check_field_consistency(field, atlas, mode="fd", h_fd=1e-5).max_violation
    ok = analytic <= 1e-6 and fd <= 1e-4
    record(11, "field consistency", ok, f"analytic {analytic:.1e} <= 1e-6, finite-difference {fd:.1e} <= 1e-4")


def _run_corpus(root: Path) -> dict:
    results = {}
    for cfg_path in sorted(SCENARIOS.glob("*.toml")):
        cfg = load_config(cfg_path)
        out = root / cfg_path.stem
        code = main([cfg.kind, "--config", str(cfg_path), "--out-dir", str(out)])
        results[cfg_path.stem] = (code, out)
    return results


def test_12_cli_determinism(tmp_path):
    import json

    first = _run_corpus(tmp_path / "a")
    second = _run_corpus(tmp_path / "b")
    identical, verdicts = True, True
    n_files = 0
    for name, (code, out) in first.items():
        code_b, out_b = second[name]
        verdicts &= code == code_b
        passed = json.loads((out / "report.json").read_text())["pass"]
        verdicts &= (code == 0) == passed
        for path in sorted(out.glob("*.csv")):
            n_files += 1
            identical &= path.read_bytes() == (out_b / path.name).read_bytes()
    ok = identical and verdicts and n_files > 0 and len(first) >= 8
    record(12, "CLI determinism", ok, f"{len(first)} scenarios, {n_files} trajectory files byte-identical={identical}, exit codes match verdicts={verdicts}")
