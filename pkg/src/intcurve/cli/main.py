"""``intcurve <solve|flow|certify|manifold|check> --config FILE [--out-dir DIR] [--seed N]``.

Exit codes: 0 every certificate passed, 2 bad configuration, 3 no
convergence, 4 a certificate failed, 5 chart field inconsistency.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ..core import NonFiniteError, TimeGrid
from ..gronwall import BallEscape, certify_backward, certify_pair, measure_defect, uniqueness_certificate
from ..manifold import (
    BUILTIN_MANIFOLDS,
    NoProgress,
    SolverConfig,
    check_field_consistency,
    integrate_on_manifold,
    sphere_rotation_exact,
    verify_manifold_curve,
)
from ..picard import (
    NoConvergence,
    SpaceEscape,
    build_local_flow,
    contraction_bound,
    contraction_power,
    solve_ivp,
    validate_problem,
)
from .config import ParseError, ScenarioConfig, ValidationError, load_config
from .emit import (
    build_report,
    curve_from_table,
    emit_certificate,
    emit_manifold_trajectory,
    emit_trajectory,
    read_trajectory,
)

log = logging.getLogger("intcurve")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_CERTIFICATION = 4
EXIT_CONSISTENCY = 5

SUBCOMMANDS = ("solve", "flow", "certify", "manifold", "check")


def _problem_section(cfg: ScenarioConfig, p) -> dict:
    n = contraction_power(p)
    return {
        "field": cfg.field_builtin or list(cfg.field_components),
        "dimension": cfg.dimension,
        "constants": cfg.constants(),
        "interval": {"tmin": cfg.tmin, "tmax": cfg.tmax, "t0": cfg.t0},
        "n_steps": cfg.n_steps,
        "contraction": {
            "T": p.T,
            "bound_n1": contraction_bound(p, 1),
            "n_half": n,
            "bound_n_half": contraction_bound(p, n),
        },
    }


def _reference_error(cfg: ScenarioConfig, curve) -> float | None:
    ref = cfg.reference_function()
    if ref is None:
        return None
    exact = ref(curve.grid.nodes, np.zeros_like(curve.values))
    return float(np.max(np.linalg.norm(curve.values - exact, axis=1)))


def _run_euclidean(cfg: ScenarioConfig, kind: str, out: Path, seed: int) -> int:
    p = cfg.build_problem()
    validation = validate_problem(p, cfg.validation_samples, seed)
    body = {"problem": _problem_section(cfg, p), "validation": validation.to_dict()}
    ok = validation.passed
    code = EXIT_OK

    if kind == "check":
        emit_certificate(build_report(kind, seed, body), out / "report.json")
        return EXIT_OK if ok else EXIT_CERTIFICATION

    tol_res = cfg.tol_res
    try:
        if kind == "solve":
            curve, cert = solve_ivp(p, cfg.starts[0], cfg.n_steps, cfg.tol_fix, cfg.max_iter, tol_res)
            emit_trajectory(curve, out / "trajectory.csv")
            body["convergence"] = cert.to_dict()
            body["reference_error"] = _reference_error(cfg, curve)
            ok = ok and cert.converged
        elif kind == "flow":
            table = build_local_flow(p, cfg.starts, cfg.n_steps, cfg.tol_fix, cfg.max_iter)
            body["flows"] = []
            for k, (s, curve, cert) in enumerate(zip(table.starts, table.curves, table.certificates)):
                entry = {"start": s.tolist()}
                if curve is None:
                    entry["error"] = table.failures[k]
                else:
                    emit_trajectory(curve, out / f"flow_{k}.csv")
                    entry["convergence"] = cert.to_dict()
                    entry["reference_error"] = _reference_error(cfg, curve)
                    ok = ok and cert.converged
                body["flows"].append(entry)
            if table.failures:
                code = EXIT_NO_CONVERGENCE if any(
                    "NoConvergence" in msg for msg in table.failures.values()
                ) else EXIT_CERTIFICATION
            body["gronwall"] = []
            ok_curves = [(k, c) for k, c in enumerate(table.curves) if c is not None]
            for (i, f), (j, g) in zip(ok_curves, ok_curves[1:]):
                gc = certify_pair(f, g, p.field, slack=cfg.slack)
                body["gronwall"].append({"pair": [i, j], **_gronwall_entry(gc, f.grid)})
                ok = ok and gc.pass_
        elif kind == "certify":
            f, fc = solve_ivp(p, cfg.starts[0], cfg.n_steps, cfg.tol_fix, cfg.max_iter, tol_res)
            body["convergence"] = [fc.to_dict()]
            emit_trajectory(f, out / "trajectory_f.csv")
            if cfg.certify_trajectory:
                path = Path(cfg.certify_trajectory)
                if not path.is_absolute():
                    path = cfg.base_dir / path
                try:
                    _, data = read_trajectory(path)
                    g = curve_from_table(data, f.grid)
                except (OSError, ValueError) as exc:
                    log.error("cannot use certify.trajectory: %s", exc)
                    return EXIT_CONFIG
                body["compared_trajectory"] = path.name
                body["compared_measured_eps"] = measure_defect(g, p.field)
                body["compared_claimed_eps"] = cfg.certify_eps
            else:
                g, gcert = solve_ivp(p, cfg.starts[1], cfg.n_steps, cfg.tol_fix, cfg.max_iter, tol_res)
                body["convergence"].append(gcert.to_dict())
                ok = ok and gcert.converged
                emit_trajectory(g, out / "trajectory_g.csv")
            ok = ok and fc.converged
            # a claimed defect for an imported trajectory replaces the measured one
            claim = dict(eps_g=cfg.certify_eps, strict=False) if cfg.certify_eps is not None else {}
            fwd = certify_pair(f, g, p.field, slack=cfg.slack, **claim)
            bwd = certify_backward(f, g, p.field, slack=cfg.slack, **claim)
            body["gronwall"] = {
                "forward": _gronwall_entry(fwd, f.grid),
                "backward": _gronwall_entry(bwd, f.grid),
            }
            ok = ok and fwd.pass_ and bwd.pass_
            if np.array_equal(f.at_t0(), g.at_t0()):
                uc = uniqueness_certificate(f, g, p.field, tol=2 * cfg.tol_fix + 10 * f.grid.h)
                body["gronwall"]["uniqueness"] = _gronwall_entry(uc, f.grid)
                ok = ok and uc.pass_
    except NoConvergence as exc:
        body["convergence"] = exc.certificate.to_dict()
        body["error"] = str(exc)
        emit_certificate(build_report(kind, seed, body), out / "report.json")
        return EXIT_NO_CONVERGENCE
    except (SpaceEscape, BallEscape, NonFiniteError) as exc:
        body["error"] = f"{type(exc).__name__}: {exc}"
        emit_certificate(build_report(kind, seed, body), out / "report.json")
        return EXIT_CERTIFICATION

    body["pass"] = bool(ok) and code == EXIT_OK
    emit_certificate(build_report(kind, seed, body), out / "report.json")
    if code != EXIT_OK:
        return code
    return EXIT_OK if ok else EXIT_CERTIFICATION


def _gronwall_entry(cert, grid: TimeGrid) -> dict:
    entry = cert.to_dict()
    k = cert.worst_node
    entry["worst_time"] = float(grid.nodes[k])
    return entry


def _run_manifold(cfg: ScenarioConfig, kind: str, out: Path, seed: int) -> int:
    atlas, field = BUILTIN_MANIFOLDS[cfg.manifold]()
    consistency = check_field_consistency(field, atlas, seed=seed)
    covering = atlas.check_covering(seed=seed, factor=cfg.rho_switch)
    body = {
        "manifold": cfg.manifold,
        "field": field.name,
        "chart_constants": {"L": list(field.L), "K": list(field.K)},
        "consistency": consistency.to_dict(),
        "covering_ratio": covering,
        "start": list(cfg.manifold_start),
        "t_start": cfg.t_start,
        "horizon": cfg.horizon,
        "n_steps": cfg.n_steps,
        "rho_switch_factor": cfg.rho_switch if cfg.rho_switch is not None else atlas.switch_factor,
    }
    if not consistency.passed or covering >= 1.0:
        body["pass"] = False
        emit_certificate(build_report(kind, seed, body), out / "report.json")
        return EXIT_CONSISTENCY
    if kind == "check":
        body["pass"] = True
        emit_certificate(build_report(kind, seed, body), out / "report.json")
        return EXIT_OK

    solver = SolverConfig(cfg.n_steps, cfg.rho_switch, cfg.tol_fix, cfg.max_iter)
    t0, t1 = cfg.t_start, cfg.t_start + cfg.horizon
    try:
        traj = integrate_on_manifold(field, atlas, cfg.manifold_start, t0, t1, solver)
    except NoConvergence as exc:
        body["error"] = str(exc)
        emit_certificate(build_report(kind, seed, body), out / "report.json")
        return EXIT_NO_CONVERGENCE
    except NoProgress as exc:
        body["error"] = f"NoProgress: {exc}"
        emit_certificate(build_report(kind, seed, body), out / "report.json")
        return EXIT_CERTIFICATION
    emit_manifold_trajectory(traj, atlas, out / "trajectory.csv")

    h = max(s.curve.grid.h for s in traj.segments)
    tol = 10 * h
    check = verify_manifold_curve(traj, field, atlas, tol)
    times = np.linspace(t0, t1, 2001)
    amb = np.array([traj.ambient_at(t, atlas) for t in times])
    drift = float(np.max(np.abs(np.linalg.norm(amb, axis=1) - 1.0)))
    exact = _builtin_exact(cfg, times - t0)
    body.update(
        segments=len(traj.segments),
        chart_switches=traj.chart_switches,
        switch_times=traj.switch_times,
        max_defect=check.max_defect,
        defect_tol=tol,
        max_switch_gap=check.max_switch_gap,
        norm_drift=drift,
        reference_error=float(np.max(np.linalg.norm(amb - exact, axis=1))),
    )
    ok = check.passed and drift <= 1e-4
    body["pass"] = ok
    emit_certificate(build_report(kind, seed, body), out / "report.json")
    return EXIT_OK if ok else EXIT_CERTIFICATION


def _builtin_exact(cfg: ScenarioConfig, elapsed: np.ndarray) -> np.ndarray:
    p0 = np.asarray(cfg.manifold_start, dtype=float)
    if cfg.manifold == "circle":
        th = math.atan2(p0[1], p0[0]) + elapsed
        return np.column_stack([np.cos(th), np.sin(th)])
    omega = {"sphere-rotation": (0.0, 0.0, 1.0), "sphere-tilted": (1 / math.sqrt(2), 0.0, 1 / math.sqrt(2))}[cfg.manifold]
    return np.array([sphere_rotation_exact(p0, omega, t) for t in elapsed])


def run(cfg: ScenarioConfig, subcommand: str | None = None, out_dir=None, seed: int | None = None) -> int:
    kind = subcommand or cfg.kind
    if kind not in SUBCOMMANDS:
        log.error("unknown subcommand %s", kind)
        return EXIT_CONFIG
    if kind != "check" and kind != cfg.kind:
        log.error("subcommand %r does not match the scenario kind %r", kind, cfg.kind)
        return EXIT_CONFIG
    out = Path(out_dir if out_dir is not None else cfg.base_dir / cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    if cfg.kind == "manifold":
        return _run_manifold(cfg, kind, out, seed)
    return _run_euclidean(cfg, kind, out, seed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="intcurve", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="scenario TOML file")
    parser.add_argument("--out-dir", default=None, help="output directory (default: output.dir of the config)")
    parser.add_argument("--seed", type=int, default=None, help="sampling seed (default: seed of the config)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        log.error("--seed must be an unsigned 64-bit integer")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except (ParseError, ValidationError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    code = run(cfg, args.subcommand, args.out_dir, args.seed)
    log.info("%s finished with exit code %d", args.subcommand, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
