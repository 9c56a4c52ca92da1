"""Scenario files: TOML in, validated :class:`ScenarioConfig` out."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..core import TimeInterval, VectorField
from ..manifold import BUILTIN_MANIFOLDS
from ..picard import CONDITION_4, PicardProblem
from .expr import ExprSyntaxError, UnknownVariable, compile_components

KINDS = ("solve", "flow", "certify", "manifold")


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid scenario:\n  - " + "\n  - ".join(errors))
        self.errors = errors


def _linear(t, x):
    return np.asarray(x, dtype=float)


def _zero(t, x):
    return np.zeros(np.shape(x))


def _rotation(t, x):
    x = np.asarray(x, dtype=float)
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


# name -> (function, required dimension or None)
BUILTIN_FIELDS = {
    "zero": (_zero, None),
    "linear": (_linear, None),
    "rotation": (_rotation, 2),
}


@dataclass
class ScenarioConfig:
    kind: str
    dimension: int = 1
    field_builtin: str | None = None
    field_components: list[str] | None = None
    reference: list[str] | None = None
    a: float = 0.0
    r: float = 0.0
    L: float = 0.0
    K: float = 0.0
    x0: list[float] = field(default_factory=list)
    tmin: float = 0.0
    tmax: float = 1.0
    t0: float = 0.0
    n_steps: int = 1000
    starts: list[list[float]] = field(default_factory=list)
    tol_fix: float = 1e-10
    max_iter: int = 200
    slack: float | None = None
    tol_res: float | None = None
    certify_trajectory: str | None = None
    certify_eps: float | None = None
    manifold: str | None = None
    manifold_start: list[float] | None = None
    horizon: float = 1.0
    t_start: float = 0.0
    rho_switch: float | None = None
    out_dir: str = "out"
    seed: int = 0
    validation_samples: int = 1000
    name: str = ""
    base_dir: Path = field(default_factory=Path)

    def build_field(self) -> VectorField:
        if self.field_builtin is not None:
            fn = BUILTIN_FIELDS[self.field_builtin][0]
        else:
            fn, _ = compile_components(self.field_components, self.dimension)
        return VectorField(
            self.dimension, fn, self.L, self.K, self.x0, self.a,
            vectorized=True, name=self.field_builtin or ", ".join(self.field_components),
        )

    def build_problem(self) -> PicardProblem:
        iv = TimeInterval(self.tmin, self.tmax, self.t0)
        return PicardProblem(self.build_field(), iv, self.x0, self.a, self.r, self.L, self.K)

    def reference_function(self):
        if not self.reference:
            return None
        fn, _ = compile_components(self.reference, self.dimension)
        return fn

    def constants(self) -> dict:
        return {"a": self.a, "r": self.r, "L": self.L, "K": self.K, "x0": list(self.x0)}


def _get(table: dict, key: str, kind, errors: list[str], default=None, where: str = ""):
    if key not in table:
        return default
    val = table[key]
    label = f"{where}{key}"
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            errors.append(f"{label} must be a number, got {val!r}")
            return default
        val = float(val)
        if not math.isfinite(val):
            errors.append(f"{label} must be finite, got {val}")
            return default
        return val
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            errors.append(f"{label} must be an integer, got {val!r}")
            return default
        return val
    if kind is str:
        if not isinstance(val, str):
            errors.append(f"{label} must be a string, got {val!r}")
            return default
        return val
    if kind == "vector":
        if not isinstance(val, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in val
        ):
            errors.append(f"{label} must be a list of numbers, got {val!r}")
            return default
        vec = [float(v) for v in val]
        if not all(math.isfinite(v) for v in vec):
            errors.append(f"{label} must be finite, got {vec}")
            return default
        return vec
    if kind == "strings":
        if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
            errors.append(f"{label} must be a list of strings, got {val!r}")
            return default
        return list(val)
    raise TypeError(kind)


def parse_config(data: dict, name: str = "", base_dir: Path | None = None) -> ScenarioConfig:
    """Validate a decoded TOML document, collecting every problem before raising."""
    errors: list[str] = []
    kind = _get(data, "kind", str, errors, "solve")
    if kind not in KINDS:
        errors.append(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    cfg = ScenarioConfig(kind=kind, name=name, base_dir=base_dir or Path("."))
    cfg.seed = _get(data, "seed", int, errors, 0)
    if cfg.seed < 0:
        errors.append(f"seed must be nonnegative, got {cfg.seed}")
    cfg.out_dir = _get(data.get("output", {}), "dir", str, errors, "out", "output.")

    if kind == "manifold":
        m = data.get("manifold", {})
        cfg.manifold = _get(m, "name", str, errors, None, "manifold.")
        if cfg.manifold is None:
            errors.append("manifold.name is required")
        elif cfg.manifold not in BUILTIN_MANIFOLDS:
            errors.append(f"manifold.name must be one of {sorted(BUILTIN_MANIFOLDS)}, got {cfg.manifold!r}")
        cfg.manifold_start = _get(m, "start", "vector", errors, None, "manifold.")
        if cfg.manifold_start is None:
            errors.append("manifold.start is required")
        cfg.horizon = _get(m, "horizon", float, errors, 1.0, "manifold.")
        if cfg.horizon <= 0:
            errors.append(f"manifold.horizon must be positive, got {cfg.horizon}")
        cfg.t_start = _get(m, "t_start", float, errors, 0.0, "manifold.")
        cfg.rho_switch = _get(m, "rho_switch", float, errors, None, "manifold.")
        if cfg.rho_switch is not None and not 0 < cfg.rho_switch < 1:
            errors.append(f"manifold.rho_switch is a fraction of the chart radius in (0, 1), got {cfg.rho_switch}")
        cfg.n_steps = _get(m, "n_steps", int, errors, 1000, "manifold.")
        tol = data.get("tolerances", {})
        cfg.tol_fix = _get(tol, "tol_fix", float, errors, 1e-12, "tolerances.")
        cfg.max_iter = _get(tol, "max_iter", int, errors, 200, "tolerances.")
        if cfg.manifold in BUILTIN_MANIFOLDS and cfg.manifold_start is not None:
            atlas, _ = BUILTIN_MANIFOLDS[cfg.manifold]()
            amb = len(atlas.sample_ambient(np.random.default_rng(0), 1)[0])
            if len(cfg.manifold_start) != amb:
                errors.append(f"manifold.start must have {amb} ambient coordinates")
            elif abs(np.linalg.norm(cfg.manifold_start) - 1.0) > 1e-9:
                errors.append("manifold.start must lie on the unit sphere/circle (norm 1)")
        _check_steps(cfg, errors)
        if errors:
            raise ValidationError(errors)
        return cfg

    cfg.dimension = _get(data, "dimension", int, errors, 1)
    if cfg.dimension < 1:
        errors.append(f"dimension must be at least 1, got {cfg.dimension}")
    d = max(cfg.dimension, 1)

    f = data.get("field", {})
    cfg.field_builtin = _get(f, "builtin", str, errors, None, "field.")
    cfg.field_components = _get(f, "components", "strings", errors, None, "field.")
    cfg.reference = _get(f, "reference", "strings", errors, None, "field.")
    if (cfg.field_builtin is None) == (cfg.field_components is None):
        errors.append("field needs exactly one of field.builtin or field.components")
    if cfg.field_builtin is not None:
        if cfg.field_builtin not in BUILTIN_FIELDS:
            errors.append(f"field.builtin must be one of {sorted(BUILTIN_FIELDS)}, got {cfg.field_builtin!r}")
        else:
            need = BUILTIN_FIELDS[cfg.field_builtin][1]
            if need is not None and need != d:
                errors.append(f"builtin field {cfg.field_builtin!r} needs dimension {need}")
    for label, exprs in (("components", cfg.field_components), ("reference", cfg.reference)):
        if exprs is None:
            continue
        if len(exprs) != d:
            errors.append(f"field.{label} needs {d} expressions, got {len(exprs)}")
            continue
        try:
            compile_components(exprs, d)
        except (ExprSyntaxError, UnknownVariable) as exc:
            errors.append(f"field.{label}: {exc}")

    c = data.get("constants", {})
    for key in ("a", "r", "L", "K"):
        val = _get(c, key, float, errors, None, "constants.")
        if val is None:
            if key not in c:
                errors.append(f"constants.{key} is required")
            val = 0.0
        elif val < 0:
            errors.append(f"constants.{key} must be nonnegative, got {val}")
        setattr(cfg, key, val)
    cfg.x0 = _get(c, "x0", "vector", errors, [0.0] * d, "constants.")
    if len(cfg.x0) != d:
        errors.append(f"constants.x0 must have {d} coordinates")

    iv = data.get("interval", {})
    cfg.tmin = _get(iv, "tmin", float, errors, 0.0, "interval.")
    cfg.tmax = _get(iv, "tmax", float, errors, 1.0, "interval.")
    cfg.t0 = _get(iv, "t0", float, errors, cfg.tmin, "interval.")
    interval_ok = cfg.tmin <= cfg.t0 <= cfg.tmax
    if not interval_ok:
        errors.append(f"interval needs tmin <= t0 <= tmax, got {cfg.tmin}, {cfg.t0}, {cfg.tmax}")

    cfg.n_steps = _get(data, "n_steps", int, errors, 1000)
    _check_steps(cfg, errors)
    if interval_ok and cfg.tmax > cfg.tmin and cfg.n_steps >= 2:
        pos = (cfg.t0 - cfg.tmin) / ((cfg.tmax - cfg.tmin) / cfg.n_steps)
        if abs(pos - round(pos)) > 1e-9 * max(1.0, pos):
            errors.append(f"t0 = {cfg.t0} is not a node of the {cfg.n_steps}-step grid")

    starts = data.get("starts", [list(cfg.x0)])
    if not isinstance(starts, list) or not starts:
        errors.append("starts must be a non-empty list of vectors")
        starts = []
    cfg.starts = []
    for k, s in enumerate(starts):
        vec = _get({"s": s}, "s", "vector", errors, None, f"starts[{k}] ")
        if vec is None:
            continue
        if len(vec) != d:
            errors.append(f"starts[{k}] must have {d} coordinates")
        elif len(cfg.x0) == d and np.linalg.norm(np.subtract(vec, cfg.x0)) > cfg.r + 1e-9:
            errors.append(f"starts[{k}] = {vec} lies outside the closed ball of radius r = {cfg.r} about x0")
        cfg.starts.append(vec)

    tol = data.get("tolerances", {})
    cfg.tol_fix = _get(tol, "tol_fix", float, errors, 1e-10, "tolerances.")
    cfg.max_iter = _get(tol, "max_iter", int, errors, 200, "tolerances.")
    cfg.slack = _get(tol, "slack", float, errors, None, "tolerances.")
    cfg.tol_res = _get(tol, "tol_res", float, errors, None, "tolerances.")
    if cfg.tol_fix <= 0:
        errors.append("tolerances.tol_fix must be positive")
    if cfg.max_iter < 1:
        errors.append("tolerances.max_iter must be at least 1")
    if cfg.slack is not None and cfg.slack < 0:
        errors.append("tolerances.slack must be nonnegative")
    cfg.validation_samples = _get(data.get("validation", {}), "samples", int, errors, 1000, "validation.")
    if cfg.validation_samples < 2:
        errors.append("validation.samples must be at least 2")

    if kind == "certify":
        cert = data.get("certify", {})
        cfg.certify_trajectory = _get(cert, "trajectory", str, errors, None, "certify.")
        cfg.certify_eps = _get(cert, "eps", float, errors, None, "certify.")
        if cfg.certify_eps is not None and (cfg.certify_eps < 0 or not cfg.certify_trajectory):
            errors.append("certify.eps must be nonnegative and needs certify.trajectory")
        need = 1 if cfg.certify_trajectory else 2
        if len(cfg.starts) != need:
            errors.append(f"certify needs exactly {need} start(s), got {len(cfg.starts)}")

    # strengthened condition 4, echoed verbatim
    lhs = cfg.L * max(cfg.tmax - cfg.t0, cfg.t0 - cfg.tmin)
    if lhs > cfg.a - cfg.r:
        errors.append(
            f"constants violate {CONDITION_4}: L * max(...) = {lhs!r} > a - r = {cfg.a - cfg.r!r}"
        )
    if cfg.r > cfg.a:
        errors.append(f"constants need r ≤ a, got r = {cfg.r}, a = {cfg.a}")
    if errors:
        raise ValidationError(errors)
    return cfg


def _check_steps(cfg: ScenarioConfig, errors: list[str]) -> None:
    if cfg.n_steps < 2:
        errors.append(f"n_steps must be at least 2, got {cfg.n_steps}")


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_config(data, name=path.stem, base_dir=path.parent)
