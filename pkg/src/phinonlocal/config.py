"""Scenario configuration files (TOML).

Scalar classes use top-level tables::

    name = "ps_p2"
    class = "sublinear_scalar"

    [operator]              # N-function of the operator
    kind = "power_law"
    p = 2.0
    [norm_f]                # Psi, defaults to the operator
    [norm_g]                # Lambda, defaults to the operator
    [exponents]             # alpha, beta, gamma, xi (default 0)
    [params]                # lambda (default 1), theta (default 0), mode
    [mesh]                  # dim, extents, counts, delta (optional)
    [solver]                # SolverOptions fields
    [iteration]             # tol, max_steps, descending, experimental
    [sweep]                 # lambda / theta = [lo, hi, n], spacing, mesh_levels

Systems put ``operator``, ``norm_f``, ``norm_g``, ``exponents`` and an
optional ``f`` / ``g`` table under ``[eq1]`` and ``[eq2]``.  A nonlinearity
table ``{own_power = a, driver_power = b, own_shift = c}`` stands for
``(c + own)^a * driver^b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigError, PhiNonlocalError
from .grid import Mesh, make_mesh
from .nfunction import from_config
from .philap import SolverOptions
from .problem import Equation, ProblemSpec

__all__ = ["Scenario", "SweepRange", "load_scenario", "parse_scenario", "PROBLEM_CLASSES"]

PROBLEM_CLASSES = {
    "sublinear_scalar": 1,
    "concave_convex_scalar": 1,
    "sublinear_system": 2,
    "concave_convex_system": 2,
    "generalized_system": 2,
    "torsion_study": 1,
    "norm_study": 1,
}
_SOLVER_KEYS = {f for f in SolverOptions.__dataclass_fields__}


@dataclass(frozen=True)
class SweepRange:
    lo: float
    hi: float
    n: int
    spacing: str = "linear"

    @property
    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.logspace(np.log10(self.lo), np.log10(self.hi), self.n)
        return np.linspace(self.lo, self.hi, self.n)


@dataclass
class Scenario:
    name: str
    problem_class: str
    spec: ProblemSpec
    mesh: Mesh
    solver: SolverOptions
    mode: str | None = None
    delta: float | None = None
    tol: float = 1e-8
    max_steps: int = 200
    descending: bool = False
    experimental: bool = False
    sweeps: dict = field(default_factory=dict)
    mesh_levels: int = 3
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_system(self) -> bool:
        return PROBLEM_CLASSES[self.problem_class] == 2


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_scenario(raw, default_name=path.stem)


def _table(raw, key, required=False) -> dict:
    val = raw.get(key)
    if val is None:
        if required:
            raise ConfigError(f"missing [{key}] section")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"[{key}] must be a table")
    return val


def _number(tbl, key, where, default=None, positive=False, nonneg=False):
    if key not in tbl:
        if default is None:
            raise ConfigError(f"missing key {where}.{key}")
        return default
    val = tbl[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {val!r}")
    val = float(val)
    if not np.isfinite(val) or (positive and val <= 0) or (nonneg and val < 0):
        kind = "positive" if positive else "nonnegative" if nonneg else "finite"
        raise ConfigError(f"{where}.{key} must be {kind}, got {val}")
    return val


def _nfunction(tbl, where):
    try:
        return from_config(tbl)
    except PhiNonlocalError as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def _nonlinearity(tbl, where):
    if not tbl:
        return None, None
    unknown = set(tbl) - {"own_power", "driver_power", "own_shift"}
    if unknown:
        raise ConfigError(f"[{where}] unexpected keys {sorted(unknown)}")
    a = _number(tbl, "own_power", where, 0.0, nonneg=True)
    b = _number(tbl, "driver_power", where, 0.0, nonneg=True)
    c = _number(tbl, "own_shift", where, 1.0, nonneg=True)

    def fn(own, driver):
        return (c + np.maximum(own, 0.0)) ** a * np.maximum(driver, 0.0) ** b

    # growth exponent used by the hypothesis checks
    return fn, a + b


def _equation(tbl, where, theta):
    op = _nfunction(_table(tbl, "operator", required=True), f"{where}operator")
    norm_f = _nfunction(tbl["norm_f"], f"{where}norm_f") if "norm_f" in tbl else op
    norm_g = _nfunction(tbl["norm_g"], f"{where}norm_g") if "norm_g" in tbl else (op if theta > 0 else None)
    ex = _table(tbl, "exponents", required=True)
    ew = f"{where}exponents"
    unknown = set(ex) - {"alpha", "beta", "gamma", "xi"}
    if unknown:
        raise ConfigError(f"[{ew}] unexpected keys {sorted(unknown)}")
    alpha = _number(ex, "alpha", ew, nonneg=True)
    beta = _number(ex, "beta", ew, 0.0, nonneg=True)
    gamma = _number(ex, "gamma", ew, 0.0, nonneg=True)
    xi = _number(ex, "xi", ew, 0.0, nonneg=True)
    f, fgrowth = _nonlinearity(_table(tbl, "f"), f"{where}f")
    g, ggrowth = _nonlinearity(_table(tbl, "g"), f"{where}g")
    if "beta" in ex and f is not None:
        raise ConfigError(f"[{where}f] replaces exponents.beta; give only one")
    if f is not None:
        beta = fgrowth
    if g is not None:
        xi = ggrowth
    return Equation(op, norm_f, alpha, beta, norm_g, gamma, xi, f, g)


def _mesh(tbl):
    dim = tbl.get("dim", 1)
    if dim not in (1, 2):
        raise ConfigError(f"mesh.dim must be 1 or 2, got {dim!r}")
    extents = tbl.get("extents", [[0.0, 1.0]] * dim)
    counts = tbl.get("counts")
    if counts is None:
        raise ConfigError("missing key mesh.counts")
    if isinstance(counts, int):
        counts = [counts] * dim
    if dim == 1 and extents and not isinstance(extents[0], list):
        extents = [extents]
    try:
        return make_mesh(dim, extents, counts)
    except (PhiNonlocalError, ValueError, TypeError) as exc:
        raise ConfigError(f"[mesh] {exc}") from exc


def _sweeps(tbl):
    out = {}
    spacing = tbl.get("spacing", "linear")
    if spacing not in ("linear", "log"):
        raise ConfigError(f"sweep.spacing must be 'linear' or 'log', got {spacing!r}")
    for axis in ("lambda", "theta"):
        if axis not in tbl:
            continue
        val = tbl[axis]
        if not (isinstance(val, list) and len(val) == 3):
            raise ConfigError(f"sweep.{axis} must be [lo, hi, n]")
        lo, hi, n = val
        if not (isinstance(n, int) and n >= 1):
            raise ConfigError(f"sweep.{axis}: n must be a positive integer, got {n!r}")
        if not (isinstance(lo, (int, float)) and isinstance(hi, (int, float)) and 0 < lo <= hi):
            raise ConfigError(f"sweep.{axis}: need 0 < lo <= hi, got [{lo}, {hi}]")
        out[axis] = SweepRange(float(lo), float(hi), n, spacing)
    return out


def parse_scenario(raw: dict, default_name: str = "scenario") -> Scenario:
    cls = raw.get("class")
    if cls not in PROBLEM_CLASSES:
        raise ConfigError(f"class must be one of {sorted(PROBLEM_CLASSES)}, got {cls!r}")
    params = _table(raw, "params")
    lam = _number(params, "lambda", "params", 1.0, positive=True)
    theta = _number(params, "theta", "params", 0.0, nonneg=True)
    mode = params.get("mode")
    if cls.startswith("concave_convex"):
        if mode not in ("fix_theta", "fix_lambda"):
            raise ConfigError(f"params.mode must be 'fix_theta' or 'fix_lambda', got {mode!r}")
        if theta <= 0:
            raise ConfigError("params.theta must be positive for a concave-convex problem")
    elif theta > 0 and cls.startswith("sublinear"):
        raise ConfigError("params.theta must be 0 for a sublinear problem")

    if PROBLEM_CLASSES[cls] == 2:
        eqs = [_equation(_table(raw, key, required=True), f"{key}.", theta) for key in ("eq1", "eq2")]
    elif cls in ("torsion_study", "norm_study"):
        tbl = dict(raw)
        tbl.setdefault("exponents", {"alpha": 0.0})
        eqs = [_equation(tbl, "", theta)]
    else:
        eqs = [_equation(raw, "", theta)]
    if cls != "generalized_system" and any(eq.custom_nonlinearity for eq in eqs):
        raise ConfigError("custom f/g tables are only allowed for class generalized_system")
    try:
        spec = ProblemSpec(tuple(eqs), lam, theta)
    except PhiNonlocalError as exc:
        raise ConfigError(str(exc)) from exc

    mtbl = _table(raw, "mesh", required=True)
    mesh = _mesh(mtbl)
    delta = _number(mtbl, "delta", "mesh", positive=True) if "delta" in mtbl else None

    stbl = _table(raw, "solver")
    unknown = set(stbl) - _SOLVER_KEYS
    if unknown:
        raise ConfigError(f"[solver] unexpected keys {sorted(unknown)}")
    try:
        solver = SolverOptions(**stbl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[solver] {exc}") from exc

    it = _table(raw, "iteration")
    tol = _number(it, "tol", "iteration", 1e-8, positive=True)
    max_steps = it.get("max_steps", 200)
    if not (isinstance(max_steps, int) and max_steps >= 1):
        raise ConfigError(f"iteration.max_steps must be a positive integer, got {max_steps!r}")

    sw = _table(raw, "sweep")
    levels = sw.get("mesh_levels", 3)
    if not (isinstance(levels, int) and levels >= 3):
        raise ConfigError(f"sweep.mesh_levels must be an integer >= 3, got {levels!r}")
    sweeps = _sweeps(sw)
    if cls in ("torsion_study", "norm_study") and "lambda" not in sweeps:
        raise ConfigError(f"class {cls} needs sweep.lambda = [lo, hi, n]")

    return Scenario(
        name=str(raw.get("name", default_name)),
        problem_class=cls,
        spec=spec,
        mesh=mesh,
        solver=solver,
        mode=mode,
        delta=delta,
        tol=tol,
        max_steps=max_steps,
        descending=bool(it.get("descending", False)),
        experimental=bool(it.get("experimental", False)),
        sweeps=sweeps,
        mesh_levels=levels,
        raw=raw,
    )
