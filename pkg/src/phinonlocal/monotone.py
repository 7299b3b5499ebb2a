"""Monotone iteration between a certified sub- and supersolution.

Each step freezes the nonlocal coefficients and the nonlinearities at the
previous iterate and solves a Dirichlet problem:

    -Delta_{Phi_i} u_i^n = rhs_i(u^{n-1})

For systems the update is of Jacobi type, so equation ``i`` is driven by
the other component of the previous step.  The ordering of the iterates
is a theorem, not a projection: any violation beyond ``1e-8`` raises.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxStepsExceeded, MonotonicityViolation, SandwichViolation
from .grid import GridFunction, Mesh
from .philap import SolverOptions, operator_values, solve_dirichlet
from .problem import ProblemSpec, check_nonlinearities, nonlocal_norms, rhs_values

__all__ = [
    "IterationTrace",
    "iterate",
    "iterate_scalar",
    "iterate_system",
    "iterate_unchecked",
    "weak_residual",
    "residual_field",
    "ORDER_TOL",
    "TRACE_CSV_COLUMNS",
]

ORDER_TOL = 1e-8
_KEEP_ALL = 64
_KEEP_EVERY = 8
TRACE_CSV_COLUMNS = ("step", "sup_diff", "norm_psi", "norm_lambda", "residual")


@dataclass(eq=False)
class IterationTrace:
    """History of one component of the monotone scheme.

    ``norm_psi[n-1]`` and ``norm_lambda[n-1]`` are the nonlocal
    coefficients (norms of the driver) frozen at step ``n``;
    ``residuals[n-1]`` is the self-consistent residual of ``u_n``.
    ``iterates`` keeps ``(step, values)`` for every step up to 64, then every
    8th step and the last one.
    """

    equation: int
    direction: str
    mesh: Mesh
    sup_diffs: list = field(default_factory=list)
    norm_psi: list = field(default_factory=list)
    norm_lambda: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    converged: bool = False
    final_residual: float = float("nan")

    @property
    def steps(self) -> int:
        return len(self.sup_diffs)

    @property
    def solution(self) -> GridFunction:
        return GridFunction(self.mesh, self.iterates[-1][1])

    def rows(self) -> list:
        return [
            (n + 1, d, p, lam, r)
            for n, (d, p, lam, r) in enumerate(zip(self.sup_diffs, self.norm_psi, self.norm_lambda, self.residuals))
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_CSV_COLUMNS)
            for row in self.rows():
                w.writerow(["" if v is None else repr(v) for v in row])

    def to_dict(self) -> dict:
        return {
            "equation": self.equation,
            "direction": self.direction,
            "converged": self.converged,
            "steps": self.steps,
            "final_residual": self.final_residual,
            "final_sup_diff": self.sup_diffs[-1] if self.sup_diffs else None,
            "solution_max": float(np.max(self.iterates[-1][1])) if self.iterates else None,
            "final_norm_psi": self.norm_psi[-1] if self.norm_psi else None,
            "final_norm_lambda": self.norm_lambda[-1] if self.norm_lambda else None,
            "stored_steps": [s for s, _ in self.iterates],
        }


def residual_field(spec: ProblemSpec, states, i: int, opts: SolverOptions | None = None) -> np.ndarray:
    """Signed nodal residual ``A_i(u_i) - rhs_i(u)`` for GridFunction ``states``; zero on the boundary."""
    mesh = states[0].mesh
    vals = [s.values for s in states]
    eps = (opts or SolverOptions()).epsilon_reg
    A = operator_values(spec.equations[i].op, mesh, vals[i], eps)
    return np.where(mesh.interior, A - rhs_values(spec, mesh, vals, i), 0.0)


def weak_residual(spec: ProblemSpec, u: GridFunction, v: GridFunction | None = None, opts: SolverOptions | None = None):
    """Sup-norm of ``A(u) - rhs(u)`` over interior nodes; a tuple for systems."""
    states = [u] if v is None else [u, v]
    if len(states) != spec.n_equations:
        raise ValueError(f"problem has {spec.n_equations} equations, got {len(states)} states")
    out = _residuals(spec, u.mesh, [s.values for s in states], opts or SolverOptions())
    return out[0] if v is None else tuple(out)


def iterate(
    spec: ProblemSpec,
    pairs,
    tol: float = 1e-8,
    max_steps: int = 200,
    descending: bool = False,
    opts: SolverOptions | None = None,
) -> list:
    """Run the monotone scheme for every equation; returns one trace each.

    Starts from the subsolutions (or the supersolutions when
    ``descending``) and stops once every sup-norm increment is below
    ``tol``.  Raises :class:`SandwichViolation`,
    :class:`MonotonicityViolation` or :class:`MaxStepsExceeded`; the
    partial traces ride on the exception.
    """
    pairs = list(pairs)
    if len(pairs) != spec.n_equations:
        raise ValueError(f"problem has {spec.n_equations} equations, got {len(pairs)} pairs")
    subs = [p.sub.values for p in pairs]
    sups = [p.super.values for p in pairs]
    check_nonlinearities(spec, max(float(np.max(s)) for s in sups))
    start = sups if descending else subs
    return _run(spec, pairs[0].sub.mesh, start, (subs, sups), descending, tol, max_steps, opts)


def iterate_unchecked(spec: ProblemSpec, start, tol: float = 1e-8, max_steps: int = 200, opts=None) -> list:
    """The same fixed-point scheme from arbitrary ``start`` states, without order checks.

    Meant for experiments outside the range covered by any certificate;
    nothing is asserted about the iterates.
    """
    start = list(start)
    return _run(spec, start[0].mesh, [u.values for u in start], None, False, tol, max_steps, opts, "unchecked")


def _run(spec, mesh, start, bounds, descending, tol, max_steps, opts, direction=None):
    opts = opts or SolverOptions()
    direction = direction or ("descending" if descending else "ascending")
    traces = [IterationTrace(i + 1, direction, mesh) for i in range(spec.n_equations)]
    prev = [np.array(u, dtype=float) for u in start]
    for t, u in zip(traces, prev):
        t.iterates.append((0, u.copy()))

    for step in range(1, max_steps + 1):
        norms = [nonlocal_norms(spec, mesh, prev, i) for i in range(spec.n_equations)]
        new = []
        for i, eq in enumerate(spec.equations):
            rhs = rhs_values(spec, mesh, prev, i, norms[i])
            sol = solve_dirichlet(eq.op, GridFunction(mesh, rhs), opts, initial=prev[i]).solution.values
            new.append(sol)
        for i, t in enumerate(traces):
            if bounds is not None:
                _check_order(t, step, new[i], prev[i], bounds[0][i], bounds[1][i], descending, mesh)
            t.sup_diffs.append(float(np.max(np.abs(new[i] - prev[i]))))
            t.norm_psi.append(norms[i][0])
            t.norm_lambda.append(norms[i][1])
        res = _residuals(spec, mesh, new, opts)
        for t, r, u in zip(traces, res, new):
            t.residuals.append(r)
            if step <= _KEEP_ALL or step % _KEEP_EVERY == 0:
                t.iterates.append((step, u.copy()))
        prev = new
        if all(t.sup_diffs[-1] < tol for t in traces):
            for t, r, u in zip(traces, res, new):
                t.converged = True
                t.final_residual = r
                if t.iterates[-1][0] != step:
                    t.iterates.append((step, u.copy()))
            return traces

    for t, r, u in zip(traces, res, prev):
        t.final_residual = r
        if t.iterates[-1][0] != max_steps:
            t.iterates.append((max_steps, u.copy()))
    worst = max(t.sup_diffs[-1] for t in traces)
    raise MaxStepsExceeded(f"no convergence in {max_steps} steps (last increment {worst:.3e})", None, worst, traces)


def _residuals(spec, mesh, states, opts):
    eps = opts.epsilon_reg
    out = []
    for i, eq in enumerate(spec.equations):
        A = operator_values(eq.op, mesh, states[i], eps)
        out.append(float(np.max(np.abs((A - rhs_values(spec, mesh, states, i))[mesh.interior]))))
    return out


def _check_order(trace, step, u, prev, sub, sup, descending, mesh):
    lo = sub - u
    hi = u - sup
    for gap, what in ((lo, "below the subsolution"), (hi, "above the supersolution")):
        j = int(np.argmax(gap))
        if gap[j] > ORDER_TOL:
            raise SandwichViolation(
                f"equation {trace.equation}, step {step}: iterate is {gap[j]:.3e} {what} at {mesh.points[j].tolist()}",
                j,
                float(gap[j]),
                trace,
            )
    back = (prev - u) if not descending else (u - prev)
    j = int(np.argmax(back))
    if back[j] > ORDER_TOL:
        raise MonotonicityViolation(
            f"equation {trace.equation}, step {step}: {trace.direction} order broken by {back[j]:.3e} "
            f"at {mesh.points[j].tolist()}",
            j,
            float(back[j]),
            trace,
        )


def iterate_scalar(spec: ProblemSpec, pair, tol: float = 1e-8, max_steps: int = 200, descending: bool = False, opts=None):
    """Scalar version of :func:`iterate`; returns a single trace."""
    if spec.n_equations != 1:
        raise ValueError("iterate_scalar needs a single equation")
    return iterate(spec, [pair], tol, max_steps, descending, opts)[0]


def iterate_system(spec: ProblemSpec, pairs, tol: float = 1e-8, max_steps: int = 200, descending: bool = False, opts=None):
    """Coupled version of :func:`iterate`; returns a pair of traces."""
    if spec.n_equations != 2:
        raise ValueError("iterate_system needs two equations")
    return tuple(iterate(spec, pairs, tol, max_steps, descending, opts))
