"""Discrete Phi-Laplacian and its homogeneous Dirichlet problem.

The operator is the gradient of the discrete energy

    E(u) = sum_e |e| Phi(|G_e u|_eps),   |g|_eps = sqrt(|g|^2 + eps^2),

divided by the nodal quadrature weight.  In 1D ``G_e u`` is the staggered
difference and this is exactly the flux-difference scheme
``-(F[i+1/2] - F[i-1/2]) / h`` with ``F = phi(|g|_eps) g``.  Because the
energy is convex, Newton steps can be damped on it, and the discrete
problem inherits uniqueness and (in 1D) the comparison principle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import optimize

from .errors import NewtonDivergence, PreconditionUnmet
from .grid import GridFunction, Mesh
from .nfunction import NFunction

__all__ = [
    "SolverOptions",
    "SolveReport",
    "ComparisonResult",
    "apply_philap",
    "operator_values",
    "solve_dirichlet",
    "torsion",
    "check_comparison",
]

log = logging.getLogger(__name__)

# Newton iterations allowed per regularization stage before moving on
_STAGE_CAP = 40


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-10
    max_newton: int = 200
    backtrack: float = 0.5
    max_halvings: int = 30
    epsilon_reg: float = 1e-10
    picard_fallback: bool = True
    verbose: bool = False

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.max_newton > 0 and 0 < self.backtrack < 1):
            raise ValueError("solver tolerances must be positive and 0 < backtrack < 1")
        if self.epsilon_reg < 0:
            raise ValueError("epsilon_reg must be >= 0")


@dataclass
class SolveReport:
    solution: GridFunction
    residual_sup: float
    iterations: int
    used_fallback: bool
    history: list = field(default_factory=list)

    def to_dict(self, verbose: bool = False) -> dict:
        out = {
            "residual_sup": self.residual_sup,
            "iterations": self.iterations,
            "used_fallback": self.used_fallback,
            "max_value": float(np.max(self.solution.values)),
        }
        if verbose:
            out["residual_history"] = list(self.history)
        return out


@dataclass(frozen=True)
class ComparisonResult:
    holds: bool
    worst_node: int
    violation: float


def _gradients(mesh: Mesh, u: np.ndarray, eps: float):
    G, w = mesh.elements
    g = [Gk @ u for Gk in G]
    s = np.sqrt(sum(gk * gk for gk in g) + eps * eps)
    return G, w, g, s


def _energy_gradient(nf: NFunction, mesh: Mesh, u: np.ndarray, eps: float) -> np.ndarray:
    G, w, g, s = _gradients(mesh, u, eps)
    coef = w * nf.flux(s) / s
    return sum(Gk.T @ (coef * gk) for Gk, gk in zip(G, g))


def operator_values(nf: NFunction, mesh: Mesh, u: np.ndarray, eps: float = 1e-10) -> np.ndarray:
    """``-div(phi(|grad u|) grad u)`` at interior nodes; boundary rows copy ``u``."""
    out = _energy_gradient(nf, mesh, np.asarray(u, dtype=float), eps) / mesh.weights
    out[mesh.boundary] = u[mesh.boundary]
    return out


def apply_philap(nf: NFunction, u: GridFunction, eps: float = 1e-10) -> GridFunction:
    return GridFunction(u.mesh, operator_values(nf, u.mesh, u.values, eps))


def _hessian(nf, mesh, u, eps):
    G, w, g, s = _gradients(mesh, u, eps)
    flux, dflux = nf.flux(s), nf.dflux(s)
    phi = flux / s
    c = (dflux - phi) / (s * s)
    H = None
    for a, Ga in enumerate(G):
        for b, Gb in enumerate(G):
            diag = w * (c * g[a] * g[b] + (phi if a == b else 0.0))
            term = Ga.T @ sp.diags(diag) @ Gb
            H = term if H is None else H + term
    return H.tocsr()


def _picard_matrix(nf, mesh, u, eps):
    G, w, g, s = _gradients(mesh, u, eps)
    diag = sp.diags(w * nf.flux(s) / s)
    return sum(Gk.T @ diag @ Gk for Gk in G).tocsr()


def _energy(nf, mesh, u, rhs_w, eps):
    _, w, _, s = _gradients(mesh, u, eps)
    return float(w @ nf.Phi(s)) - float(rhs_w @ u)


def _restrict(A, idx):
    return A[idx][:, idx]


def _initial_guess(nf, mesh, rhs_w, eps, idx):
    """Scaled Poisson solution minimizing the energy along its ray."""
    G, w = mesh.elements
    L = sum(Gk.T @ sp.diags(w) @ Gk for Gk in G).tocsr()
    base = np.zeros(mesh.size)
    base[idx] = spla.spsolve(_restrict(L, idx).tocsc(), rhs_w[idx])
    if not np.any(base):
        return base

    def j(logc):
        return _energy(nf, mesh, np.exp(logc) * base, rhs_w, eps)

    res = optimize.minimize_scalar(j, bounds=(-60.0, 60.0), method="bounded", options={"xatol": 1e-4})
    return np.exp(res.x) * base


def solve_dirichlet(
    nf: NFunction,
    rhs: GridFunction,
    opts: SolverOptions | None = None,
    initial: np.ndarray | None = None,
) -> SolveReport:
    """Solve ``-Delta_Phi u = rhs`` in the interior with ``u = 0`` on the boundary.

    Damped Newton on the convex energy with an analytic Jacobian; the step
    is accepted when the energy shows Armijo decrease or, once energy
    differences drown in round-off, when the residual decreases.  When
    Newton stalls (typical for densities singular or degenerate at zero
    gradient) it is restarted along a decreasing sequence of
    regularizations ``eps``.  If that fails too the frozen-coefficient
    (Kacanov/Picard) iteration takes over.

    Success means ``max |A(u) - rhs| <= newton_tol * max(1, max|rhs|)``
    over interior nodes.  Raises :class:`NewtonDivergence` otherwise.
    """
    opts = opts or SolverOptions()
    mesh = rhs.mesh
    eps = opts.epsilon_reg
    idx = np.flatnonzero(mesh.interior)
    W = mesh.weights
    f = np.where(mesh.interior, rhs.values, 0.0)
    rhs_w = W * f
    tol = opts.newton_tol * max(1.0, float(np.max(np.abs(f))))

    if initial is not None:
        u = np.array(initial, dtype=float)
        u[mesh.boundary] = 0.0
    elif np.any(f):
        u = _initial_guess(nf, mesh, rhs_w, eps, idx)
    else:
        u = np.zeros(mesh.size)

    history: list = []
    budget = opts.max_newton
    u1, res, n, ok = _newton(nf, mesh, u, rhs_w, eps, tol, min(budget, _STAGE_CAP), idx, opts, history)
    if ok:
        return SolveReport(GridFunction(mesh, u1), res, n, False, history)
    used = n

    # continuation in the regularization, starting at the gradient scale
    G, _ = mesh.elements
    scale = max(float(np.max(np.abs(np.concatenate([Gk @ u for Gk in G])))), 1e-300)
    stage_eps = scale
    v = u
    while stage_eps > eps and used < budget:
        stage_eps = max(stage_eps / 10.0, eps)
        stage_tol = tol if stage_eps == eps else max(tol, 1e-6 * float(np.max(np.abs(f))))
        v, res, n, ok = _newton(
            nf, mesh, v, rhs_w, stage_eps, stage_tol, min(budget - used, _STAGE_CAP), idx, opts, history
        )
        used += n
        if not ok:
            break
    if ok and stage_eps == eps:
        return SolveReport(GridFunction(mesh, v), res, used, False, history)

    if not opts.picard_fallback:
        raise NewtonDivergence(f"Newton stalled at residual {res:.3e} (tol {tol:.1e})")
    if not (np.all(np.isfinite(v))):
        v = u
    for k in range(1, opts.max_newton + 1):
        A = _restrict(_picard_matrix(nf, mesh, v, eps), idx)
        v = np.zeros(mesh.size)
        v[idx] = spla.spsolve(A.tocsc(), rhs_w[idx])
        r = _residual(nf, mesh, v, rhs_w, eps)
        res = float(np.max(np.abs(r[idx] / W[idx])))
        history.append(res)
        if res <= tol:
            return SolveReport(GridFunction(mesh, v), res, used + k, True, history)
    raise NewtonDivergence(f"Newton and Picard both failed; last residual {res:.3e} (tol {tol:.1e})")


def _residual(nf, mesh, u, rhs_w, eps):
    r = _energy_gradient(nf, mesh, u, eps) - rhs_w
    r[mesh.boundary] = 0.0
    return r


def _newton(nf, mesh, u, rhs_w, eps, tol, max_it, idx, opts, history):
    """Damped Newton at fixed ``eps``; returns ``(u, residual, iterations, converged)``."""
    W = mesh.weights
    r = _residual(nf, mesh, u, rhs_w, eps)
    res = float(np.max(np.abs(r[idx] / W[idx])))
    for it in range(1, max_it + 1):
        history.append(res)
        if res <= tol:
            return u, res, it, True
        H = _restrict(_hessian(nf, mesh, u, eps), idx)
        du = np.zeros(mesh.size)
        with np.errstate(all="ignore"):
            try:
                du[idx] = spla.spsolve(H.tocsc(), -r[idx])
            except RuntimeError:
                du[:] = np.nan
        if not np.all(np.isfinite(du)):
            return u, res, it, False
        J0 = _energy(nf, mesh, u, rhs_w, eps)
        slope = float(r @ du)
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = u + step * du
            Jt = _energy(nf, mesh, trial, rhs_w, eps)
            rt = _residual(nf, mesh, trial, rhs_w, eps)
            rest = float(np.max(np.abs(rt[idx] / W[idx])))
            if (slope < 0 and np.isfinite(Jt) and Jt <= J0 + 1e-4 * step * slope) or rest < res:
                break
            step *= opts.backtrack
        else:
            log.debug("newton line search stalled at residual %.3e (eps %.1e)", res, eps)
            return u, res, it, res <= 10.0 * _roundoff_floor(H, u, idx, W)
        # a run of tiny steps means the quadratic model is useless here
        if step < 1e-3 and it > 20:
            return trial, rest, it, rest <= 10.0 * _roundoff_floor(H, trial, idx, W)
        u, r, res = trial, rt, rest
        if opts.verbose:
            log.info("newton %d: residual %.3e step %.3g eps %.1e", it, res, step, eps)
    if res <= tol:
        return u, res, max_it, True
    H = _restrict(_hessian(nf, mesh, u, eps), idx)
    return u, res, max_it, res <= 10.0 * _roundoff_floor(H, u, idx, W)


def _roundoff_floor(H, u, idx, W):
    """Residual produced by perturbing ``u`` at the level of machine precision.

    Only consulted once Newton has stopped making progress: densities that
    are singular at zero gradient cannot be resolved below this level.
    """
    du = 4.0 * np.finfo(float).eps * float(np.max(np.abs(u)))
    return float(np.max(abs(H) @ np.full(len(idx), du) / W[idx]))


def torsion(nf: NFunction, mesh: Mesh, lam: float, opts: SolverOptions | None = None) -> SolveReport:
    """The torsion-like function: ``-Delta_Phi z = lam``, ``z = 0`` on the boundary."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    rhs = GridFunction(mesh, np.where(mesh.interior, float(lam), 0.0))
    return solve_dirichlet(nf, rhs, opts)


def check_comparison(
    nf: NFunction, u: GridFunction, v: GridFunction, tol: float = 1e-8, eps: float = 1e-10
) -> ComparisonResult:
    """Check ``u <= v`` given ``-Delta_Phi u <= -Delta_Phi v`` and boundary ordering.

    Raises :class:`PreconditionUnmet` when the operator or boundary ordering
    does not hold, since the conclusion would then say nothing.
    """
    mesh = u.mesh
    Au = operator_values(nf, mesh, u.values, eps)
    Av = operator_values(nf, mesh, v.values, eps)
    inner = mesh.interior
    gap = Au[inner] - Av[inner]
    if np.any(gap > tol):
        node = int(np.flatnonzero(inner)[np.argmax(gap)])
        raise PreconditionUnmet(f"operator ordering fails at node {node} by {gap.max():.3e}")
    bgap = u.values[mesh.boundary] - v.values[mesh.boundary]
    if np.any(bgap > tol):
        raise PreconditionUnmet(f"boundary ordering fails by {bgap.max():.3e}")
    diff = u.values - v.values
    worst = int(np.argmax(diff))
    violation = max(float(diff[worst]), 0.0)
    return ComparisonResult(violation <= tol, worst, violation)
