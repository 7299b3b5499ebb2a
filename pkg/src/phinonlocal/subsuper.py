"""Explicit sub- and supersolutions and the thresholds that certify them.

Supersolutions are torsion functions ``z`` (``-Delta_Phi z = level``),
subsolutions are ``mu * eta`` with ``eta`` the boundary-layer profile

    eta = e^{k d} - 1                                   d < sigma
        = e^{k sigma} - 1 + int_sigma^d k e^{k sigma} ((2 delta - t)/(2 delta - sigma))^r dt
                                                        sigma <= d < 2 delta
        = (the same integral up to 2 delta)             d >= 2 delta

with ``r = m / (l - 1)``, ``sigma = ln 2 / k`` and ``mu = e^{-k}``.
Every inequality an existence argument needs is checked node by node on
the discrete operator; constants that the continuum argument leaves
symbolic (the torsion growth constant ``K``) are measured from solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CertificationFailure,
    DegenerateThreshold,
    HypothesisViolation,
    InvalidParams,
    KSelectionFailure,
    LambdaSearchFailure,
    OrderingViolation,
)
from .grid import DistanceField, GridFunction, Mesh, distance_field
from .nfunction import NFunction
from .orlicz import norm_of_values
from .philap import SolverOptions, operator_values, torsion
from .problem import ProblemSpec, driver_index, rhs_values

__all__ = [
    "BoundaryLayerParams",
    "Certificate",
    "SubSuperPair",
    "ThresholdReport",
    "build_eta",
    "select_k_sublinear",
    "select_lambda_supersolution",
    "build_pair_sublinear",
    "thresholds_concave_convex",
    "build_pair_concave_convex",
    "certify_pair",
    "check_sublinear_hypotheses",
    "minimizer_constant",
    "minimizer",
    "psi_value",
    "CERT_TOL",
    "SELECT_TOL",
]

# strict slack for the searches, certification tolerance one decade above
SELECT_TOL = 1e-10
CERT_TOL = 1e-8
_LN2 = math.log(2.0)
_K_START = 4.0
_K_CAP = 2.0**20
_MAX_DOUBLINGS = 60
_MAX_MU_HALVINGS = 200
MODES = ("fix_theta", "fix_lambda")


# -- data --------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryLayerParams:
    k: float
    sigma: float
    mu: float
    delta: float

    @classmethod
    def from_k(cls, k: float, delta: float) -> "BoundaryLayerParams":
        return cls(float(k), _LN2 / k, math.exp(-k), float(delta))

    def with_mu(self, mu: float) -> "BoundaryLayerParams":
        return BoundaryLayerParams(self.k, self.sigma, float(mu), self.delta)

    def to_dict(self) -> dict:
        return {"k": self.k, "sigma": self.sigma, "mu": self.mu, "delta": self.delta}


def _node_info(mesh: Mesh, node: int) -> dict:
    return {"node": int(node), "coords": [float(c) for c in mesh.points[node]]}


@dataclass(eq=False)
class Certificate:
    """Nodewise margins of the defining inequalities of one pair.

    ``sub_margin = rhs(sub) - A(sub)`` and ``super_margin = A(super) -
    rhs(super)`` at interior nodes (zero on the boundary); ``gap = super -
    sub``.  All three must be ``>= -tol`` and ``sub`` strictly positive
    inside for the pair to count as certified.
    """

    mesh: Mesh
    sub_margin: np.ndarray
    super_margin: np.ndarray
    gap: np.ndarray
    sub_interior_min: float
    tol: float = CERT_TOL

    def _worst(self, arr):
        inner = np.flatnonzero(self.mesh.interior)
        j = inner[np.argmin(arr[inner])]
        return int(j), float(arr[j])

    @property
    def worst_sub(self):
        return self._worst(self.sub_margin)

    @property
    def worst_super(self):
        return self._worst(self.super_margin)

    @property
    def worst_gap(self):
        return self._worst(self.gap)

    @property
    def min_margin(self) -> float:
        return min(self.worst_sub[1], self.worst_super[1])

    @property
    def holds(self) -> bool:
        return (
            self.worst_sub[1] >= -self.tol
            and self.worst_super[1] >= -self.tol
            and self.worst_gap[1] >= -self.tol
            and self.sub_interior_min > 0.0
        )

    def failure(self) -> tuple:
        """``(what, node, margin)`` of the worst failing check, or ``None``."""
        for what, (node, val) in (("subsolution", self.worst_sub), ("supersolution", self.worst_super), ("ordering", self.worst_gap)):
            if val < -self.tol:
                return what, node, val
        if self.sub_interior_min <= 0.0:
            return "positivity", None, self.sub_interior_min
        return None

    def to_dict(self) -> dict:
        out = {"holds": self.holds, "tol": self.tol, "sub_interior_min": self.sub_interior_min}
        for name, (node, val) in (("sub", self.worst_sub), ("super", self.worst_super), ("ordering", self.worst_gap)):
            out[f"min_{name}_margin"] = val
            out[f"worst_{name}"] = _node_info(self.mesh, node)
        return out


@dataclass(eq=False)
class SubSuperPair:
    """Certified ordered pair for one equation.

    ``level`` is the right-hand side of the torsion problem defining the
    supersolution (``lambda`` or ``M``).
    """

    sub: GridFunction
    super: GridFunction
    certificate: Certificate
    params: BoundaryLayerParams | None = None
    level: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "boundary_layer": None if self.params is None else self.params.to_dict(),
            "level": self.level,
            "certificate": self.certificate.to_dict(),
            "sub_max": float(np.max(self.sub.values)),
            "super_max": float(np.max(self.super.values)),
            "meta": self.meta,
        }


@dataclass(frozen=True)
class ThresholdReport:
    mode: str
    rho: float
    tau: float
    L: float | None
    M: float | None
    lambda0: float | None
    theta0: float | None
    psi_at_M: float
    psi_at_threshold: float
    K: tuple
    K_bar: float
    capped: bool
    printed_hypothesis_holds: bool
    lam: float
    theta: float

    @property
    def threshold(self) -> float:
        return self.lambda0 if self.mode == "fix_theta" else self.theta0

    @property
    def below_threshold(self) -> bool:
        """Whether the current parameter lies strictly inside the certified range."""
        if self.mode == "fix_theta":
            return self.lam < self.lambda0
        return self.theta < self.theta0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rho": self.rho,
            "tau": self.tau,
            "L": self.L,
            "M": self.M,
            "lambda0": self.lambda0,
            "theta0": self.theta0,
            "psi_at_M": self.psi_at_M,
            "psi_at_threshold": self.psi_at_threshold,
            "K": list(self.K),
            "K_bar": self.K_bar,
            "capped": self.capped,
            "printed_hypothesis_holds": self.printed_hypothesis_holds,
            "lambda": self.lam,
            "theta": self.theta,
        }


# -- profile -----------------------------------------------------------------


def build_eta(mesh: Mesh, nf: NFunction, params: BoundaryLayerParams, dist: DistanceField | None = None) -> GridFunction:
    """Boundary-layer profile ``eta`` (without the factor ``mu``)."""
    k, s, dl = params.k, params.sigma, params.delta
    if not s < dl:
        raise InvalidParams(f"need sigma < delta, got sigma={s:g}, delta={dl:g}")
    if not nf.l > 1.0:
        raise InvalidParams("the profile needs l > 1")
    d = (dist if dist is not None else distance_field(mesh, dl)).d.values
    r = nf.m / (nf.l - 1.0)
    D = 2.0 * dl - s
    e = math.exp(k * s)
    rise = k * e * D / (r + 1.0)
    out = np.empty_like(d)
    near, far = d < s, d >= 2.0 * dl
    mid = ~near & ~far
    out[near] = np.expm1(k * d[near])
    out[mid] = e - 1.0 + rise * (1.0 - ((2.0 * dl - d[mid]) / D) ** (r + 1.0))
    out[far] = e - 1.0 + rise
    out[mesh.boundary] = 0.0
    return GridFunction(mesh, out)


# -- hypotheses ----------------------------------------------------------------


def check_sublinear_hypotheses(spec: ProblemSpec) -> None:
    """``0 < alpha_i + beta_i < l_j - 1`` for every equation ``i`` and operator ``j``."""
    ls = [eq.op.l for eq in spec.equations]
    for i, eq in enumerate(spec.equations):
        if not eq.op.admissible:
            raise HypothesisViolation(f"equation {i + 1}: operator needs l > 1, got l={eq.op.l}")
        s = eq.alpha + eq.beta
        bound = min(ls) - 1.0
        if not 0.0 < s < bound:
            raise HypothesisViolation(
                f"equation {i + 1}: need 0 < alpha + beta < l - 1 = {bound:g}, got alpha + beta = {s:g}"
            )


def _check_concave_convex(spec: ProblemSpec, mode: str) -> bool:
    """Validate the exponent conditions of ``mode``; return whether the printed form holds."""
    if mode not in MODES:
        raise InvalidParams(f"mode must be one of {MODES}, got {mode!r}")
    if not spec.theta > 0.0:
        raise InvalidParams("concave-convex problems need theta > 0")
    for i, eq in enumerate(spec.equations):
        if not eq.op.admissible:
            raise HypothesisViolation(f"equation {i + 1}: operator needs l > 1, got l={eq.op.l}")
        if not 0.0 < eq.alpha + eq.beta < eq.op.l - 1.0:
            raise HypothesisViolation(
                f"equation {i + 1}: need 0 < alpha + beta < l - 1 = {eq.op.l - 1:g}, got {eq.alpha + eq.beta:g}"
            )
    eqs = spec.equations
    if mode == "fix_theta":
        for i, eq in enumerate(eqs):
            mj = eqs[driver_index(spec, i)].op.m
            if not mj - 1.0 < eq.xi + eq.gamma:
                raise HypothesisViolation(f"equation {i + 1}: need m - 1 = {mj - 1:g} < xi + gamma = {eq.xi + eq.gamma:g}")
        return True
    if spec.n_equations == 1:
        eq = eqs[0]
        if not eq.op.l - 1.0 < eq.xi + eq.gamma:
            raise HypothesisViolation(f"need l - 1 = {eq.op.l - 1:g} < xi + gamma = {eq.xi + eq.gamma:g}")
        return True
    # the printed chain for systems forces tau < 1; report it, require 0 < rho < 1 < tau instead
    (e1, e2), (l1, l2) = eqs, (eqs[0].op.l, eqs[1].op.l)
    s1, s2, t1, t2 = e1.alpha + e1.beta, e2.alpha + e2.beta, e1.xi + e1.gamma, e2.xi + e2.gamma
    return bool(0 < s1 < l2 - 1 and 0 < s2 < l1 - 1 < t1 < l2 - 1 and t2 < l1 - 1)


# -- minimizer algebra -----------------------------------------------------------


def minimizer_constant(rho: float, tau: float) -> float:
    """``L = ((1 - rho) / (tau - 1))^(1 / (tau - rho))``."""
    if not tau > rho:
        raise DegenerateThreshold(f"need tau > rho, got rho={rho:g}, tau={tau:g}")
    if not (0.0 < rho < 1.0 < tau):
        raise HypothesisViolation(f"need 0 < rho < 1 < tau, got rho={rho:g}, tau={tau:g}")
    return ((1.0 - rho) / (tau - 1.0)) ** (1.0 / (tau - rho))


def minimizer(lam: float, theta: float, rho: float, tau: float) -> float:
    """``M = L (lam / theta)^(1 / (tau - rho))``, the minimizer of :func:`psi_value`."""
    return minimizer_constant(rho, tau) * (lam / theta) ** (1.0 / (tau - rho))


def psi_value(t, lam: float, theta: float, K_bar: float, rho: float, tau: float):
    """``lam K t^(rho-1) + theta K t^(tau-1)``."""
    t = np.asarray(t, dtype=float)
    out = lam * K_bar * t ** (rho - 1.0) + theta * K_bar * t ** (tau - 1.0)
    return float(out) if out.ndim == 0 else out


# -- discrete pieces -------------------------------------------------------------


def _eps(opts: SolverOptions | None) -> float:
    return (opts or SolverOptions()).epsilon_reg


def _operators(spec: ProblemSpec, mesh: Mesh, states, eps) -> list:
    return [operator_values(eq.op, mesh, states[i], eps) for i, eq in enumerate(spec.equations)]


def certify_pair(
    spec: ProblemSpec,
    subs: Sequence,
    supers: Sequence,
    opts: SolverOptions | None = None,
    tol: float = CERT_TOL,
) -> list:
    """Margins of the defining inequalities for arbitrary candidates.

    ``subs`` and ``supers`` hold one grid function (or value array) per
    equation.  Returns one :class:`Certificate` per equation.
    """
    mesh = _mesh_of(subs[0])
    lo = [_vals(u) for u in subs]
    hi = [_vals(u) for u in supers]
    eps = _eps(opts)
    A_lo, A_hi = _operators(spec, mesh, lo, eps), _operators(spec, mesh, hi, eps)
    inner = mesh.interior
    certs = []
    for i in range(spec.n_equations):
        sub_m = np.where(inner, rhs_values(spec, mesh, lo, i) - A_lo[i], 0.0)
        sup_m = np.where(inner, A_hi[i] - rhs_values(spec, mesh, hi, i), 0.0)
        certs.append(Certificate(mesh, sub_m, sup_m, hi[i] - lo[i], float(np.min(lo[i][inner])), tol))
    return certs


def _mesh_of(u):
    if not isinstance(u, GridFunction):
        raise TypeError("certify_pair needs GridFunction candidates")
    return u.mesh


def _vals(u):
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def _raise_if_failed(certs, prefix=""):
    for i, c in enumerate(certs):
        fail = c.failure()
        if fail is not None:
            what, node, margin = fail
            where = "" if node is None else f" at {_node_info(c.mesh, node)['coords']}"
            raise CertificationFailure(
                f"{prefix}equation {i + 1}: {what} inequality fails{where} with margin {margin:.3e}", node, margin
            )


def _profiles(spec, mesh, params, dist):
    return [build_eta(mesh, eq.op, params, dist).values for eq in spec.equations]


def _select_k(spec: ProblemSpec, mesh: Mesh, dist: DistanceField, eps: float):
    """Doubling search for ``k``; ``spec`` must already carry only the concave term."""
    h = max(mesh.h)
    inner = mesh.interior
    k, tried, best = _K_START, [], None
    while k <= _K_CAP:
        sigma = _LN2 / k
        if not h < sigma / 4.0:
            break
        if sigma >= dist.delta:
            k *= 2.0
            continue
        params = BoundaryLayerParams.from_k(k, dist.delta)
        subs = [params.mu * eta for eta in _profiles(spec, mesh, params, dist)]
        A = _operators(spec, mesh, subs, eps)
        worst = min(float(np.min((rhs_values(spec, mesh, subs, i) - A[i])[inner])) for i in range(spec.n_equations))
        tried.append((k, worst))
        if worst >= SELECT_TOL:
            return params, subs
        k *= 2.0
    detail = ", ".join(f"k={k:g}: {m:.2e}" for k, m in tried) or "none"
    raise KSelectionFailure(
        f"no k passes the subsolution check before the mesh guard h < ln2/(4k) (h={h:g}); worst margins {detail}"
    )


def _torsions(spec, mesh, level, opts):
    return [torsion(eq.op, mesh, level, opts).solution.values for eq in spec.equations]


def _super_excess(spec, mesh, zs, level):
    """``max(rhs(z) - level)`` over interior nodes and equations."""
    inner = mesh.interior
    return max(float(np.max(rhs_values(spec, mesh, zs, i)[inner])) - level for i in range(spec.n_equations))


def _single(spec, items):
    return items[0] if spec.n_equations == 1 else tuple(items)


def _concave_part(spec: ProblemSpec) -> ProblemSpec:
    return spec.with_params(theta=0.0)


# -- sublinear ---------------------------------------------------------------------


def select_k_sublinear(spec: ProblemSpec, mesh: Mesh, delta: float | None = None, opts: SolverOptions | None = None):
    """First ``k`` in ``4, 8, 16, ...`` with ``A(mu eta) <= rhs(mu eta) - 1e-10`` inside.

    Returns ``(BoundaryLayerParams, sub)``; ``sub`` is a tuple for systems.
    """
    check_sublinear_hypotheses(spec)
    dist = distance_field(mesh, delta)
    params, subs = _select_k(_concave_part(spec), mesh, dist, _eps(opts))
    return params, _single(spec, [GridFunction(mesh, s) for s in subs])


def select_lambda_supersolution(spec: ProblemSpec, mesh: Mesh, opts: SolverOptions | None = None):
    """Doubling search from 1 for ``lam`` with ``rhs(z_lam) <= lam`` nodewise.

    Equality is accepted up to ``1e-10`` so that exponents ``alpha = beta =
    0`` pass at ``lam = 1``.  Returns ``(lam, z)``; ``z`` is a tuple for
    systems.
    """
    bound = min(eq.op.l for eq in spec.equations) - 1.0
    for i, eq in enumerate(spec.equations):
        if not eq.alpha + eq.beta < bound:
            raise HypothesisViolation(f"equation {i + 1}: need alpha + beta < l - 1 = {bound:g}")
    cspec = _concave_part(spec)
    lam = 1.0
    for _ in range(_MAX_DOUBLINGS + 1):
        zs = _torsions(spec, mesh, lam, opts)
        if _super_excess(cspec, mesh, zs, lam) <= SELECT_TOL:
            return lam, _single(spec, [GridFunction(mesh, z) for z in zs])
        lam *= 2.0
    raise LambdaSearchFailure(f"no lambda up to 2^{_MAX_DOUBLINGS} makes the torsion function a supersolution")


def build_pair_sublinear(spec: ProblemSpec, mesh: Mesh, opts: SolverOptions | None = None, delta: float | None = None):
    """Certified ``(mu eta, z_lam)`` for the purely sublinear problem.

    Returns a :class:`SubSuperPair` (scalar) or a tuple of two (system).
    """
    if spec.theta != 0.0:
        raise InvalidParams("the sublinear construction needs theta = 0; use build_pair_concave_convex")
    check_sublinear_hypotheses(spec)
    eps = _eps(opts)
    dist = distance_field(mesh, delta)
    params, subs = _select_k(spec, mesh, dist, eps)
    lam, zs = select_lambda_supersolution(spec, mesh, opts)
    zs = [z.values for z in (zs if spec.n_equations == 2 else (zs,))]

    # comparison needs A(mu eta) <= lam
    inner = mesh.interior
    A_sub = _operators(spec, mesh, subs, eps)
    top = max(float(np.max(a[inner])) for a in A_sub)
    enlarged = 0
    while top > lam:
        lam *= 2.0
        enlarged += 1
        if enlarged > _MAX_DOUBLINGS:
            raise LambdaSearchFailure("could not dominate the subsolution operator")
    if enlarged:
        zs = _torsions(spec, mesh, lam, opts)
        if _super_excess(spec, mesh, zs, lam) > SELECT_TOL:
            raise CertificationFailure(f"torsion function at enlarged lambda={lam:g} is no supersolution")

    _check_ordering(mesh, subs, zs)
    certs = certify_pair(spec, [GridFunction(mesh, s) for s in subs], [GridFunction(mesh, z) for z in zs], opts)
    _raise_if_failed(certs)
    meta = {"construction": "sublinear", "lambda_enlargements": enlarged}
    pairs = [
        SubSuperPair(GridFunction(mesh, s), GridFunction(mesh, z), c, params, lam, dict(meta))
        for s, z, c in zip(subs, zs, certs)
    ]
    return _single(spec, pairs)


def _check_ordering(mesh, subs, supers):
    for i, (s, z) in enumerate(zip(subs, supers)):
        gap = z - s
        j = int(np.argmin(gap))
        if gap[j] < -CERT_TOL:
            raise OrderingViolation(
                f"equation {i + 1}: subsolution exceeds supersolution by {-gap[j]:.3e} at {mesh.points[j].tolist()}"
            )


# -- concave-convex ------------------------------------------------------------------


def _measure_K(spec, mesh, mode, opts):
    """Torsion growth constants ``K_j = max |z_s|_inf / s^(1/(e_j - 1))`` per operator.

    ``e_j`` is ``m_j`` over ``s = 2^-20 .. 1`` (small levels) for
    ``fix_theta`` and ``l_j`` over ``s = 1 .. 2^10`` for ``fix_lambda``.
    """
    levels = 2.0 ** -np.arange(21) if mode == "fix_theta" else 2.0 ** np.arange(11)
    Ks = []
    for eq in spec.equations:
        e = eq.op.m if mode == "fix_theta" else eq.op.l
        best = 0.0
        for s in levels:
            z = torsion(eq.op, mesh, float(s), opts).solution.values
            best = max(best, float(np.max(z)) / s ** (1.0 / (e - 1.0)))
        Ks.append(float(best))
    return Ks


def _K_bar(spec, mesh, Ks):
    """``max_i max(K^beta_i |K|_{Psi_i}^alpha_i, K^xi_i |K|_{Lambda_i}^gamma_i)``, ``K`` of the driver."""
    ones = np.ones(mesh.size)
    W, meas = mesh.weights, mesh.measure
    vals = []
    for i, eq in enumerate(spec.equations):
        K = Ks[driver_index(spec, i)]
        vals.append(K**eq.beta * norm_of_values(W, K * ones, eq.norm_f, meas) ** eq.alpha)
        vals.append(K**eq.xi * norm_of_values(W, K * ones, eq.norm_g, meas) ** eq.gamma)
    return float(max(vals))


def _exponents(spec, mode):
    """``(rho, tau)`` bounding every equation's growth exponents for ``mode``."""
    fs, gs = [], []
    for i, eq in enumerate(spec.equations):
        drv = spec.equations[driver_index(spec, i)].op
        e = drv.m if mode == "fix_theta" else drv.l
        fs.append((eq.alpha + eq.beta) / (e - 1.0))
        gs.append((eq.xi + eq.gamma) / (e - 1.0))
    # small levels: the smallest power dominates; large levels: the largest
    pick = min if mode == "fix_theta" else max
    return pick(fs), pick(gs)


def _bisect_increasing(fn, lo, hi, target=1.0, rel=1e-14, max_it=400):
    """Largest ``x`` in ``[lo, hi]`` with ``fn(x) <= target`` for increasing ``fn``; works in log space."""
    a, b = math.log(lo), math.log(hi)
    for _ in range(max_it):
        if b - a <= rel * max(1.0, abs(b)):
            break
        mid = 0.5 * (a + b)
        if fn(math.exp(mid)) <= target:
            a = mid
        else:
            b = mid
    return math.exp(a)


def _bracket_below(fn, start, target=1.0):
    x = start
    for _ in range(2000):
        if fn(x) <= target:
            return x
        x /= 2.0
    raise DegenerateThreshold("could not bracket the threshold from below")


def thresholds_concave_convex(
    spec: ProblemSpec, mesh: Mesh, mode: str, opts: SolverOptions | None = None, K=None
) -> ThresholdReport:
    """Exponents, minimizer and the parameter threshold for ``mode``.

    ``fix_theta``: the largest ``lambda0 <= 1`` with
    ``K lam^rho + theta K lam^(tau-1) <= 1`` (exponents taken over
    ``m - 1``).  ``fix_lambda``: the largest ``theta0`` with
    ``Psi(M_{lam,theta}) <= 1`` and ``M_{lam,theta} >= 1`` (exponents over
    ``l - 1``).  ``K`` is measured from torsion solves unless a previous
    report's ``K`` is passed in (it depends on neither parameter).
    """
    printed = _check_concave_convex(spec, mode)
    rho, tau = _exponents(spec, mode)
    if not tau > rho:
        raise DegenerateThreshold(f"need tau > rho, got rho={rho:g}, tau={tau:g}")
    Ks = list(K) if K is not None else _measure_K(spec, mesh, mode, opts)
    Kb = _K_bar(spec, mesh, Ks)
    lam, theta = spec.lam, spec.theta

    if mode == "fix_theta":
        if not (0.0 < rho and tau > 1.0):
            raise HypothesisViolation(f"need rho > 0 and tau > 1, got rho={rho:g}, tau={tau:g}")

        def lhs(x, th=theta):
            return float(Kb * x**rho + th * Kb * x ** (tau - 1.0))

        capped = bool(lhs(1.0) <= 1.0)
        lam0 = 1.0 if capped else _bisect_increasing(lhs, _bracket_below(lhs, 1.0), 1.0)
        return ThresholdReport(
            mode, rho, tau, None, None, lam0, None, lhs(lam), lhs(lam0), tuple(Ks), Kb, capped, printed, lam, theta
        )

    L = minimizer_constant(rho, tau)

    def psi_min(th):
        M = L * (lam / th) ** (1.0 / (tau - rho))
        return psi_value(M, lam, th, Kb, rho, tau)

    theta_M1 = lam * L ** (tau - rho)  # M_{lam, theta} = 1 here
    hi = theta_M1
    if psi_min(hi) <= 1.0:
        theta0, capped = theta_M1, True
    else:
        theta0 = _bisect_increasing(psi_min, _bracket_below(psi_min, hi), hi)
        capped = False
    M = minimizer(lam, theta, rho, tau)
    return ThresholdReport(
        mode, rho, tau, L, M, None, theta0, psi_value(M, lam, theta, Kb, rho, tau), psi_min(theta0),
        tuple(Ks), Kb, capped, printed, lam, theta,
    )


def build_pair_concave_convex(
    spec: ProblemSpec,
    mesh: Mesh,
    mode: str,
    opts: SolverOptions | None = None,
    delta: float | None = None,
    report: ThresholdReport | None = None,
):
    """Certified pair(s) for the concave-convex problem in ``mode``.

    The supersolution is the torsion function at level ``lam``
    (``fix_theta``) or ``M = max(M_{lam,theta}, 1)`` (``fix_lambda``).  The
    subsolution ``mu eta`` is selected against the concave term only and
    ``mu`` is halved until ``A(mu eta)`` stays below ``lam`` or ``1``.
    Raises :class:`CertificationFailure` when the parameter is not below
    the computed threshold or any nodewise inequality fails.
    """
    rep = report if report is not None else thresholds_concave_convex(spec, mesh, mode, opts)
    if not rep.below_threshold:
        name, val, thr = ("lambda", spec.lam, rep.lambda0) if mode == "fix_theta" else ("theta", spec.theta, rep.theta0)
        raise CertificationFailure(
            f"{name}={val:g} is not below the threshold {thr:.6g} (constraint value {rep.psi_at_M:.6g})",
            None,
            1.0 - rep.psi_at_M,
        )
    eps = _eps(opts)
    if mode == "fix_theta":
        level = spec.lam
        cap = spec.lam
    else:
        level = max(rep.M, 1.0)
        cap = min(1.0, level)
    zs = _torsions(spec, mesh, level, opts)

    dist = distance_field(mesh, delta)
    params, subs = _select_k(_concave_part(spec), mesh, dist, eps)
    etas = [s / params.mu for s in subs]
    mu = params.mu
    inner = mesh.interior
    for _ in range(_MAX_MU_HALVINGS):
        A = _operators(spec, mesh, subs, eps)
        if max(float(np.max(a[inner])) for a in A) <= cap:
            break
        mu /= 2.0
        subs = [mu * e for e in etas]
    else:
        raise CertificationFailure(f"could not bring the subsolution operator below {cap:g}")
    params = params.with_mu(mu)

    _check_ordering(mesh, subs, zs)
    certs = certify_pair(spec, [GridFunction(mesh, s) for s in subs], [GridFunction(mesh, z) for z in zs], opts)
    _raise_if_failed(certs)
    meta = {"construction": "concave_convex", "mode": mode, "K_bar": rep.K_bar, "thresholds": rep.to_dict()}
    pairs = [
        SubSuperPair(GridFunction(mesh, s), GridFunction(mesh, z), c, params, level, dict(meta))
        for s, z, c in zip(subs, zs, certs)
    ]
    return _single(spec, pairs)
