"""N-functions generated by a density.

An N-function here is always of the form ``Phi(t) = int_0^|t| phi(s) s ds``
for a density ``phi``.  The catalog covers the usual quasilinear operators
(p-Laplacian, (p,q)-Laplacian, nonlinear elasticity, minimal surface,
plasticity); anything else goes through :func:`custom` with declared growth
exponents that are checked by sampling.

All evaluations are vectorized over numpy arrays.  The solver never needs
``phi`` alone at a vanishing argument, it works with the flux ``t*phi(t)``
and its derivative, which stay finite for every catalog family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ExponentDeclarationInvalid, InvalidParams, NonFiniteValue, QuadratureFailure

__all__ = [
    "NFunction",
    "power_law",
    "power_sum",
    "elasticity",
    "minimal_surface",
    "plasticity",
    "custom",
    "from_config",
    "eval_phi",
    "eval_Phi",
    "zeta",
    "zeta_bounds",
    "exponent_ratio",
    "delta2_bound",
    "PROBE_POINTS",
]

# Sampling grid for the growth-condition checks.
PROBE_POINTS = np.logspace(-6, 6, 97)
_RATIO_SLACK = 1e-9
_QUAD_RTOL = 1e-12


@dataclass(frozen=True)
class NFunction:
    """An N-function ``Phi`` together with its density and growth exponents.

    Use the factory functions (:func:`power_law`, :func:`power_sum`, ...)
    rather than the constructor.  ``params`` holds the family parameters in
    the order they are documented on the factory.
    """

    kind: str
    params: tuple
    l: float
    m: float
    density: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (1.0 <= self.l <= self.m):
            raise ExponentDeclarationInvalid(f"need 1 <= l <= m, got l={self.l}, m={self.m}")
        _check_growth(self)

    # -- evaluations -------------------------------------------------------

    def phi(self, t):
        """Density ``phi(t)`` for ``t >= 0``."""
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = _PHI[self.kind](self, t)
        return _finite(out, "phi", t)

    def flux(self, t):
        """``t * phi(t)``, the magnitude of the operator flux."""
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = _FLUX[self.kind](self, t)
        return _finite(out, "t*phi", t)

    def dflux(self, t):
        """Derivative of ``t -> t*phi(t)``."""
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = _DFLUX[self.kind](self, t)
        return _finite(out, "(t*phi)'", t)

    def Phi(self, t):
        """``Phi(t)``; even in ``t``."""
        t = np.abs(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = _BIGPHI[self.kind](self, t)
        return _finite(out, "Phi", t)

    @property
    def admissible(self) -> bool:
        """True when ``l > 1``, as the existence theory requires."""
        return self.l > 1.0

    def to_config(self) -> dict:
        if self.kind == "custom":
            return {"kind": "custom", "l": self.l, "m": self.m}
        names = _PARAM_NAMES[self.kind]
        return {"kind": self.kind, **dict(zip(names, self.params))}


def _finite(out, what, t):
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        bad = np.broadcast_to(t, out.shape)[~np.isfinite(out)]
        raise NonFiniteValue(f"{what} is not finite at t={bad[:3]}")
    return out if out.ndim else float(out)


# -- family formulas ---------------------------------------------------------
# Each entry takes (nf, t) with t >= 0 already applied.


def _pl_phi(nf, t):
    p, c = nf.params
    return c * p * t ** (p - 2.0)


def _pl_flux(nf, t):
    p, c = nf.params
    return c * p * t ** (p - 1.0)


def _pl_dflux(nf, t):
    p, c = nf.params
    return c * p * (p - 1.0) * t ** (p - 2.0)


def _pl_Phi(nf, t):
    p, c = nf.params
    return c * t**p


def _ps_phi(nf, t):
    p, q = nf.params
    return p * t ** (p - 2.0) + q * t ** (q - 2.0)


def _ps_flux(nf, t):
    p, q = nf.params
    return p * t ** (p - 1.0) + q * t ** (q - 1.0)


def _ps_dflux(nf, t):
    p, q = nf.params
    return p * (p - 1.0) * t ** (p - 2.0) + q * (q - 1.0) * t ** (q - 2.0)


def _ps_Phi(nf, t):
    p, q = nf.params
    return t**p + t**q


def _el_phi(nf, t):
    (g,) = nf.params
    return 2.0 * g * (1.0 + t * t) ** (g - 1.0)


def _el_flux(nf, t):
    return t * _el_phi(nf, t)


def _el_dflux(nf, t):
    (g,) = nf.params
    s = 1.0 + t * t
    return 2.0 * g * s ** (g - 2.0) * (1.0 + (2.0 * g - 1.0) * t * t)


def _el_Phi(nf, t):
    (g,) = nf.params
    return np.expm1(g * np.log1p(t * t))


def _ms_parts(t):
    r = np.sqrt(1.0 + t * t)
    s = t * t / (r + 1.0)  # r - 1 without cancellation
    return r, s


def _ms_phi(nf, t):
    (g,) = nf.params
    r, s = _ms_parts(t)
    return g * s ** (g - 1.0) / r


def _ms_flux(nf, t):
    return t * _ms_phi(nf, t)


def _ms_dflux(nf, t):
    (g,) = nf.params
    r, s = _ms_parts(t)
    return g * s ** (g - 1.0) * ((g - 1.0) * (s + 2.0) / (r * r) + 1.0 / r**3)


def _ms_Phi(nf, t):
    (g,) = nf.params
    _, s = _ms_parts(t)
    return s**g


def _pz_phi(nf, t):
    (p,) = nf.params
    return p * t ** (p - 2.0) * np.log1p(t) + t ** (p - 1.0) / (1.0 + t)


def _pz_flux(nf, t):
    (p,) = nf.params
    return p * t ** (p - 1.0) * np.log1p(t) + t**p / (1.0 + t)


def _pz_dflux(nf, t):
    (p,) = nf.params
    return (
        p * (p - 1.0) * t ** (p - 2.0) * np.log1p(t)
        + 2.0 * p * t ** (p - 1.0) / (1.0 + t)
        - t**p / (1.0 + t) ** 2
    )


def _pz_Phi(nf, t):
    (p,) = nf.params
    return t**p * np.log1p(t)


def _cu_phi(nf, t):
    return np.vectorize(lambda s: float(nf.density(s)), otypes=[float])(t)


def _cu_flux(nf, t):
    return t * _cu_phi(nf, t)


def _cu_dflux(nf, t):
    # central difference with a relative step
    h = 1e-6 * np.maximum(t, 1e-8)
    return (_cu_flux(nf, t + h) - _cu_flux(nf, np.maximum(t - h, 0.0))) / (t + h - np.maximum(t - h, 0.0))


def _cu_Phi_scalar(nf, t):
    if t == 0.0:
        return 0.0
    val, abserr, info = integrate.quad(
        lambda s: float(nf.density(s)) * s, 0.0, t, epsabs=1e-300, epsrel=_QUAD_RTOL, limit=500, full_output=1
    )[:3]
    if abserr > max(_QUAD_RTOL * abs(val), 1e-300) * 10 and info.get("last", 0) >= 500:
        raise QuadratureFailure(f"Phi({t}) did not converge: value {val}, error estimate {abserr}")
    return val


def _cu_Phi(nf, t):
    return np.vectorize(lambda s: _cu_Phi_scalar(nf, s), otypes=[float])(t)


_PHI = {
    "power_law": _pl_phi,
    "power_sum": _ps_phi,
    "elasticity": _el_phi,
    "minimal_surface": _ms_phi,
    "plasticity": _pz_phi,
    "custom": _cu_phi,
}
_FLUX = {
    "power_law": _pl_flux,
    "power_sum": _ps_flux,
    "elasticity": _el_flux,
    "minimal_surface": _ms_flux,
    "plasticity": _pz_flux,
    "custom": _cu_flux,
}
_DFLUX = {
    "power_law": _pl_dflux,
    "power_sum": _ps_dflux,
    "elasticity": _el_dflux,
    "minimal_surface": _ms_dflux,
    "plasticity": _pz_dflux,
    "custom": _cu_dflux,
}
_BIGPHI = {
    "power_law": _pl_Phi,
    "power_sum": _ps_Phi,
    "elasticity": _el_Phi,
    "minimal_surface": _ms_Phi,
    "plasticity": _pz_Phi,
    "custom": _cu_Phi,
}
_PARAM_NAMES = {
    "power_law": ("p", "scale"),
    "power_sum": ("p", "q"),
    "elasticity": ("gamma",),
    "minimal_surface": ("gamma",),
    "plasticity": ("p",),
}


def _check_growth(nf: NFunction) -> None:
    t = PROBE_POINTS
    flux = nf.flux(t)
    if np.any(nf.phi(t) <= 0.0):
        raise ExponentDeclarationInvalid(f"{nf.kind}: density must be positive")
    if np.any(np.diff(flux) <= 0.0):
        raise ExponentDeclarationInvalid(f"{nf.kind}: t*phi(t) is not strictly increasing")
    lo, mid, hi = nf.flux(np.array([1e-8, 1.0, 1e8]))
    if not lo < mid < hi:
        raise ExponentDeclarationInvalid(f"{nf.kind}: t*phi(t) does not grow from 0 to infinity")
    ratio = t * flux / nf.Phi(t)
    slack = _RATIO_SLACK * max(1.0, nf.m)
    if np.any(ratio < nf.l - slack) or np.any(ratio > nf.m + slack):
        worst = t[np.argmax(np.maximum(nf.l - ratio, ratio - nf.m))]
        raise ExponentDeclarationInvalid(
            f"{nf.kind}: phi(t)t^2/Phi(t) leaves [{nf.l}, {nf.m}] near t={worst:.3g} "
            f"(range seen [{ratio.min():.6g}, {ratio.max():.6g}])"
        )


# -- factories ---------------------------------------------------------------


def power_law(p: float, scale: float = 1.0) -> NFunction:
    """``Phi(t) = scale |t|^p``, density ``phi(t) = scale p t^(p-2)``.

    With the default ``scale=1`` the operator is ``p`` times the usual
    p-Laplacian ``div(|grad u|^(p-2) grad u)``; ``scale=1/p`` gives the
    usual one.
    """
    if not p > 1.0:
        raise InvalidParams(f"power_law needs p > 1, got {p}")
    if not scale > 0.0:
        raise InvalidParams(f"power_law needs scale > 0, got {scale}")
    return NFunction("power_law", (float(p), float(scale)), float(p), float(p))


def power_sum(p: float, q: float) -> NFunction:
    """``phi(t) = p t^(p-2) + q t^(q-2)``, the (p,q)-Laplacian, ``1 < p <= q``."""
    if not 1.0 < p <= q:
        raise InvalidParams(f"power_sum needs 1 < p <= q, got p={p}, q={q}")
    return NFunction("power_sum", (float(p), float(q)), float(p), float(q))


def elasticity(gamma: float) -> NFunction:
    """``phi(t) = 2 gamma (1+t^2)^(gamma-1)``; exponents ``l=2, m=2 gamma``."""
    if not gamma >= 1.0:
        raise InvalidParams(f"elasticity needs gamma >= 1, got {gamma}")
    return NFunction("elasticity", (float(gamma),), 2.0, 2.0 * gamma)


def minimal_surface(gamma: float) -> NFunction:
    """``phi(t) = gamma (sqrt(1+t^2)-1)^(gamma-1) / sqrt(1+t^2)``.

    ``Phi(t) = (sqrt(1+t^2)-1)^gamma``; exponents ``l=gamma, m=2 gamma``.
    For ``gamma=1`` the lower exponent is 1, so the result evaluates fine
    but is not :attr:`NFunction.admissible`.
    """
    if not gamma >= 1.0:
        raise InvalidParams(f"minimal_surface needs gamma >= 1, got {gamma}")
    return NFunction("minimal_surface", (float(gamma),), float(gamma), 2.0 * gamma)


def plasticity(p: float) -> NFunction:
    """``Phi(t) = |t|^p ln(1+|t|)``; exponents ``l=p, m=p+1``."""
    if not p > 1.0:
        raise InvalidParams(f"plasticity needs p > 1, got {p}")
    return NFunction("plasticity", (float(p),), float(p), float(p) + 1.0)


def custom(phi: Callable[[float], float], l: float, m: float) -> NFunction:
    """N-function from a user density with declared growth exponents.

    ``Phi`` is computed by adaptive quadrature.  Raises
    :class:`ExponentDeclarationInvalid` if ``l <= phi(t)t^2/Phi(t) <= m``
    fails at any probe point.
    """
    return NFunction("custom", (), float(l), float(m), density=phi)


_PARAM_DEFAULTS = {"power_law": {"scale": 1.0}}

_FACTORIES = {
    "power_law": power_law,
    "power_sum": power_sum,
    "elasticity": elasticity,
    "minimal_surface": minimal_surface,
    "plasticity": plasticity,
}


def from_config(cfg: dict) -> NFunction:
    """Build a catalog N-function from ``{"kind": tag, <params>}``."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind not in _FACTORIES:
        raise InvalidParams(f"unknown N-function kind {kind!r}; expected one of {sorted(_FACTORIES)}")
    names = _PARAM_NAMES[kind]
    cfg = {**_PARAM_DEFAULTS.get(kind, {}), **cfg}
    missing = [n for n in names if n not in cfg]
    extra = [k for k in cfg if k not in names]
    if missing or extra:
        raise InvalidParams(f"{kind}: expected parameters {list(names)}, missing {missing}, unexpected {extra}")
    bad = [n for n in names if isinstance(cfg[n], bool) or not isinstance(cfg[n], (int, float))]
    if bad:
        raise InvalidParams(f"{kind}: parameters {bad} must be numbers")
    return _FACTORIES[kind](*(float(cfg[n]) for n in names))


# -- operation-style API -------------------------------------------------------


def eval_phi(nf: NFunction, t):
    return nf.phi(t)


def eval_Phi(nf: NFunction, t):
    return nf.Phi(t)


def zeta(l: float, m: float, t):
    """``(min(t^l, t^m), max(t^l, t^m))``."""
    t = np.asarray(t, dtype=float)
    a, b = t**l, t**m
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def zeta_bounds(nf: NFunction, t):
    return zeta(nf.l, nf.m, t)


def exponent_ratio(nf: NFunction, t):
    """``phi(t) t^2 / Phi(t)`` for ``t > 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise NonFiniteValue("exponent_ratio needs t > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = t * nf.flux(t) / nf.Phi(t)
    return _finite(out, "exponent ratio", t)


def delta2_bound(nf: NFunction) -> float:
    """A valid Delta_2 constant: ``Phi(2t) <= 2^m Phi(t)`` for all ``t``."""
    return math.pow(2.0, nf.m)
