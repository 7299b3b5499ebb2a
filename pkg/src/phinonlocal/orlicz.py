"""Modulars and Luxemburg norms of grid functions.

Both are taken with respect to the mesh quadrature, so they are exact
statements about the discrete problem rather than approximations of the
continuum quantities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import BracketFailure
from .grid import GridFunction
from .nfunction import NFunction

__all__ = ["LuxemburgResult", "modular", "luxemburg_norm", "norm_of_values"]

_MAX_BRACKET = 200
_RTOL = 4.0 * np.finfo(float).eps


@dataclass(frozen=True)
class LuxemburgResult:
    norm: float
    modular_at_norm: float
    root_iterations: int

    def to_dict(self) -> dict:
        return {
            "norm": self.norm,
            "modular_at_norm": self.modular_at_norm,
            "root_iterations": self.root_iterations,
        }


def modular(u: GridFunction, nf: NFunction) -> float:
    """Quadrature value of ``int Phi(|u|) dx``."""
    return float(u.mesh.weights @ nf.Phi(u.values))


def luxemburg_norm(u: GridFunction, nf: NFunction) -> LuxemburgResult:
    return _luxemburg(u.mesh.weights, u.values, nf, u.mesh.measure)


def norm_of_values(weights, values, nf: NFunction, measure: float | None = None) -> float:
    """Luxemburg norm of raw nodal ``values``; shortcut used by the solvers."""
    if measure is None:
        measure = float(np.sum(weights))
    return _luxemburg(weights, values, nf, measure).norm


def _luxemburg(weights, values, nf, measure) -> LuxemburgResult:
    a = np.abs(np.asarray(values, dtype=float))
    top = float(a.max()) if a.size else 0.0
    if top == 0.0:
        return LuxemburgResult(0.0, 0.0, 0)
    # only nodes that carry weight and value matter
    keep = (a > 0.0) & (weights > 0.0)
    a, w = a[keep] / top, weights[keep]

    # work with s = lam / top so that the scan is scale free
    def excess(s):
        return float(w @ nf.Phi(a / s)) - 1.0

    s0 = measure ** (1.0 / nf.l)
    lo = hi = s0
    f0 = excess(s0)
    if f0 > 0.0:
        for _ in range(_MAX_BRACKET):
            hi *= 2.0
            if excess(hi) <= 0.0:
                break
        else:
            raise BracketFailure(f"modular stays above 1 after {_MAX_BRACKET} doublings")
        lo = hi / 2.0
    else:
        for _ in range(_MAX_BRACKET):
            lo /= 2.0
            if excess(lo) > 0.0:
                break
        else:
            raise BracketFailure(f"modular stays below 1 after {_MAX_BRACKET} halvings")
        hi = lo * 2.0

    # excess is decreasing in s; Brent on the bracket reaches machine precision
    s, info = optimize.brentq(excess, lo, hi, xtol=1e-300, rtol=_RTOL, maxiter=200, full_output=True)
    if not info.converged:
        raise BracketFailure(f"root search did not converge: {info.flag}")
    return LuxemburgResult(s * top, excess(s) + 1.0, info.iterations)
