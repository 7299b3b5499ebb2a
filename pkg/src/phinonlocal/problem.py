"""Nonlocal problems: operators, norms, exponents and right-hand sides.

A problem has one or two equations.  Equation ``i`` reads

    -Delta_{Phi_i} u_i = lam * f_i(u_i, w) |w|_{Psi_i}^alpha_i
                         + theta * g_i(u_i, w) |w|_{Lambda_i}^gamma_i

where the *driver* ``w`` is ``u_i`` itself for a scalar problem and the
other unknown for a system.  By default ``f_i = w^beta_i`` and
``g_i = w^xi_i``; user maps take ``(own, driver)`` arrays and must be
nonnegative and nondecreasing in both arguments.  ``theta = 0`` drops the
second term altogether.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParams
from .grid import Mesh
from .nfunction import NFunction
from .orlicz import norm_of_values

__all__ = ["Equation", "ProblemSpec", "driver_index", "rhs_values", "nonlocal_norms", "check_nonlinearities"]


@dataclass(frozen=True)
class Equation:
    """One equation of a (possibly coupled) nonlocal problem."""

    op: NFunction
    norm_f: NFunction
    alpha: float
    beta: float
    norm_g: NFunction | None = None
    gamma: float = 0.0
    xi: float = 0.0
    f: Callable | None = field(default=None, compare=False, repr=False)
    g: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "xi"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0.0):
                raise InvalidParams(f"exponent {name} must be a finite nonnegative number, got {val}")

    def f_values(self, own, driver):
        if self.f is not None:
            return np.asarray(self.f(own, driver), dtype=float)
        return np.maximum(driver, 0.0) ** self.beta

    def g_values(self, own, driver):
        if self.g is not None:
            return np.asarray(self.g(own, driver), dtype=float)
        return np.maximum(driver, 0.0) ** self.xi

    @property
    def custom_nonlinearity(self) -> bool:
        return self.f is not None or self.g is not None

    def to_dict(self) -> dict:
        out = {
            "operator": self.op.to_config(),
            "norm_f": self.norm_f.to_config(),
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "xi": self.xi,
        }
        if self.norm_g is not None:
            out["norm_g"] = self.norm_g.to_config()
        if self.custom_nonlinearity:
            out["custom_nonlinearity"] = True
        return out


@dataclass(frozen=True)
class ProblemSpec:
    equations: tuple
    lam: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        if len(self.equations) not in (1, 2):
            raise InvalidParams(f"need 1 or 2 equations, got {len(self.equations)}")
        if not (np.isfinite(self.lam) and self.lam > 0.0):
            raise InvalidParams(f"lambda must be positive, got {self.lam}")
        if not (np.isfinite(self.theta) and self.theta >= 0.0):
            raise InvalidParams(f"theta must be nonnegative, got {self.theta}")
        if self.theta > 0.0 and any(eq.norm_g is None for eq in self.equations):
            raise InvalidParams("theta > 0 needs a norm_g N-function in every equation")

    @property
    def n_equations(self) -> int:
        return len(self.equations)

    def with_params(self, lam: float | None = None, theta: float | None = None) -> "ProblemSpec":
        return ProblemSpec(
            self.equations,
            self.lam if lam is None else lam,
            self.theta if theta is None else theta,
        )

    def to_dict(self) -> dict:
        return {
            "n_equations": self.n_equations,
            "lambda": self.lam,
            "theta": self.theta,
            "equations": [eq.to_dict() for eq in self.equations],
        }

    @classmethod
    def scalar(cls, op, alpha, beta, norm_f=None, *, lam=1.0, theta=0.0, gamma=0.0, xi=0.0, norm_g=None, f=None, g=None):
        """Single equation; ``norm_f`` and ``norm_g`` default to the operator's N-function."""
        norm_f = op if norm_f is None else norm_f
        if theta > 0.0 and norm_g is None:
            norm_g = op
        eq = Equation(op, norm_f, alpha, beta, norm_g, gamma, xi, f, g)
        return cls((eq,), lam, theta)


def driver_index(spec: ProblemSpec, i: int) -> int:
    return i if spec.n_equations == 1 else 1 - i


def nonlocal_norms(spec: ProblemSpec, mesh: Mesh, states: Sequence[np.ndarray], i: int) -> tuple:
    """``(|w|_{Psi_i}, |w|_{Lambda_i})`` for the driver ``w`` of equation ``i``.

    The second entry is ``None`` when the problem has no ``theta`` term.
    """
    eq = spec.equations[i]
    w = states[driver_index(spec, i)]
    W, meas = mesh.weights, mesh.measure
    npsi = norm_of_values(W, w, eq.norm_f, meas)
    nlam = norm_of_values(W, w, eq.norm_g, meas) if (spec.theta > 0.0 and eq.norm_g is not None) else None
    return npsi, nlam


def rhs_values(spec: ProblemSpec, mesh: Mesh, states: Sequence[np.ndarray], i: int, norms=None) -> np.ndarray:
    """Nodal right-hand side of equation ``i`` evaluated on ``states``.

    Boundary entries are zero.  ``norms`` may pass precomputed values from
    :func:`nonlocal_norms`.
    """
    eq = spec.equations[i]
    own = np.asarray(states[i], dtype=float)
    w = np.asarray(states[driver_index(spec, i)], dtype=float)
    npsi, nlam = norms if norms is not None else nonlocal_norms(spec, mesh, states, i)
    out = spec.lam * eq.f_values(own, w) * npsi**eq.alpha
    if spec.theta > 0.0:
        out = out + spec.theta * eq.g_values(own, w) * nlam**eq.gamma
    return np.where(mesh.interior, out, 0.0)


def check_nonlinearities(spec: ProblemSpec, upper: float, samples: int = 33) -> None:
    """Sample ``f_i, g_i`` on ``[0, upper]^2`` for sign, finiteness and monotonicity.

    Raises :class:`InvalidParams` on the first failure.  Default power maps
    are skipped since they are monotone by construction.
    """
    t = np.linspace(0.0, max(float(upper), 1e-300), samples)
    own, drv = np.meshgrid(t, t, indexing="ij")
    for i, eq in enumerate(spec.equations):
        for name, fn in (("f", eq.f), ("g", eq.g)):
            if fn is None:
                continue
            vals = np.asarray(fn(own, drv), dtype=float)
            vals = np.broadcast_to(vals, own.shape)
            if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
                raise InvalidParams(f"equation {i + 1}: {name} must be finite and nonnegative on [0, {upper:g}]")
            if np.any(np.diff(vals, axis=0) < -1e-12) or np.any(np.diff(vals, axis=1) < -1e-12):
                raise InvalidParams(f"equation {i + 1}: {name} is not nondecreasing on [0, {upper:g}]")
