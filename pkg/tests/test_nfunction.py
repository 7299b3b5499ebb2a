import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from phinonlocal import (
    ExponentDeclarationInvalid,
    InvalidParams,
    custom,
    delta2_bound,
    elasticity,
    eval_Phi,
    eval_phi,
    exponent_ratio,
    from_config,
    minimal_surface,
    plasticity,
    power_law,
    power_sum,
    zeta,
    zeta_bounds,
)

FAMILIES = [
    power_law(2.0),
    power_law(3.0),
    power_law(1.5),
    power_sum(2.0, 3.0),
    elasticity(2.0),
    minimal_surface(2.0),
    plasticity(2.0),
]


def test_density_values():
    assert eval_phi(power_law(2.0), 5.0) == pytest.approx(2.0)
    assert eval_phi(power_sum(2.0, 3.0), 1.0) == pytest.approx(5.0)
    assert eval_phi(elasticity(2.0), 1.0) == pytest.approx(8.0)


def test_Phi_values():
    assert eval_Phi(power_law(3.0), 2.0) == pytest.approx(8.0)
    assert eval_Phi(minimal_surface(1.0), 1.0) == pytest.approx(math.sqrt(2.0) - 1.0, rel=1e-12)
    for nf in FAMILIES:
        assert eval_Phi(nf, 0.0) == 0.0


@pytest.mark.parametrize("nf", FAMILIES, ids=lambda nf: f"{nf.kind}{nf.params}")
def test_closed_form_Phi_matches_quadrature(nf):
    # Phi(t) = int_0^t s phi(s) ds, computed independently
    for t in (0.01, 0.5, 1.0, 3.0, 20.0):
        ref, _ = integrate.quad(lambda s: s * float(nf.phi(s)), 0.0, t, epsabs=0, epsrel=1e-12, limit=200)
        assert float(nf.Phi(t)) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("nf", FAMILIES, ids=lambda nf: f"{nf.kind}{nf.params}")
def test_even_and_convex(nf):
    t = np.linspace(-5, 5, 201)
    vals = nf.Phi(t)
    assert np.allclose(vals, nf.Phi(-t), rtol=0, atol=0)
    assert np.all(np.diff(vals, 2) >= -1e-12 * np.max(vals))


def test_zeta_examples():
    assert zeta(2.0, 3.0, 0.5) == (0.125, 0.25)
    assert zeta(2.0, 2.0, 3.0) == (9.0, 9.0)
    assert zeta(2.0, 3.0, 1.0) == (1.0, 1.0)


def test_exponent_ratio_examples():
    t = np.logspace(-3, 3, 13)
    assert np.allclose(exponent_ratio(power_law(2.5), t), 2.5, rtol=1e-12)
    ps = power_sum(2.0, 3.0)
    assert float(exponent_ratio(ps, 1e-6)) == pytest.approx(2.0, abs=1e-5)
    assert float(exponent_ratio(ps, 1e6)) == pytest.approx(3.0, abs=1e-5)


@pytest.mark.parametrize("nf", FAMILIES, ids=lambda nf: f"{nf.kind}{nf.params}")
def test_exponent_ratio_within_declared_bounds(nf):
    r = exponent_ratio(nf, np.logspace(-6, 6, 241))
    assert np.all(r >= nf.l - 1e-9) and np.all(r <= nf.m + 1e-9)


def test_delta2_bound_examples():
    assert delta2_bound(power_law(2.0)) == pytest.approx(4.0)
    ps = power_sum(2.0, 3.0)
    assert delta2_bound(ps) == pytest.approx(8.0)
    t = np.logspace(-6, 6, 500)
    assert np.all(ps.Phi(2 * t) <= 8.0 * ps.Phi(t) * (1 + 1e-12))
    assert delta2_bound(custom(lambda s: 1.5 * s**-0.5, 1.5, 1.5)) == pytest.approx(2**1.5)


def test_family_exponents():
    assert (power_law(3.0).l, power_law(3.0).m) == (3.0, 3.0)
    assert (power_sum(2.0, 3.0).l, power_sum(2.0, 3.0).m) == (2.0, 3.0)
    assert (elasticity(2.0).l, elasticity(2.0).m) == (2.0, 4.0)
    assert (minimal_surface(2.0).l, minimal_surface(2.0).m) == (2.0, 4.0)
    assert (plasticity(2.0).l, plasticity(2.0).m) == (2.0, 3.0)


def test_scaled_power_law_is_standard_p_laplacian_flux():
    nf = power_law(3.0, scale=1.0 / 3.0)
    t = np.array([0.1, 1.0, 4.0])
    assert np.allclose(nf.flux(t), t**2, rtol=1e-14)
    assert nf.l == nf.m == 3.0


def test_invalid_parameters():
    with pytest.raises(InvalidParams):
        power_law(1.0)
    with pytest.raises(InvalidParams):
        power_sum(3.0, 2.0)
    with pytest.raises(InvalidParams):
        from_config({"kind": "nope"})


def test_custom_declaration_is_checked():
    # t^2 + t^3 has ratio in [2, 3]; declaring [2, 2.5] must fail
    phi = lambda s: 2.0 + 3.0 * s  # noqa: E731
    ok = custom(phi, 2.0, 3.0)
    assert float(ok.Phi(1.0)) == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(ExponentDeclarationInvalid):
        custom(phi, 2.0, 2.5)


def test_config_round_trip():
    for nf in FAMILIES:
        again = from_config(nf.to_config())
        assert again.kind == nf.kind and again.params == nf.params


@given(
    st.sampled_from(FAMILIES),
    st.floats(1e-3, 1e3),
    st.floats(1e-3, 1e3),
)
def test_growth_sandwich(nf, rho, t):
    lo, hi = zeta_bounds(nf, t)
    val = float(nf.Phi(rho * t))
    base = float(nf.Phi(rho))
    assert lo * base * (1 - 1e-9) <= val <= hi * base * (1 + 1e-9)


@given(st.sampled_from(FAMILIES), st.floats(1e-4, 1e4), st.floats(1e-4, 1e4))
def test_flux_monotone(nf, a, b):
    lo, hi = sorted((a, b))
    assert float(nf.flux(lo)) <= float(nf.flux(hi)) * (1 + 1e-14)
