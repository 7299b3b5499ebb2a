import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phinonlocal import (
    BoundaryLayerParams,
    CertificationFailure,
    DegenerateThreshold,
    Equation,
    GridFunction,
    HypothesisViolation,
    InvalidParams,
    ProblemSpec,
    apply_philap,
    build_eta,
    build_pair_concave_convex,
    build_pair_sublinear,
    certify_pair,
    distance_field,
    make_mesh,
    minimizer,
    minimizer_constant,
    power_law,
    power_sum,
    psi_value,
    rhs_values,
    select_k_sublinear,
    select_lambda_supersolution,
    thresholds_concave_convex,
    torsion,
)

P2 = power_law(2.0)


@pytest.fixture(scope="module")
def mesh801():
    return make_mesh(1, [0.0, 1.0], 801)


@pytest.fixture(scope="module")
def mesh201():
    return make_mesh(1, [0.0, 1.0], 201)


def test_params_seam_value():
    p = BoundaryLayerParams.from_k(16.0, 1 / 6)
    assert math.exp(p.k * p.sigma) == pytest.approx(2.0, abs=1e-12)
    assert p.mu == pytest.approx(math.exp(-16.0))


@pytest.mark.parametrize("nf", [P2, power_sum(2.0, 3.0), power_law(3.0)], ids=str)
def test_eta_profile_values(nf):
    # a mesh whose nodes hit d = sigma and d = 2 delta exactly
    k, delta = 8.0 * math.log(2.0), 0.25
    params = BoundaryLayerParams.from_k(k, delta)  # sigma = 1/8
    mesh = make_mesh(1, [0.0, 1.0], 65)
    x = mesh.points[:, 0]
    eta = build_eta(mesh, nf, params).values
    assert eta[0] == 0.0 and eta[-1] == 0.0
    i_sigma = int(np.argmin(np.abs(x - 0.125)))
    assert eta[i_sigma] == pytest.approx(1.0, abs=1e-12)
    r = nf.m / (nf.l - 1.0)
    plateau = 2.0 - 1.0 + k * 2.0 * (2 * delta - params.sigma) / (r + 1.0)
    far = np.minimum(x, 1 - x) >= 2 * delta
    assert np.allclose(eta[far], plateau, rtol=1e-14)
    # nondecreasing towards the centre and continuous across the seams
    half = eta[: mesh.size // 2 + 1]
    assert np.all(np.diff(half) >= 0)
    fine = make_mesh(1, [0.0, 1.0], 20001)
    ef = build_eta(fine, nf, params).values
    assert np.max(np.abs(np.diff(ef))) < 1e-2


def test_eta_rejects_sigma_beyond_delta():
    with pytest.raises(InvalidParams):
        build_eta(make_mesh(1, [0, 1], 51), P2, BoundaryLayerParams.from_k(2.0, 0.1))


def test_subsolution_is_operator_free_on_plateau(mesh801):
    spec = ProblemSpec.scalar(P2, 0.3, 0.3)
    params, sub = select_k_sublinear(spec, mesh801)
    d = distance_field(mesh801).d.values
    A = apply_philap(P2, sub).values
    plateau = mesh801.interior & (d >= 2 * params.delta + mesh801.h[0])
    assert np.all(np.abs(A[plateau]) <= 1e-12)
    margin = rhs_values(spec, mesh801, [sub.values], 0) - A
    assert np.all(margin[mesh801.interior] >= 0)
    assert np.isfinite(params.k)


def test_select_k_hypothesis_boundary(mesh201):
    with pytest.raises(HypothesisViolation):
        select_k_sublinear(ProblemSpec.scalar(P2, 0.5, 0.5), mesh201)


def test_select_lambda(mesh801):
    spec = ProblemSpec.scalar(P2, 0.3, 0.3)
    lam, z = select_lambda_supersolution(spec, mesh801)
    npsi = np.sqrt(mesh801.weights @ z.values**2)
    assert np.max(z.values**0.3 * npsi**0.3) / lam <= 1.0 + 1e-10
    # alpha = beta = 0 passes at lambda = 1 exactly
    lam0, _ = select_lambda_supersolution(ProblemSpec.scalar(P2, 0.0, 0.0), mesh801)
    assert lam0 == 1.0
    with pytest.raises(HypothesisViolation):
        select_lambda_supersolution(ProblemSpec.scalar(P2, 0.6, 0.4), mesh801)


def test_sublinear_pair_scalar(mesh801):
    pair = build_pair_sublinear(ProblemSpec.scalar(P2, 0.3, 0.3), mesh801)
    c = pair.certificate
    assert c.holds and c.min_margin >= -1e-8
    inner = mesh801.interior
    assert np.all(pair.sub.values[inner] > 0)
    assert np.all(pair.sub.values <= pair.super.values)
    d = pair.to_dict()
    assert d["certificate"]["holds"] is True


def test_sublinear_pair_system(mesh201):
    eqs = (Equation(P2, P2, 0.2, 0.2), Equation(power_law(2.5), power_law(2.5), 0.2, 0.2))
    pairs = build_pair_sublinear(ProblemSpec(eqs), mesh201)
    assert len(pairs) == 2 and all(p.certificate.holds for p in pairs)


def test_sublinear_rejects_large_growth(mesh201):
    eqs = (Equation(P2, P2, 0.2, 0.2), Equation(power_law(3.0), power_law(3.0), 0.6, 0.6))
    # alpha + beta of the second equation exceeds min(l) - 1 = 1
    with pytest.raises(HypothesisViolation):
        build_pair_sublinear(ProblemSpec(eqs), mesh201)


def test_certify_detects_bad_candidates(mesh201):
    spec = ProblemSpec.scalar(P2, 0.3, 0.3)
    z = torsion(P2, mesh201, 1.0).solution
    # z_1 scaled up by 100 is far above the nonlinearity: a supersolution, not a subsolution
    big = GridFunction(mesh201, 100 * z.values)
    (c,) = certify_pair(spec, [big], [big])
    assert not c.holds
    assert c.failure()[0] == "subsolution"
    assert c.to_dict()["min_sub_margin"] < 0 and "coords" in c.to_dict()["worst_sub"]


def test_minimizer_constant_examples():
    assert minimizer_constant(0.5, 2.0) == pytest.approx(0.5 ** (2 / 3), abs=1e-15)
    assert minimizer(10.0, 0.1, 0.5, 2.0) == pytest.approx(0.5 ** (2 / 3) * 100 ** (2 / 3), rel=1e-14)
    with pytest.raises(DegenerateThreshold):
        minimizer_constant(2.0, 0.5)


@given(st.floats(0.05, 0.95), st.floats(1.05, 4.0), st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_minimizer_minimizes_psi(rho, tau, lam, theta):
    M = minimizer(lam, theta, rho, tau)
    at = psi_value(M, lam, theta, 1.0, rho, tau)
    for f in (0.9, 0.99, 1.01, 1.1):
        assert at <= psi_value(f * M, lam, theta, 1.0, rho, tau) * (1 + 1e-12)


def _cc_spec(lam, theta, gx=1.0):
    return ProblemSpec.scalar(P2, 0.25, 0.25, lam=lam, theta=theta, gamma=gx, xi=gx)


def test_fix_lambda_threshold_closed_form(mesh201):
    lam = 10.0
    rep = thresholds_concave_convex(_cc_spec(lam, 0.05), mesh201, "fix_lambda")
    rho, tau = rep.rho, rep.tau
    assert (rho, tau) == (0.5, 2.0)
    L = minimizer_constant(rho, tau)
    a, b = (tau - 1) / (tau - rho), (1 - rho) / (tau - rho)
    # Psi(M_theta) = K lam^a theta^b (L^(rho-1) + L^(tau-1)); solve for Psi = 1
    theta_star = (rep.K_bar * lam**a * (L ** (rho - 1) + L ** (tau - 1))) ** (-1 / b)
    assert not rep.capped
    assert rep.theta0 == pytest.approx(theta_star, rel=1e-10)
    assert abs(rep.psi_at_threshold - 1.0) <= 1e-8


@given(st.floats(0.01, 1000.0))
def test_theta0_is_min_of_constraint_root_and_cap(lam):
    mesh = make_mesh(1, [0.0, 1.0], 11)
    rep = thresholds_concave_convex(_cc_spec(lam, 0.01), mesh, "fix_lambda", K=(0.0625,))
    rho, tau, L = 0.5, 2.0, minimizer_constant(0.5, 2.0)
    a, b = (tau - 1) / (tau - rho), (1 - rho) / (tau - rho)
    root = (rep.K_bar * lam**a * (L ** (rho - 1) + L ** (tau - 1))) ** (-1 / b)
    cap = lam * L ** (tau - rho)  # where M = 1
    assert rep.theta0 == pytest.approx(min(root, cap), rel=1e-10)
    assert rep.capped == (cap <= root)


@given(st.floats(0.01, 10.0), st.floats(1.05, 3.0))
def test_lambda0_decreases_with_theta(theta, f):
    mesh = make_mesh(1, [0.0, 1.0], 11)
    K = (0.0625,)
    lo = thresholds_concave_convex(_cc_spec(0.1, theta, 1.2), mesh, "fix_theta", K=K).lambda0
    hi = thresholds_concave_convex(_cc_spec(0.1, theta * f, 1.2), mesh, "fix_theta", K=K).lambda0
    assert hi <= lo * (1 + 1e-9)


def test_fix_theta_pair_and_threshold(mesh201):
    spec = _cc_spec(1.0, 1.0, 1.2)
    rep = thresholds_concave_convex(spec, mesh201, "fix_theta")
    lam0 = rep.lambda0
    pair = build_pair_concave_convex(spec.with_params(lam=lam0 / 2), mesh201, "fix_theta")
    assert pair.certificate.holds
    with pytest.raises(CertificationFailure):
        build_pair_concave_convex(spec.with_params(lam=2 * lam0), mesh201, "fix_theta")


def test_concave_convex_system_pairs(mesh201):
    q = power_law(2.5)
    eqs = (Equation(P2, P2, 0.2, 0.2, P2, 0.8, 0.8), Equation(q, q, 0.2, 0.2, q, 0.8, 0.8))
    spec = ProblemSpec(eqs, lam=10.0, theta=0.01)
    rep = thresholds_concave_convex(spec, mesh201, "fix_lambda")
    assert 0 < rep.rho < 1 < rep.tau
    pairs = build_pair_concave_convex(spec, mesh201, "fix_lambda", report=rep)
    assert all(p.certificate.holds for p in pairs)


def test_concave_convex_hypotheses(mesh201):
    # xi + gamma must exceed m - 1 for fix_theta
    with pytest.raises(HypothesisViolation):
        thresholds_concave_convex(_cc_spec(0.1, 1.0, 0.4), mesh201, "fix_theta")
    with pytest.raises(InvalidParams):
        thresholds_concave_convex(_cc_spec(0.1, 1.0), mesh201, "sideways")
