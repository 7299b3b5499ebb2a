import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phinonlocal import GridFunction, luxemburg_norm, make_mesh, modular, power_law, power_sum, minimal_surface

FAMILIES = [power_law(2.0), power_law(3.0), power_sum(2.0, 3.0), minimal_surface(2.0)]


def test_modular_examples(unit_mesh):
    sq = power_law(2.0)
    m = unit_mesh
    assert modular(GridFunction(m, np.zeros(m.size)), sq) == 0.0
    assert modular(GridFunction(m, np.full(m.size, 2.0)), sq) == pytest.approx(4.0)
    assert modular(GridFunction(m, m.points[:, 0]), sq) == pytest.approx(1 / 3, abs=1e-4)


def test_norm_examples(unit_mesh):
    m = unit_mesh
    for p in (1.5, 2.0, 3.0):
        assert luxemburg_norm(GridFunction(m, np.full(m.size, 0.7)), power_law(p)).norm == pytest.approx(0.7, rel=1e-10)
    m2 = make_mesh(1, [0.0, 2.0], 51)
    assert luxemburg_norm(GridFunction(m2, np.full(m2.size, 1.3)), power_law(2.0)).norm == pytest.approx(
        1.3 * math.sqrt(2), rel=1e-10
    )
    zero = luxemburg_norm(GridFunction(m, np.zeros(m.size)), power_law(2.0))
    assert zero.norm == 0.0


def test_p2_norm_is_l2_norm(unit_mesh):
    # for Phi = t^2 the Luxemburg norm is the (discrete) L^2 norm
    u = GridFunction(unit_mesh, np.sin(3 * unit_mesh.points[:, 0]))
    l2 = math.sqrt(unit_mesh.weights @ u.values**2)
    assert luxemburg_norm(u, power_law(2.0)).norm == pytest.approx(l2, rel=1e-11)


@given(
    st.sampled_from(FAMILIES),
    st.lists(st.floats(-50, 50), min_size=11, max_size=11).filter(lambda v: max(map(abs, v)) > 1e-3),
)
def test_modular_at_norm_is_one(nf, vals):
    m = make_mesh(1, [0.0, 1.0], 11)
    res = luxemburg_norm(GridFunction(m, np.array(vals)), nf)
    if res.norm > 0:
        assert abs(res.modular_at_norm - 1.0) <= 1e-10


@given(
    st.sampled_from(FAMILIES),
    st.lists(st.floats(0, 10), min_size=11, max_size=11),
    st.lists(st.floats(0, 10), min_size=11, max_size=11),
)
def test_norm_monotone(nf, a, b):
    m = make_mesh(1, [0.0, 1.0], 11)
    u = np.array(a)
    v = u + np.array(b)
    nu = luxemburg_norm(GridFunction(m, u), nf).norm
    nv = luxemburg_norm(GridFunction(m, v), nf).norm
    assert nu <= nv + 1e-12


@given(
    st.sampled_from(FAMILIES),
    st.floats(-10, 10).filter(lambda c: abs(c) > 1e-6),
    st.integers(0, 2**31 - 1),
)
def test_norm_homogeneous(nf, c, seed):
    m = make_mesh(1, [0.0, 1.0], 21)
    u = np.random.default_rng(seed).normal(size=m.size)
    a = luxemburg_norm(GridFunction(m, c * u), nf).norm
    b = luxemburg_norm(GridFunction(m, u), nf).norm
    assert a == pytest.approx(abs(c) * b, rel=1e-10)
