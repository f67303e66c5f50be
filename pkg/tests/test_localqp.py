import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpath.frame import to_curvilinear
from qpath.localqp import LocalModel, momentum_approx, normal_directions, quadratic_qp, tube_surface
from qpath.validation import _cubic_scaling


def hopf_V(r):
    return 2.0 * (-r**2 / 2 + r**4 / 4 + 0.25)


def test_zero_offset(hopf):
    m = hopf["model"]
    assert quadratic_qp(m, 1.0, [0.0]) == 0.0
    np.testing.assert_array_equal(momentum_approx(m, 1.0, [0.0]), 0.0)


def test_hopf_value_and_cubic_error(hopf):
    m = hopf["model"]
    assert quadratic_qp(m, 0.0, [0.1]) == pytest.approx(0.02, abs=1e-9)
    assert hopf_V(1.1) == pytest.approx(0.02205, abs=1e-12)
    assert abs(quadratic_qp(m, 0.0, [0.1]) - hopf_V(1.1)) == pytest.approx(2.05e-3, abs=1e-8)


def test_hopf_momentum(hopf):
    p = momentum_approx(hopf["model"], 0.0, [0.1])
    np.testing.assert_allclose(p, [0.4, 0.0], atol=1e-8)


@pytest.mark.parametrize("name", ["vdp", "lv3d", "net5d"])
def test_momentum_normal_components(request, name, rng):
    s = request.getfixturevalue(name)
    model, frame = s["model"], s["frame"]
    m = model.dim - 1
    for tau in rng.uniform(0, model.cycle.period, 5):
        z = 1e-2 * rng.standard_normal(m)
        p = momentum_approx(model, tau, z)
        E = frame.basis(tau)
        np.testing.assert_allclose(p @ E[:, 1:], model.G(tau) @ z, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 10), st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_symmetry_and_positivity(lv3d, tau, z):
    m = lv3d["model"]
    z = np.array(z)
    q = quadratic_qp(m, tau, z)
    assert q == quadratic_qp(m, tau, -z)
    if np.linalg.norm(z) > 1e-100:
        assert q > 0


def test_tube_round_trip(vdp, lv3d):
    for s in (vdp, lv3d):
        out = tube_surface(s["model"], n_tau=16, n_theta=6, h=1e-2)
        for x in out["x"]:
            _, z = to_curvilinear(s["frame"], x)
            assert abs(np.linalg.norm(z) - 1e-2) <= 1e-8


def test_hopf_level_tube_is_two_circles(hopf):
    out = tube_surface(hopf["model"], n_tau=32, delta=0.02)
    r = np.sort(np.linalg.norm(out["x"], axis=1))
    np.testing.assert_allclose(r[:32], 0.9, atol=1e-6)
    np.testing.assert_allclose(r[32:], 1.1, atol=1e-6)
    np.testing.assert_allclose(out["Q"], 0.02, rtol=1e-12)


def test_lv3d_level_tube_is_flat(lv3d):
    out = tube_surface(lv3d["model"], n_tau=32, n_theta=32, delta=2e-5)
    size = np.linalg.norm(out["z"], axis=1).reshape(32, 32)
    aspect = size.max(axis=1) / size.min(axis=1)
    assert aspect.max() > 10.0


def test_tube_arguments(hopf):
    with pytest.raises(ValueError):
        tube_surface(hopf["model"], h=0.1, delta=0.1)
    with pytest.raises(ValueError):
        tube_surface(hopf["model"], h=-1.0)
    with pytest.raises(ValueError):
        tube_surface(hopf["model"])


def test_normal_directions_unit():
    for m in (1, 2, 4):
        d = normal_directions(m, 8)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)


@pytest.mark.parametrize("name", ["vdp", "twolc", "lv3d"])
def test_hamiltonian_vanishes_to_quadratic_order(request, name):
    s = request.getfixturevalue(name)
    slope, worst = _cubic_scaling(s["spec"], s["model"])
    assert slope >= 3.0, worst


def test_estimator_style_accessors(hopf):
    m = hopf["model"]
    x = np.array([1.05, 0.0])
    assert m.quasi_potential(x) == pytest.approx(0.5 * 4 * 0.05**2, rel=1e-6)
    np.testing.assert_allclose(m.gradient(x), [0.2, 0.0], atol=1e-8)
