import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpath.cycle import monodromy
from qpath.frame import (
    build_eigen_frame,
    build_frenet_2d,
    curvilinear_gradient,
    from_curvilinear,
    omega_matrix,
    to_curvilinear,
)


def test_hopf_frenet_basis_at_zero(hopf):
    E = hopf["frame"].basis(0.0)
    np.testing.assert_allclose(E[:, 0], [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(E[:, 1], [1.0, 0.0], atol=1e-12)


def test_frenet_omega_structure(vdp):
    frame = vdp["frame"]
    taus = np.linspace(0.0, frame.period, 37)
    Om = np.array([omega_matrix(frame, t) for t in taus])
    assert np.max(np.abs(Om[:, 1, 1])) <= 1e-8
    assert np.max(np.abs(Om + np.swapaxes(Om, 1, 2))) <= 1e-8


def test_hopf_omega_is_unit_rotation(hopf):
    Om = omega_matrix(hopf["frame"], 1.234)
    np.testing.assert_allclose(np.abs(Om[[0, 1], [1, 0]]), [1.0, 1.0], atol=1e-8)


@pytest.mark.parametrize("name", ["vdp", "lv3d", "net5d"])
def test_reciprocal_and_tangent(request, name):
    s = request.getfixturevalue(name)
    frame, cycle = s["frame"], s["cycle"]
    d = frame.dim
    err = np.max(np.abs(frame.Einv @ frame.E - np.eye(d)))
    assert err <= 1e-8
    k = np.arange(0, cycle.n_samples, 16)
    e0 = cycle.velocities[k] / np.linalg.norm(cycle.velocities[k], axis=1, keepdims=True)
    np.testing.assert_allclose(frame.E[k, :, 0], e0, atol=1e-10)


@pytest.mark.parametrize("name", ["lv3d", "net5d"])
def test_eigen_frame_tangent_orthogonal_to_normals(request, name):
    frame = request.getfixturevalue(name)["frame"]
    dots = np.einsum("ki,kij->kj", frame.E[:, :, 0], frame.E[:, :, 1:])
    assert np.max(np.abs(dots)) <= 1e-6


def test_eigen_frame_matches_frenet_in_plane(vdp):
    eig = build_eigen_frame(vdp["spec"], vdp["cycle"])
    fren = vdp["frame"]
    cosang = np.abs(np.einsum("ki,ki->k", eig.E[:, :, 1], fren.E[:, :, 1]))
    # the planar normal plane is one-dimensional, so the normals coincide up to sign
    assert np.min(cosang) >= 1 - 1e-10
    assert eig.flip.tolist() in ([1.0, 1.0], [1.0, -1.0])


def test_flip_detection(lv3d, net5d):
    assert lv3d["frame"].flip.tolist() == [1.0, 1.0, 1.0]
    assert net5d["frame"].flip.tolist() == [1.0, 1.0, 1.0, -1.0, -1.0]
    F = net5d["frame"].F
    np.testing.assert_array_equal(F @ F, np.eye(5))


def test_antiperiodic_continuation(net5d):
    frame = net5d["frame"]
    T = frame.period
    for t in (0.0, 0.3 * T):
        np.testing.assert_allclose(frame.basis(t + T), frame.basis(t) @ frame.F, atol=1e-6)


@pytest.mark.parametrize("name", ["vdp", "lv3d", "net5d"])
def test_left_invariant_normal_span(request, name):
    s = request.getfixturevalue(name)
    frame, cycle, spec = s["frame"], s["cycle"], s["spec"]
    for k in (0, cycle.n_samples // 3):
        tau = cycle.tau[k]
        N = frame.E[k, :, 1:]
        if frame.kind == "frenet":
            # Frenet normals are not left eigenvectors; compare with the eigen frame instead
            N = build_eigen_frame(spec, cycle).E[k, :, 1:]
        image = monodromy(spec, cycle, tau).T @ N
        Q, _ = np.linalg.qr(N)
        resid = image - Q @ (Q.T @ image)
        assert np.linalg.norm(resid) <= 1e-6 * max(1.0, np.linalg.norm(image))


@pytest.mark.parametrize("name", ["vdp", "lv3d", "net5d"])
def test_omega_reconstructs_basis_derivative(request, name):
    frame = request.getfixturevalue(name)["frame"]
    eps = 1e-5
    for t in (0.11, 1.7, 3.3):
        dE = (frame.basis(t + eps) - frame.basis(t - eps)) / (2 * eps)
        assert np.max(np.abs(dE - frame.basis(t) @ frame.omega(t))) <= 1e-4


def test_curvilinear_examples(hopf, vdp):
    frame = vdp["frame"]
    t0 = 2.345
    tau, z = to_curvilinear(frame, frame.cycle.position(t0))
    assert abs(tau - t0) < 1e-9
    np.testing.assert_allclose(z, [0.0], atol=1e-10)
    tau, z = to_curvilinear(hopf["frame"], [1.1, 0.0])
    assert min(tau, hopf["cycle"].period - tau) < 1e-9
    np.testing.assert_allclose(z, [0.1], atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(u=st.floats(0.0, 1.0, exclude_max=True), z=st.floats(-0.05, 0.05))
def test_curvilinear_round_trip_planar(vdp, u, z):
    frame = vdp["frame"]
    tau = u * frame.period
    x = from_curvilinear(frame, tau, [z])
    t2, z2 = to_curvilinear(frame, x)
    np.testing.assert_allclose(from_curvilinear(frame, t2, z2), x, atol=1e-8)
    dt = (t2 - tau + frame.period / 2) % frame.period - frame.period / 2
    assert abs(dt) < 1e-8 and abs(z2[0] - z) < 1e-8


@settings(max_examples=20, deadline=None)
@given(u=st.floats(0.0, 1.0, exclude_max=True), seed=st.integers(0, 2**16))
def test_curvilinear_round_trip_eigen(lv3d, u, seed):
    frame = lv3d["frame"]
    z = np.random.default_rng(seed).normal(size=2) * 0.01
    x = from_curvilinear(frame, u * frame.period, z)
    t2, z2 = to_curvilinear(frame, x)
    np.testing.assert_allclose(from_curvilinear(frame, t2, z2), x, atol=1e-8)


@pytest.mark.parametrize("name", ["vdp", "lv3d"])
def test_gradient_in_curvilinear_coordinates(request, name):
    frame = request.getfixturevalue(name)["frame"]
    rng = np.random.default_rng(3)
    m = frame.dim - 1
    for _ in range(10):
        tau = rng.uniform(0.0, frame.period)
        z = rng.normal(size=m) * 0.02
        x = from_curvilinear(frame, tau, z)
        E = frame.basis(tau)
        dx_dtau = frame.cycle.velocity(tau) + (E @ frame.omega(tau))[:, 1:] @ z
        g = curvilinear_gradient(frame, tau, z, 2 * x @ dx_dtau, 2 * x @ E[:, 1:])
        np.testing.assert_allclose(g, 2 * x, atol=1e-6)
