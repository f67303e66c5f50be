import numpy as np
import pytest

from qpath.cycle import find_limit_cycle
from qpath.frame import build_frame
from qpath.riccati import (
    PrdeCoefficients,
    RiccatiError,
    analytic_planar_solution,
    check_conditions,
    conjugate_by_flip,
    default_c0,
    plde_propagation_error,
    plde_residual,
    prde_residual,
    reduced_coefficients,
    solve_prde,
)
from qpath.systems import get_system
from qpath.validation import _psd_propagation


def _constant_coeffs(M, A, n=64, T=2 * np.pi):
    tau = np.arange(n) * T / n
    return PrdeCoefficients(tau, np.full((n, 1, 1), M), np.full((n, 1, 1), A), T, T)


@pytest.fixture(scope="module")
def vdp_cases():
    out = {}
    for case in ("ii", "iii"):
        spec = get_system("vdp", case)
        cyc = find_limit_cycle(spec)
        frame = build_frame(spec, cyc)
        out[case] = (spec, cyc, frame, reduced_coefficients(spec, cyc, frame))
    return out


def test_hopf_coefficients(hopf):
    c = hopf["coeffs"]
    np.testing.assert_allclose(c.Mt, -2.0, atol=1e-8)
    np.testing.assert_allclose(c.At, 1.0, atol=1e-12)


def test_vdp_degenerate_noise_coefficient(vdp_cases):
    _, cyc, frame, c = vdp_cases["ii"]
    n = frame.E[:, :, 1]
    np.testing.assert_allclose(c.At[:, 0, 0], n[:, 1] ** 2, atol=1e-12)


def test_planar_coefficient_is_normal_jacobian(vdp):
    spec, frame, c = vdp["spec"], vdp["frame"], vdp["coeffs"]
    J = spec.jacobian(frame.cycle.position(frame.tau))
    n = frame.E[:, :, 1]
    np.testing.assert_allclose(c.Mt[:, 0, 0], np.einsum("ki,kij,kj->k", n, J, n), atol=1e-10)


def test_diffusion_block_psd(lv3d, net5d):
    for s in (lv3d, net5d):
        At = s["coeffs"].At
        np.testing.assert_allclose(At, np.swapaxes(At, 1, 2), atol=1e-10)
        assert np.linalg.eigvalsh(At).min() >= -1e-10


def test_hopf_solution_is_four(hopf):
    G = hopf["G"]
    taus = np.linspace(0.0, 2 * np.pi, 101)
    assert np.max(np.abs(G(taus) - 4.0)) <= 1e-6
    assert prde_residual(G, hopf["coeffs"]) < 1e-8


def test_vdp_iterative_matches_closed_form(vdp):
    G = vdp["G"]
    Ga = analytic_planar_solution(vdp["coeffs"])
    taus = np.linspace(0.0, G.period, 777)
    assert np.max(np.abs(G(taus) - Ga(taus))) <= 1e-6


def test_degenerate_noise_cases_positive(vdp_cases):
    for case in ("ii", "iii"):
        c = vdp_cases[case][3]
        assert solve_prde(c).values.min() > 0
        assert analytic_planar_solution(c).values.min() > 0
        assert check_conditions(c).controllable


def test_closed_form_constant_coefficients():
    G = analytic_planar_solution(_constant_coeffs(-2.0, 1.0))
    np.testing.assert_allclose(G.values, 4.0, rtol=1e-8)


def test_closed_form_failures():
    with pytest.raises(RiccatiError, match="no positive definite"):
        analytic_planar_solution(_constant_coeffs(-2.0, 0.0))
    with pytest.raises(RiccatiError, match="not asymptotically stable"):
        analytic_planar_solution(_constant_coeffs(2.0, 1.0))


def test_hopf_reversed_has_no_solution(hopf):
    with pytest.raises(RiccatiError):
        analytic_planar_solution(hopf["coeffs"].reversed_time())


def test_non_convergence_reported(vdp):
    with pytest.raises(RiccatiError, match="did not converge"):
        solve_prde(vdp["coeffs"], max_iter=1)


def test_default_c0(vdp):
    c = vdp["coeffs"]
    assert default_c0(c) == pytest.approx(100 * (1 + np.max(np.abs(c.Mt))))


def test_controllability_verdicts(ctx):
    for name in ("hopf", "vdp", "twolc", "lv3d", "net5d"):
        c = ctx.setup(name)[3]
        rep = check_conditions(c)
        assert rep.stable and rep.controllable, name
        assert len(rep.tau_checks) == 9
    assert not check_conditions(ctx.setup("vdp")[3].with_diffusion(0.0)).controllable


def test_prde_residual_trivial_and_linear(hopf):
    c = hopf["coeffs"]
    zero = np.zeros((c.tau.size, 1, 1))
    assert prde_residual(zero, c) == 0.0
    r1 = prde_residual(hopf["G"].values + 1e-4, c)
    r2 = prde_residual(hopf["G"].values + 2e-4, c)
    assert r2 / r1 == pytest.approx(2.0, rel=1e-3)


@pytest.mark.parametrize("name", ["hopf", "vdp", "twolc", "lv3d", "net5d"])
def test_prde_residual_off_grid(request, name):
    s = request.getfixturevalue(name)
    G, c = s["G"], s["coeffs"]
    taus = (np.arange(300) + 0.5) * c.span / 300
    res = []
    for t in taus:
        g, M = G(t), c.M(t)
        res.append(np.linalg.norm(G.derivative(t) + M.T @ g + g @ M + g @ c.A(t) @ g))
    assert max(res) <= 1e-8


@pytest.mark.parametrize("name", ["vdp", "lv3d", "net5d"])
def test_lyapunov_duality(request, name):
    s = request.getfixturevalue(name)
    assert plde_residual(s["G"], s["coeffs"]) <= 1e-6
    assert plde_propagation_error(s["G"], s["coeffs"]) <= 1e-8


def test_psd_propagation_from_random_seeds(vdp, lv3d):
    assert _psd_propagation(vdp["coeffs"], 20) >= -1e-10
    assert _psd_propagation(lv3d["coeffs"], 5) >= -1e-10


def test_net5d_antiperiodic_solution(net5d):
    G, T = net5d["G"], net5d["cycle"].period
    assert G.antiperiodic and G.span == pytest.approx(2 * T)
    k = G.tau.size // 2
    ev1, ev2 = np.linalg.eigvalsh(G.values[:k]), np.linalg.eigvalsh(G.values[k:])
    assert np.max(np.abs(ev1 - ev2)) <= 1e-6
    G2 = conjugate_by_flip(G)
    assert G2.conjugacy_error <= 1e-8
    S = np.diag(G.flip)
    for t in (0.1, 1.3, 4.0):
        assert np.linalg.norm(G(t + T) - S @ G(t) @ S) <= 1e-8
        np.testing.assert_allclose(np.linalg.eigvalsh(G2(t)), np.linalg.eigvalsh(G2(t + T)), atol=1e-10)


def test_conjugate_identity_flip(vdp):
    G = vdp["G"]
    assert conjugate_by_flip(G) is G
    assert G.conjugacy_error == 0.0


def test_lv3d_positive_definite(lv3d):
    assert lv3d["G"].eigenvalues().min() > 0
    assert not lv3d["G"].antiperiodic
