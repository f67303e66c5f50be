import numpy as np
import pytest

from qpath.cycle import (
    FixedPointError,
    find_limit_cycle,
    integrate_flow,
    is_asymptotically_stable,
    monodromy,
    state_transition,
)
from qpath.systems import get_system, linear, time_reversed


def test_integrate_flow_linear_decay():
    spec = linear([[-1.0]])
    np.testing.assert_allclose(integrate_flow(spec, [1.0], 1.0), [np.exp(-1.0)], rtol=1e-9)


def test_integrate_flow_zero_time_is_identity():
    spec = get_system("vdp")
    x0 = np.array([0.3, -1.7])
    np.testing.assert_array_equal(integrate_flow(spec, x0, 0.0), x0)


def test_integrate_flow_hopf_attraction():
    x = integrate_flow(get_system("hopf"), [2.0, 0.0], 50.0)
    assert abs(np.linalg.norm(x) - 1.0) < 1e-6


def test_hopf_cycle_from_offset_guess():
    cyc = find_limit_cycle(get_system("hopf"), x_guess=[1.2, 0.0], T_guess=6.0)
    assert abs(cyc.period - 2 * np.pi) < 1e-8
    np.testing.assert_allclose(np.linalg.norm(cyc.states, axis=1), 1.0, atol=1e-8)


def test_vdp_and_twolc_periods(vdp, twolc):
    assert abs(vdp["cycle"].period - 6.6633) < 5e-3
    assert abs(twolc["cycle"].period - 5.7966) < 5e-3


def test_cycle_invariants(vdp):
    cyc = vdp["cycle"]
    assert cyc.closure_error() <= 1e-8
    assert abs(cyc.trivial_multiplier() - 1.0) <= 1e-6
    assert np.min(np.linalg.norm(cyc.velocities, axis=1)) > 0
    # interpolated velocity equals the drift off the grid
    spec = vdp["spec"]
    taus = (np.arange(50) + 0.37) * cyc.period / 50
    b = spec.drift(cyc.position(taus))
    assert np.max(np.abs(cyc.velocity(taus) - b)) <= 1e-6


def test_fixed_point_guess_rejected():
    with pytest.raises(FixedPointError):
        find_limit_cycle(get_system("vdp"), x_guess=[0.0, 0.0], T_guess=6.0)


def test_state_transition_identity_and_composition(vdp):
    spec, cyc = vdp["spec"], vdp["cycle"]
    np.testing.assert_array_equal(state_transition(spec, cyc, 1.3, 1.3), np.eye(2))
    P10 = state_transition(spec, cyc, 0.0, 1.0)
    P21 = state_transition(spec, cyc, 1.0, 2.5)
    P20 = state_transition(spec, cyc, 0.0, 2.5)
    np.testing.assert_allclose(P21 @ P10, P20, atol=1e-8)


def test_state_transition_constant_scalar():
    # an orbit of a 1-D linear system is not a cycle, but Phi only needs the path
    from qpath.cycle import LimitCycle

    spec = linear([[-0.7]])
    tau = np.linspace(0.0, 1.0, 8, endpoint=False)
    states = np.exp(-0.7 * tau)[:, None]
    cyc = LimitCycle(spec, 1.0, tau, states, -0.7 * states, np.ones(1), np.eye(1))
    np.testing.assert_allclose(state_transition(spec, cyc, 0.2, 1.7), [[np.exp(-0.7 * 1.5)]], rtol=1e-9)


def test_hopf_monodromy(hopf):
    spec, cyc = hopf["spec"], hopf["cycle"]
    mu = np.sort(np.abs(np.linalg.eigvals(monodromy(spec, cyc))))
    assert abs(mu[0] - np.exp(-4 * np.pi)) < 1e-8
    assert abs(mu[1] - 1.0) < 1e-6


def test_multipliers_independent_of_phase(vdp):
    spec, cyc = vdp["spec"], vdp["cycle"]
    e0 = np.sort_complex(np.linalg.eigvals(monodromy(spec, cyc, 0.0)))
    e1 = np.sort_complex(np.linalg.eigvals(monodromy(spec, cyc, cyc.period / 3)))
    np.testing.assert_allclose(e0, e1, atol=1e-6)


def test_stability_reports(hopf, vdp):
    rep = is_asymptotically_stable(hopf["cycle"])
    assert rep.stable
    assert abs(rep.margin - (1 - 3.487e-6)) < 1e-8
    assert is_asymptotically_stable(vdp["cycle"]).stable
    rev = find_limit_cycle(time_reversed(get_system("hopf")))
    assert is_asymptotically_stable(rev).verdict == "unstable"
