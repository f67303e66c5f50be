import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpath.gmam import (
    _PathProblem,
    action_gradient,
    convergence_study,
    default_kappa,
    discrete_action,
    discrete_action_general,
    equal_arclength_defect,
    minimize_lc,
    minimize_lqa,
    resample_path,
)
from qpath.optimizer import fd_gradient
from qpath.systems import linear
from qpath.validation import HOPF_ACTION, TARGETS

HOPF_END = TARGETS["hopf"]


def with_diffusion(spec, a):
    a = np.array(a, dtype=float)
    return dataclasses.replace(
        spec, diffusion=lambda x: np.broadcast_to(a, np.shape(x)[:-1] + a.shape).copy(), constant_diffusion=a
    )


def test_flow_aligned_path_has_zero_action():
    spec = linear(-np.eye(2))
    s = np.linspace(2.0, 0.3, 30)[:, None]
    pts = s * np.array([0.6, 0.8])
    assert abs(discrete_action(pts, spec)) <= 1e-14
    assert abs(discrete_action_general(pts, spec)) <= 1e-14


def test_zero_drift_gives_zero_action(rng):
    spec = linear(np.zeros((3, 3)))
    pts = rng.standard_normal((12, 3))
    assert discrete_action(pts, spec) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["hopf", "vdp", "lv3d"]))
def test_action_nonnegative(ctx, seed, name):
    spec = ctx.setup(name)[0]
    pts = np.random.default_rng(seed).uniform(-2, 2, (8, spec.dim))
    assert discrete_action(pts, spec) >= -1e-12
    assert discrete_action_general(pts, spec) >= -1e-12


def test_general_metric_identity_and_scaling(vdp, rng):
    spec = vdp["spec"]
    pts = rng.uniform(-2, 2, (20, 2))
    S = discrete_action(pts, spec)
    assert abs(discrete_action_general(pts, spec) - S) <= 1e-14 * max(1.0, S)
    # both norms in |d|_a |b|_a - <d, b>_a shrink by 1/2, so each term by 1/4
    S4 = discrete_action_general(pts, with_diffusion(spec, 4 * np.eye(2)))
    assert S4 == pytest.approx(S / 4, rel=1e-12)


def test_general_metric_singular():
    spec = with_diffusion(linear(-np.eye(2)), np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        discrete_action_general(np.eye(2), spec)


def test_too_short_path(hopf):
    with pytest.raises(ValueError):
        discrete_action(np.zeros((1, 2)), hopf["spec"])


@pytest.mark.parametrize("name,metric", [("vdp", None), ("lv3d", None), ("lv3d", np.diag([1.0, 2.0, 0.5]))])
def test_action_gradient_matches_differences(request, rng, name, metric):
    spec = request.getfixturevalue(name)["spec"]
    pts = rng.uniform(0.3, 2.0, (7, spec.dim))
    A = None if metric is None else np.linalg.inv(metric)
    S, g = action_gradient(pts, spec, A)
    if metric is None:
        assert S == pytest.approx(discrete_action(pts, spec), rel=1e-13)
    else:
        assert S == pytest.approx(discrete_action_general(pts, with_diffusion(spec, metric)), rel=1e-12)
    fd = fd_gradient(lambda v: action_gradient(v.reshape(pts.shape), spec, A)[0], pts.ravel(), step=1e-6)
    np.testing.assert_allclose(g.ravel(), fd, atol=1e-7)


def test_path_problem_derivatives(hopf, lv3d, rng):
    for s, h in ((hopf, 0.05), (lv3d, 0.02), (hopf, 0.0)):
        cyc = s["cycle"]
        x_end = cyc.position(0.3) * 1.3
        prob = _PathProblem(s["spec"], cyc, s["frame"], s["G"], x_end, 6, h, 0.1)
        v = rng.uniform(0.5, 1.5, prob.n)
        v[6 * cyc.dim] = 0.7
        f, g = prob.objective(v)
        np.testing.assert_allclose(g, fd_gradient(lambda u: prob.objective(u)[0], v, 1e-6), atol=1e-6)
        J_fd = np.stack([fd_gradient(lambda u, k=k: prob.constraints(u)[k], v, 1e-6) for k in range(len(prob.constraints(v)))])
        np.testing.assert_allclose(prob.jacobian(v), J_fd, atol=1e-6)


def test_resample_is_equal_arclength(rng):
    # unevenly spaced points on a line come back evenly spaced
    t = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 7)]))
    pts = np.outer(t, [2.0, -1.0]) + [0.5, 0.5]
    out = resample_path(pts, 40)
    assert out.shape == (41, 2)
    np.testing.assert_allclose(out[[0, -1]], pts[[0, -1]])
    assert equal_arclength_defect(out) <= 1e-12


def test_default_kappa(hopf):
    assert default_kappa(hopf["cycle"]) == pytest.approx(2 * np.pi / 80)


def hopf_spiral(h, n_fine=20000):
    """Reversed radial flow with the rotation kept: d theta / d r = 1 / (r^3 - r)."""
    r = np.linspace(1.0 + h, 1.5, n_fine)
    th = 0.5 * np.log(1.0 - 1.0 / r**2) - 0.5 * np.log(1.0 - 1.0 / 1.5**2)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def test_hopf_analytic_map_discretization(hopf):
    h = 1e-3
    pts = resample_path(hopf_spiral(h), 160)
    total = discrete_action(pts, hopf["spec"]) + 0.5 * 4.0 * h**2
    assert abs(total - HOPF_ACTION) <= 5e-3


def test_target_on_tube(hopf):
    h = 0.02
    x_end = hopf["model"].point(1.0, [h])
    p = minimize_lqa(hopf["spec"], hopf["cycle"], hopf["frame"], hopf["G"], x_end, N=20, h=h)
    assert p.total == pytest.approx(0.5 * 4.0 * h**2, rel=1e-6)
    assert p.geometric <= 1e-8


def test_target_on_cycle(vdp):
    x_end = vdp["cycle"].position(2.0)
    p = minimize_lc(vdp["spec"], vdp["cycle"], vdp["frame"], x_end, N=20)
    assert p.total <= 1e-6


def test_target_inside_tube(hopf):
    with pytest.raises(ValueError, match="inside the tube"):
        minimize_lqa(hopf["spec"], hopf["cycle"], hopf["frame"], hopf["G"], [1.001, 0.0], N=20, h=0.01)


def test_nonpositive_radius(hopf):
    with pytest.raises(ValueError):
        minimize_lqa(hopf["spec"], hopf["cycle"], hopf["frame"], hopf["G"], HOPF_END, N=20, h=0.0)


def test_small_study_halves_h(hopf):
    st_ = convergence_study(hopf["spec"], hopf["cycle"], hopf["frame"], hopf["G"], HOPF_END, Ns=(6, 12, 24))
    assert st_["N"] == [6, 12, 24]
    np.testing.assert_allclose(np.array(st_["h"][:-1]) / np.array(st_["h"][1:]), 2.0)
    assert st_["h"][0] == pytest.approx(default_kappa(hopf["cycle"]) / 6)
    assert np.isfinite(st_["order"])


def _feasible(p):
    assert p.converged
    assert p.info["arclength_defect"] <= 1e-10
    assert p.info["attachment_residual"] <= 1e-9
    if p.h > 0:
        assert abs(np.linalg.norm(p.z) - p.h) <= 1e-10 * max(1.0, p.h)


@pytest.mark.parametrize("name,method,N", [("hopf", "lqa", 160), ("twolc", "lqa", 160), ("twolc", "lc", 40), ("vdp", "lqa", 80)])
def test_solution_feasibility(ctx, name, method, N):
    p = ctx.path(name, method, N)
    _feasible(p)
    assert p.geometric >= 0
    np.testing.assert_array_equal(p.points[-1], TARGETS[name])


def test_hopf_lqa_action(ctx):
    assert abs(ctx.path("hopf", "lqa", 160).total - HOPF_ACTION) <= 5e-3


def test_twolc_lqa_action(ctx):
    assert abs(ctx.path("twolc", "lqa", 160).total - 0.1599) <= 2e-3


@pytest.mark.parametrize("name", ["hopf", "twolc"])
def test_monotone_refinement(ctx, name):
    totals = [ctx.path(name, "lqa", N).total for N in (40, 80, 160)]
    assert totals[1] <= totals[0] + 1e-4 and totals[2] <= totals[1] + 1e-4, totals


def test_hopf_lc_approaches_from_above(ctx):
    totals = [ctx.path("hopf", "lc", N).total for N in (20, 40, 80)]
    assert all(t >= HOPF_ACTION for t in totals)
    assert totals[0] > totals[1] > totals[2], totals


@pytest.mark.xfail(strict=True, reason="the tube term converges at a lower rate than the geometric part against the exact value")
def test_hopf_order_against_analytic_value(ctx):
    Ns = np.array([20, 40, 80, 160])
    err = np.abs([ctx.path("hopf", "lqa", int(n)).total - HOPF_ACTION for n in Ns])
    order = -np.polyfit(np.log(Ns), np.log(err), 1)[0]
    assert 1.6 <= order <= 2.4, order
