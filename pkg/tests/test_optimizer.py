import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpath.optimizer import NlpProblem, color_columns, fd_gradient, minimize_constrained, projected_gradient_norm

M = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]])


def qp_problem(x0):
    return NlpProblem(
        lambda x: (x @ x, 2 * x), np.asarray(x0, float), grad=True,
        constraints=lambda x: np.array([x[0] + x[1] - 1.0]), cjac=lambda x: np.array([[1.0, 1.0]]),
    )


def rosen(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


def rosen_grad(x):
    return np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])


def rayleigh_problem(x0):
    return NlpProblem(
        lambda z: (z @ M @ z, 2 * M @ z), np.asarray(x0, float), grad=True,
        constraints=lambda z: np.array([z @ z - 1.0]), cjac=lambda z: (2 * z)[None],
    )


def test_equality_qp():
    r = minimize_constrained(qp_problem([3.0, -1.0]))
    assert r.converged and r.status == "converged"
    np.testing.assert_allclose(r.x, [0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(r.multipliers, [-1.0], atol=1e-8)
    assert r.feasibility <= 1e-10 and r.kkt <= 1e-8


def test_rosenbrock():
    r = minimize_constrained(NlpProblem(rosen, np.array([-1.2, 1.0]), grad=rosen_grad))
    assert r.converged
    np.testing.assert_allclose(r.x, [1.0, 1.0], atol=1e-6)


def test_rosenbrock_finite_difference_gradient():
    r = minimize_constrained(NlpProblem(rosen, np.array([-1.2, 1.0])), tol_kkt=1e-6)
    np.testing.assert_allclose(r.x, [1.0, 1.0], atol=1e-5)


def test_rayleigh_quotient():
    r = minimize_constrained(rayleigh_problem(np.ones(3) / np.sqrt(3)))
    w, V = np.linalg.eigh(M)
    assert r.converged
    assert r.fun == pytest.approx(w[0], abs=1e-9)
    assert abs(abs(r.x @ V[:, 0]) - 1.0) <= 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_random_starts(seed):
    rng = np.random.default_rng(seed)

    def ball(center):
        v = rng.standard_normal(len(center))
        return np.asarray(center) + v / np.linalg.norm(v) * rng.uniform(0, 1)

    r = minimize_constrained(qp_problem(ball([0.5, 0.5])))
    assert r.converged and np.allclose(r.x, 0.5, atol=1e-8)
    r = minimize_constrained(NlpProblem(rosen, ball([1.0, 1.0]), grad=rosen_grad))
    assert r.converged and np.allclose(r.x, 1.0, atol=1e-6)
    w, V = np.linalg.eigh(M)
    start = V[:, 0] * np.sign(rng.standard_normal())
    r = minimize_constrained(rayleigh_problem(ball(start)))
    assert r.converged and r.fun == pytest.approx(w[0], abs=1e-8)


@pytest.mark.parametrize("inner", ["newton", "lbfgs"])
def test_merit_nonincreasing(inner):
    r = minimize_constrained(rayleigh_problem([2.0, -1.0, 0.5]), inner=inner)
    assert len(r.merit_history) >= 1
    assert np.all(np.diff(r.merit_history) <= 0)


def test_deterministic():
    a = minimize_constrained(rayleigh_problem([0.3, 0.2, 0.9]))
    b = minimize_constrained(rayleigh_problem([0.3, 0.2, 0.9]))
    np.testing.assert_array_equal(a.x, b.x)
    assert a.merit_history == b.merit_history and a.inner_iterations == b.inner_iterations


def test_iteration_cap_flags_result():
    r = minimize_constrained(rayleigh_problem([2.0, -1.0, 0.5]), max_outer=1, refine=False)
    assert not r.converged and r.status == "max_outer"
    assert r.x.shape == (3,)


def test_non_finite_objective():
    with pytest.raises(FloatingPointError):
        minimize_constrained(NlpProblem(lambda x: (np.nan, np.zeros(1)), np.zeros(1), grad=True))


def test_unknown_inner():
    with pytest.raises(ValueError):
        minimize_constrained(qp_problem([0.0, 0.0]), inner="sqp")


def test_fd_gradient_matches():
    x = np.array([0.3, -0.7])
    np.testing.assert_allclose(fd_gradient(rosen, x), rosen_grad(x), rtol=1e-6)


def test_projected_gradient():
    J = np.array([[1.0, 1.0]])
    assert projected_gradient_norm(np.array([2.0, 2.0]), J) == pytest.approx(0.0, abs=1e-14)
    assert projected_gradient_norm(np.array([1.0, -1.0]), J) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 3))
def test_coloring_groups_are_disjoint(n, band):
    i, j = np.indices((n, n))
    pattern = np.abs(i - j) <= band
    groups = color_columns(pattern)
    assert sorted(c for g in groups for c in g) == list(range(n))
    for g in groups:
        rows = pattern[:, g]
        assert np.all(rows.sum(axis=1) <= 1)
    assert len(groups) <= 2 * band + 1
