import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from thermocontact.materials import Capacity
from thermocontact.solvers import (AbsThroughMap, BoxProx, CompositeProblem,
                                   ProxNone, SolverError, project_box01,
                                   prox_weighted_norm, shrink,
                                   solve_composite, solve_monotone_heat,
                                   solve_spd)


def test_prox_soft_threshold_pinned():
    assert prox_weighted_norm(3.0, 1.0, 1.0) == pytest.approx(2.0)
    out = prox_weighted_norm(np.array([3.0, 4.0]), 1.0, 5.0)
    assert np.allclose(out, [0.0, 0.0])
    assert prox_weighted_norm(-0.4, 1.0, 1.0) == pytest.approx(0.0)


def test_prox_rejects_negative_weight():
    with pytest.raises(SolverError):
        prox_weighted_norm(1.0, -1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 5), st.floats(0, 5))
def test_prox_nonexpansive(x, y, w, step):
    px = prox_weighted_norm(x, w, step)
    py = prox_weighted_norm(y, w, step)
    assert abs(px - py) <= abs(x - y) + 1e-12


def test_shrink_and_box():
    assert np.allclose(shrink(np.array([2.0, -2.0, 0.3]), np.array([1.0, 1.0, 1.0])),
                       [1.0, -1.0, 0.0])
    assert project_box01(1.7) == 1.0
    assert np.allclose(project_box01(np.array([-0.2, 0.5, 3.0])), [0.0, 0.5, 1.0])


def test_abs_through_map_prox_optimality():
    # two orthogonal rows with distinct norms and weights
    L = sp.csr_matrix(np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 2.0]]))
    c = np.array([0.1, -0.3])
    w = np.array([0.7, 0.2])
    prox = AbsThroughMap(L, c, w)
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.standard_normal(3)
        t = float(rng.uniform(0.05, 2.0))
        x = prox.apply(v, t)
        base = 0.5 * np.sum((x - v) ** 2) + t * prox.value(x)
        for _ in range(40):
            trial = x + 1e-5 * rng.standard_normal(3)
            val = 0.5 * np.sum((trial - v) ** 2) + t * prox.value(trial)
            assert val >= base - 1e-12


def test_abs_through_map_rejects_overlapping_rows():
    L = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, -0.5]]))
    with pytest.raises(SolverError):
        AbsThroughMap(L, np.zeros(2), np.ones(2))


def test_solve_spd_pinned():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    x = solve_spd(A, np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-12)
    x = solve_spd(sp.csr_matrix(A), np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-12)


def test_solve_spd_rejects_indefinite():
    with pytest.raises(SolverError):
        solve_spd(np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([1.0, 1.0]))


def test_composite_smooth_quadratic():
    H = np.diag([2.0, 8.0])
    b = np.array([2.0, 8.0])
    p = CompositeProblem(
        value=lambda x: 0.5 * x @ H @ x - b @ x,
        grad=lambda x: H @ x - b,
        prox=ProxNone(),
        hess=lambda x: sp.csc_matrix(H),
    )
    x, rep = solve_composite(p, np.zeros(2))
    assert rep.converged
    assert np.allclose(x, [1.0, 1.0], atol=1e-8)


def test_composite_lasso_analytic():
    # min 1/2(x-a)^2 + w|x|  ->  soft threshold of a
    a = np.array([3.0, -0.4, 0.05])
    w = np.ones(3)
    prox = AbsThroughMap(sp.eye(3, format="csr"), np.zeros(3), w)
    p = CompositeProblem(
        value=lambda x: 0.5 * np.sum((x - a) ** 2),
        grad=lambda x: x - a,
        prox=prox,
        hess=lambda x: sp.csc_matrix(np.eye(3)),
    )
    x, rep = solve_composite(p, np.zeros(3))
    assert np.allclose(x, [2.0, 0.0, 0.0], atol=1e-8)


def test_composite_box_constrained():
    H = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = np.array([-4.0, 5.0])
    p = CompositeProblem(
        value=lambda x: 0.5 * x @ H @ x - b @ x,
        grad=lambda x: H @ x - b,
        prox=BoxProx(0.0, 1.0),
        hess=lambda x: sp.csc_matrix(H),
    )
    x, rep = solve_composite(p, np.full(2, 0.5))
    # KKT: x0 pinned at 0, x1 = b1/H11 clipped
    assert x[0] == pytest.approx(0.0, abs=1e-9)
    assert x[1] == pytest.approx(1.0, abs=1e-9)


def test_composite_stick_stays_put():
    # gradient below the threshold weight: exact zero is optimal
    prox = AbsThroughMap(sp.eye(1, format="csr"), np.zeros(1), np.array([1.0]))
    p = CompositeProblem(
        value=lambda x: 0.5 * x @ x - 0.5 * x[0],
        grad=lambda x: x - 0.5,
        prox=prox,
        hess=lambda x: sp.csc_matrix(np.eye(1)),
    )
    x, rep = solve_composite(p, np.array([0.3]))
    assert abs(x[0]) < 1e-10


def test_heat_solver_pinned_linear_capacity():
    cap = Capacity.linear(1.0, 1.0)   # C(theta) = theta + theta^2/2
    K = sp.csr_matrix((1, 1))
    theta = solve_monotone_heat(cap.content, cap.c, K, np.array([4.0]), 1.0,
                                np.array([0.0]))
    assert theta[0] == pytest.approx(2.0, abs=1e-9)


def test_heat_solver_with_conduction():
    # two nodes exchanging heat must conserve total content
    cap = Capacity.constant(1.0)
    K = sp.csr_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    prev = np.array([2.0, 0.5])
    theta = solve_monotone_heat(cap.content, cap.c, K, prev, 0.1, np.zeros(2))
    assert theta.sum() == pytest.approx(prev.sum(), rel=1e-9)
    assert theta[0] > theta[1]


def test_heat_solver_finds_negative_root():
    # strong sink drives the temperature negative; the solver must report
    # it (the stepper turns that into an invariant violation)
    cap = Capacity.constant(1.0)
    K = sp.csr_matrix((1, 1))
    theta = solve_monotone_heat(cap.content, cap.c, K, np.array([1.0]), 1.0,
                                np.array([-3.0]))
    assert theta[0] == pytest.approx(-2.0, abs=1e-8)


def test_heat_solver_rejects_negative_content():
    cap = Capacity.constant(1.0)
    with pytest.raises(SolverError):
        solve_monotone_heat(cap.content, cap.c, sp.csr_matrix((1, 1)),
                            np.array([-1.0]), 1.0, np.array([0.0]))
