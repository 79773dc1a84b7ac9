import numpy as np
import pytest

from levelcg.geometry import Box, StandardSimplex
from levelcg.instances import dncg_problem, ipp_convex_problem, ipp_nonconvex_problem
from levelcg.nonconvex import (NonconvexProblem, SmoothedLagrangian,
                               build_prox_subproblem, dncg, dncg_violation_bound,
                               ipp_lcg, kkt_measures, wolfe_gap,
                               wolfe_gap_from_grad)
from levelcg.oracle import SmoothOracle, fd_check, linear_oracle, quadratic_oracle
from levelcg.verify import GridSpec, grid_minimize

UNIT = Box([0.0], [1.0])


def test_wolfe_gap_examples():
    s = StandardSimplex(2)
    g = np.array([1.0, 2.0])
    assert wolfe_gap_from_grad(g, np.array([1.0, 0.0]), s) == 0.0
    assert wolfe_gap_from_grad(g, np.array([0.0, 1.0]), s) == 1.0
    for x in (np.array([0.3, 0.7]), np.array([0.5, 0.5])):
        assert wolfe_gap_from_grad(np.full(2, 4.0), x, s) == pytest.approx(0.0, abs=1e-15)


def test_wolfe_gap_nonnegative(rng):
    p = dncg_problem()
    for x in rng.uniform(0, 1, size=(50, 1)):
        assert wolfe_gap(p, x) >= 0.0


def test_prox_subproblem_examples():
    neg_sq = NonconvexProblem(quadratic_oracle([[-2.0]], [0.0]), [], UNIT, 2.0)
    sub = build_prox_subproblem(neg_sq, np.array([0.0]))
    for x in (0.0, 0.4, 1.0):
        assert sub.objective(np.array([x])) == pytest.approx(x * x)
    lin = NonconvexProblem(linear_oracle([1.5]), [], UNIT, 1.0)
    sub = build_prox_subproblem(lin, np.array([0.6]))
    assert sub.objective(np.array([0.6])) == pytest.approx(lin.objective(np.array([0.6])))
    assert fd_check(sub.f, [np.array([0.1]), np.array([0.9])]) <= 1e-8
    # strong convexity: second difference equals 2 * rho
    h = 1e-3
    vals = [sub.objective(np.array([0.5 + d])) for d in (-h, 0.0, h)]
    assert (vals[0] - 2 * vals[1] + vals[2]) / h ** 2 == pytest.approx(2.0, rel=1e-6)


def test_multipliers_closed_form():
    p = dncg_problem()
    lag = SmoothedLagrangian(p, c=0.5)
    assert lag.multipliers(np.array([0.7]))[0] == pytest.approx(0.4)
    assert lag.multipliers(np.array([0.3]))[0] == 0.0
    # inactive constraint: the Lagrangian is f itself
    x = np.array([0.3])
    assert lag.value(x) == pytest.approx(p.objective(x))
    wrapped = SmoothOracle(lag, 1)
    assert fd_check(wrapped, [np.array([0.2]), np.array([0.7]), np.array([0.95])]) <= 1e-6


def test_smoothed_lagrangian_curvature_bound(rng):
    p = dncg_problem()
    lag = SmoothedLagrangian(p, c=0.25)
    X = rng.uniform(0, 1, size=(300, 1))
    Y = rng.uniform(0, 1, size=(300, 1))
    ratios = [np.linalg.norm(lag.grad(x) - lag.grad(y)) / np.linalg.norm(x - y)
              for x, y in zip(X, Y)]
    assert max(ratios) <= lag.lipschitz_grad + 1e-9


def test_smoothed_lagrangian_rejects_bad_c():
    with pytest.raises(ValueError):
        SmoothedLagrangian(dncg_problem(), c=0.0)


def test_dncg_single_step():
    res = dncg(dncg_problem(), 1, x0=np.array([0.0]))
    # alpha = 1: the step lands on the LMO vertex
    assert res.x_last[0] == 1.0 and res.k_hat == 0
    assert res.c == 1.0 and res.alpha == 1.0


def test_dncg_inactive_constraint_is_plain_conditional_gradient():
    f = quadratic_oracle([[2.0]], [-0.6], 0.09)
    loose = NonconvexProblem(f, [linear_oracle([1.0], -2.0)], UNIT, 0.0)
    bare = NonconvexProblem(f, [], UNIT, 0.0)
    a, b = dncg(loose, 200), dncg(bare, 200)
    assert np.array_equal(a.q_trace, b.q_trace)
    assert a.infeas_sq == 0.0


def test_dncg_approaches_smoothed_stationary_point():
    # stationary point of the smoothed Lagrangian: 2(x - 0.8) + (x - 0.5)/c = 0,
    # which tends to the constrained optimum 0.5 as c shrinks
    res = dncg(dncg_problem(), 4096)
    c = res.c
    target = (1.6 + 0.5 / c) / (2.0 + 1.0 / c)
    assert abs(res.x[0] - target) <= 1e-2
    assert abs(dncg(dncg_problem(), 65536).x[0] - 0.5) < abs(res.x[0] - 0.5)
    assert res.infeas_sq <= dncg_violation_bound(dncg_problem(), res)
    assert res.min_q <= 1e-3


def test_kkt_examples():
    p = dncg_problem()
    r = kkt_measures(p, np.array([0.3]), np.zeros(1))
    assert r.complementarity == 0.0 and r.infeasibility == 0.0 and r.proximity == 0.0
    assert r.stationarity == pytest.approx(wolfe_gap(p, np.array([0.3])))
    active = kkt_measures(p, np.array([0.5]), np.array([0.6]), anchor=np.array([0.4]))
    assert active.complementarity == 0.0
    assert active.proximity == pytest.approx(0.01)
    # multiplier 0.6 balances the objective slope -0.6 at the optimum
    assert active.stationarity == pytest.approx(0.0, abs=1e-12)


def test_ipp_single_round_returns_subproblem_solution():
    p = ipp_convex_problem()
    res = ipp_lcg(p, J=1, delta_f=5e-2, delta_h=5e-2, x0=[0.0], tau_scale=0.3)
    assert res.j_hat == 1 and len(res.iterates) == 2
    assert np.array_equal(res.x, res.iterates[1])


def test_ipp_requires_parameters():
    with pytest.raises(ValueError):
        ipp_lcg(ipp_convex_problem())
    with pytest.raises(ValueError):
        ipp_lcg(dncg_problem(), epsilon=0.1)


def test_ipp_nonconvex_reaches_grid_stationary_point():
    p = ipp_nonconvex_problem()
    grid = grid_minimize(p.f, p.x_set, GridSpec([(0, 1, 10001)]), constraints=p.h)
    res = ipp_lcg(p, J=3, delta_f=5e-2, delta_h=5e-2, x0=[1.0], tau_scale=0.3)
    assert abs(res.x[0] - grid.x[0]) <= 5e-2
    rep = res.reports[res.j_hat - 1]
    assert rep.infeasibility <= 5e-2
