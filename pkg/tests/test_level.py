import numpy as np
import pytest

from levelcg.errors import BudgetExhausted, GammaDegenerate, InfeasibleStart
from levelcg.geometry import Box
from levelcg.instances import TOY_OPTIMUM, toy_problem
from levelcg.level import (ConstrainedProblem, build_level_subproblem, init_level,
                           kappa_estimate, lcg_solve, mlcg_solve,
                           optimality_certificate)
from levelcg.models.portfolio import ReturnsData, build_card_free_convex
from levelcg.oracle import linear_oracle, quadratic_oracle
from levelcg.verify import GridSpec, grid_minimize

UNIT = Box([0.0], [1.0])


def test_init_level_examples():
    sq = ConstrainedProblem(quadratic_oracle([[2.0]], [0.0]), [], UNIT)
    assert init_level(sq, np.array([1.0])) == pytest.approx(-1.0)
    lin = ConstrainedProblem(linear_oracle([2.0, -1.0]), [], Box([0, 0], [1, 1]))
    assert init_level(lin, np.array([0.4, 0.4])) == pytest.approx(-1.0)
    assert init_level(toy_problem(), np.array([0.0])) == 0.0


def test_level_subproblem_rows():
    p = toy_problem()
    sub = build_level_subproblem(p, 0.2)
    assert sub.m == 2 and sub.f_bar is None
    vals, _ = sub.eval_h(np.array([0.2]))
    assert vals[0] == pytest.approx(0.0)
    shifted, _ = build_level_subproblem(p, 0.5).eval_h(np.array([0.2]))
    assert shifted[0] == pytest.approx(vals[0] - 0.3)
    assert shifted[1] == pytest.approx(vals[1])


def test_lcg_toy():
    sol = lcg_solve(toy_problem(), 1e-2, 0.9)
    assert abs(sol.x[0] - TOY_OPTIMUM) <= 1e-2
    assert sol.objective - TOY_OPTIMUM <= 1e-2 and sol.infeasibility <= 1e-2
    assert np.all(np.diff(sol.levels) > 0)
    assert all(level <= TOY_OPTIMUM + 1e-9 for level in sol.levels)
    # every non-terminal round had a positive lower bound
    assert all(L > 0 for _, _, L, _, _, _ in sol.trace[:-1])
    assert sol.objective - TOY_OPTIMUM >= sol.certificate - 1e-12


def test_lcg_already_solved_level():
    # pure objective, no constraints binding: the first level is f*
    p = ConstrainedProblem(linear_oracle([1.0]), [linear_oracle([-1.0], -0.5)], UNIT)
    sol = lcg_solve(p, 1e-3, 0.9)
    assert sol.outer_iters == 1 and sol.x[0] == pytest.approx(0.0, abs=1e-3)


def test_lcg_parameter_checks():
    with pytest.raises(ValueError):
        lcg_solve(toy_problem(), 1e-2, 0.5)
    with pytest.raises(ValueError):
        lcg_solve(toy_problem(), 0.0, 0.9)


def test_lcg_budget_exhaustion_carries_solution():
    with pytest.raises(BudgetExhausted) as info:
        lcg_solve(toy_problem(), 1e-6, 0.9, total_inner=20)
    sol = info.value.solution
    assert sol.status == "budget" and sol.inner_iters_total <= 20


def test_kappa_example():
    assert kappa_estimate(-0.2, 1.0, 0.0, 1e-3) == pytest.approx(0.2)
    assert kappa_estimate(0.0, 1.0, 0.0, 1e-3) == 1e-3


def test_certificate_examples():
    assert optimality_certificate(0.5, np.array([0.3, 0.4]), 0.01) == pytest.approx(-0.01)
    assert optimality_certificate(0.5, np.array([0.3, 0.4]), 0.0) == 0.0
    with pytest.raises(GammaDegenerate):
        optimality_certificate(0.0, np.array([1.0]), 0.1)


def test_mlcg_requires_feasible_start():
    with pytest.raises(InfeasibleStart):
        mlcg_solve(toy_problem(), np.array([0.1]), 1e-2)


def test_mlcg_toy():
    sol = mlcg_solve(toy_problem(), np.array([1.0]), 1e-2, mu=0.5)
    assert sol.levels[0] == 1.0
    assert np.all(np.diff(sol.levels) < 0)
    assert all(level >= TOY_OPTIMUM - 1e-9 for level in sol.levels)
    assert sol.objective - TOY_OPTIMUM <= 1e-2 + 1e-9


def test_mlcg_starting_at_optimum_stops_immediately():
    p = ConstrainedProblem(linear_oracle([1.0]), [linear_oracle([-1.0], -0.5)], UNIT)
    sol = mlcg_solve(p, np.array([0.0]), 0.1, mu=0.5)
    assert sol.outer_iters == 1


def test_two_asset_card_free_against_grid():
    # four hand-picked weekly returns for two assets and an index
    r = np.array([[0.02, -0.01], [-0.03, 0.01], [0.01, 0.02], [0.00, -0.02]])
    idx = np.array([0.01, -0.01, 0.015, -0.005])
    model = build_card_free_convex(ReturnsData(r, idx), alpha=0.5)
    p = model.problem
    # hinge rows converge at the nonsmooth rate, so a coarse target keeps this quick
    eps = 1e-2
    sol = lcg_solve(p, eps, 0.9)
    (u_lo, u_hi) = p.x_set.factors[1].lower[0], p.x_set.factors[1].upper[0]
    grid = GridSpec([(0, 1, 151), (0, 1, 151), (u_lo, u_hi, 301)])
    ref = grid_minimize(p.f, p.x_set, grid, constraints=p.h)
    assert sol.infeasibility <= eps
    assert sol.objective <= ref.value + eps
    assert sol.objective >= ref.lower - eps
