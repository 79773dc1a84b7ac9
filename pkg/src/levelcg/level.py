"""Level-set outer loops for ``min f(x) s.t. h_i(x) <= 0, x in X``.

The value function ``phi(l) = min_x max{f(x) - l, h_1(x), ..., h_m(x)}`` is
nonincreasing with root ``f*``. ``lcg_solve`` approaches the root from below
with approximate Newton steps driven by the saddle oracle's lower bound and
objective dual weight; ``mlcg_solve`` approaches it from above starting at a
feasible point.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .cgo import SaddleProblem, cgo_solve
from .errors import BudgetExhausted, GammaDegenerate, InfeasibleStart
from .geometry import zero_vertex
from .oracle import linearize, with_estimated_constants

GAMMA_FLOOR = 1e-12
LEVEL_TRACE_FIELDS = ("k", "level", "L", "U", "gamma", "inner")


class ConstrainedProblem:
    """Objective ``f``, convex constraint rows ``h`` and a compact set."""

    def __init__(self, f, h, x_set, prox_kind="entropy", name=""):
        self.x_set = x_set
        self.dim = x_set.dim
        self.f = f if f.structured else with_estimated_constants(f, x_set)
        self.h = [o if o.structured else with_estimated_constants(o, x_set) for o in h]
        self.m = len(self.h)
        self.prox_kind = prox_kind
        self.name = name
        for o in [self.f] + self.h:
            if o.dim != self.dim:
                raise ValueError(f"oracle {o!r} has dim {o.dim}, set has {self.dim}")

    @property
    def structured(self):
        return self.f.structured or any(o.structured for o in self.h)

    def objective(self, x):
        return float(self.f(x, 0.0)[0] if self.f.structured else self.f.func(x)[0])

    def constraints(self, x):
        return np.array([o(x, 0.0)[0] if o.structured else o.func(x)[0]
                         for o in self.h])

    def infeasibility(self, x):
        """``||[h(x)]_+||_inf`` with exact constraint values."""
        if self.m == 0:
            return 0.0
        return float(max(0.0, self.constraints(x).max()))

    def violation(self, x):
        """``||[h(x)]_+||_2`` with exact constraint values."""
        if self.m == 0:
            return 0.0
        return float(np.linalg.norm(np.maximum(self.constraints(x), 0.0)))


@dataclass
class EpsSolution:
    x: np.ndarray
    objective: float
    f_gap_bound: float
    infeasibility: float
    certificate: float
    outer_iters: int
    inner_iters_total: int
    level: float
    gamma: float
    z: np.ndarray
    status: str = "converged"
    levels: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    cgo_trace: list = field(default_factory=list)
    kappa: float = None


def init_level(problem, x0):
    """Minimum over X of the linearization of ``f`` at ``x0`` (a lower bound on f*)."""
    value, _ = linearize(problem.f, x0).minimize(problem.x_set)
    return value


def build_level_subproblem(problem, level):
    rows = [problem.f.shift(-level)] + list(problem.h)
    return SaddleProblem(rows, problem.x_set, prox_kind=problem.prox_kind)


def optimality_certificate(gamma, z, infeasibility):
    """Heuristic lower bound ``-(||z|| / gamma) * ||[h(x)]_+||`` on ``f(x) - f*``.

    ``z`` are the constraint-row dual weights and ``gamma`` the objective-row
    weight of the final saddle iterate; they stand in for the unknown optimal
    multipliers, so the bound is a heuristic, not a proof.
    """
    if not gamma > GAMMA_FLOOR:
        raise GammaDegenerate(gamma)
    if infeasibility <= 0.0:
        return 0.0
    return -float(np.linalg.norm(z)) / gamma * infeasibility


def _solution(problem, out, level, k, used, status, levels, rows, cgo_rows, kappa=None):
    x = out.x
    cons = problem.constraints(x)
    viol = float(np.linalg.norm(np.maximum(cons, 0.0))) if problem.m else 0.0
    gamma = float(out.z[0])
    cert = (optimality_certificate(gamma, out.z[1:], viol)
            if gamma > GAMMA_FLOOR else float("nan"))
    return EpsSolution(
        x=x, objective=problem.objective(x), f_gap_bound=out.U,
        infeasibility=problem.infeasibility(x), certificate=cert,
        outer_iters=k, inner_iters_total=used, level=level, gamma=gamma,
        z=out.z, status=status, levels=list(levels), trace=rows,
        cgo_trace=cgo_rows, kappa=kappa)


def lcg_solve(problem, epsilon, mu=0.9, max_outer=200, max_inner=100_000,
              x0=None, total_inner=None, tau_scale=1.0, early_exit=True,
              warm_start=True, trace=False):
    """Level conditional gradient: levels increase towards ``f*`` from below.

    Parameters
    ----------
    epsilon : target accuracy for both optimality and feasibility.
    mu : inner accuracy factor in (1/2, 1); each saddle solve stops at gap
        ``(1 - mu) * epsilon``.
    max_outer, max_inner : outer iteration cap and per-call inner cap.
    total_inner : optional cap on inner iterations summed over all calls.
    early_exit : stop an inner solve as soon as ``U_t <= epsilon``; the output
        guarantee only needs that inequality.
    warm_start : start each inner solve from the previous primal iterate.
    trace : keep per-iteration inner rows and per-level rows.

    Returns an ``EpsSolution``. Raises ``BudgetExhausted`` (carrying the last
    solution) when a budget stops the loop, and ``GammaDegenerate`` when the
    Newton step would divide by a vanishing weight.
    """
    if not 0.5 < mu < 1.0:
        raise ValueError("mu must lie in (1/2, 1)")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x_start = zero_vertex(problem.x_set) if x0 is None else np.asarray(x0, float)
    level = init_level(problem, x_start)
    tol = (1.0 - mu) * epsilon
    if early_exit:
        stop = lambda L, U, t: U - L <= tol or U <= epsilon
    else:
        stop = None

    used = 0
    levels, rows, cgo_rows = [], [], []
    out = None
    for k in range(1, max_outer + 1):
        budget = max_inner
        if total_inner is not None:
            budget = min(budget, total_inner - used)
        sub = build_level_subproblem(problem, level)
        sink = [] if trace else None
        out = cgo_solve(sub, epsilon, mu, budget, x0=x_start,
                        tau_scale=tau_scale, stop=stop, trace=sink)
        used += out.iterations
        levels.append(level)
        rows.append((k, level, out.L, out.U, out.gamma, out.iterations))
        if trace:
            cgo_rows.extend((k,) + r for r in sink)
        if out.U <= epsilon:
            return _solution(problem, out, level, k, used, "converged",
                             levels, rows, cgo_rows)
        exhausted = total_inner is not None and used >= total_inner
        if exhausted or (out.truncated and out.L <= 0.0):
            raise BudgetExhausted(_solution(problem, out, level, k, used, "budget",
                                            levels, rows, cgo_rows))
        if out.gamma <= GAMMA_FLOOR:
            raise GammaDegenerate(out.gamma)
        level = level + out.L / out.gamma
        if warm_start:
            x_start = out.x
    raise BudgetExhausted(_solution(problem, out, level, max_outer, used, "budget",
                                    levels, rows, cgo_rows))


def kappa_estimate(u1, level1, f_tilde, epsilon):
    """Lower estimate of the root-finding condition number.

    Falls back to ``epsilon`` when the first upper bound is not negative,
    which happens when the starting level already equals the optimum.
    """
    if u1 < 0.0 and level1 > f_tilde:
        return -u1 / (level1 - f_tilde)
    return epsilon


def mlcg_solve(problem, x0, epsilon, mu=0.9, max_outer=200, max_inner=100_000,
               total_inner=None, tau_scale=1.0, warm_start=True, trace=False):
    """Level conditional gradient from above, started at a feasible ``x0``.

    Levels start at ``f(x0)`` and decrease by the saddle upper bound each
    round. The first round also fixes the condition estimate ``kappa``: its
    inner solve stops once the gap is below ``(1 - mu) * kappa_t * epsilon``
    with ``kappa_t`` computed from the running upper bound. Terminates when the
    lower bound reaches ``-epsilon * kappa``.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    x0 = np.asarray(x0, dtype=float)
    if problem.infeasibility(x0) > 0.0:
        raise InfeasibleStart(f"start point violates constraints by {problem.infeasibility(x0):.3e}")
    level = problem.objective(x0)
    level1 = level
    f_tilde = init_level(problem, x0)
    kappa = None
    x_start = x0

    used = 0
    levels, rows, cgo_rows = [], [], []
    out = None
    for k in range(1, max_outer + 1):
        budget = max_inner
        if total_inner is not None:
            budget = min(budget, total_inner - used)
        if kappa is None:
            stop = (lambda L, U, t: U - L <= (1.0 - mu) * epsilon
                    * kappa_estimate(U, level1, f_tilde, epsilon))
        else:
            tol = (1.0 - mu) * kappa * epsilon
            stop = lambda L, U, t: U - L <= tol
        sub = build_level_subproblem(problem, level)
        sink = [] if trace else None
        out = cgo_solve(sub, epsilon, mu, budget, x0=x_start, tau_scale=tau_scale,
                        stop=stop, trace=sink)
        used += out.iterations
        if kappa is None:
            kappa = kappa_estimate(out.U, level1, f_tilde, epsilon)
        levels.append(level)
        rows.append((k, level, out.L, out.U, out.gamma, out.iterations))
        if trace:
            cgo_rows.extend((k,) + r for r in sink)
        if out.converged and out.L >= -epsilon * kappa:
            return _solution(problem, out, level, k, used, "converged", levels,
                             rows, cgo_rows, kappa)
        exhausted = total_inner is not None and used >= total_inner
        if exhausted or out.U >= 0.0:
            # without a negative upper bound the level cannot move down
            raise BudgetExhausted(_solution(problem, out, level, k, used, "budget",
                                            levels, rows, cgo_rows, kappa))
        level = level + out.U
        if warm_start:
            x_start = out.x
    raise BudgetExhausted(_solution(problem, out, level, max_outer, used, "budget",
                                    levels, rows, cgo_rows, kappa))
