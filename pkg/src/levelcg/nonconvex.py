"""Solvers for a nonconvex smooth objective under convex constraints.

* ``ipp_lcg``: inexact proximal point. Each round adds ``rho * ||x - x_prev||^2``
  (``rho`` = lower curvature of ``f``) which makes the subproblem convex, and
  solves it with ``lcg_solve``.
* ``dncg``: single-loop conditional gradient on the smoothed Lagrangian
  ``F(x) = f(x) + <y(x), h(x)> - (c/2)||y(x)||^2`` with ``y(x) = max(h(x)/c, 0)``.

Progress is measured by the Wolfe gap ``Q(x) = <g, x> - min_{p in X} <g, p>``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted
from .geometry import zero_vertex
from .level import ConstrainedProblem, lcg_solve
from .oracle import SmoothOracle

DNCG_TRACE_FIELDS = ("k", "Q", "infeas_sq", "f")


class NonconvexProblem(ConstrainedProblem):
    """Smooth, possibly nonconvex ``f`` with lower curvature ``rho``.

    ``f(x) - f(y) - <grad f(y), x - y> >= -(rho / 2) ||x - y||^2`` on X.
    Constraint rows must be convex.
    """

    def __init__(self, f, h, x_set, lower_curvature, prox_kind="entropy", name=""):
        if f.structured:
            raise TypeError("nonconvex objective must be a smooth oracle")
        super().__init__(f, h, x_set, prox_kind, name)
        if lower_curvature < 0:
            raise ValueError("lower curvature must be nonnegative")
        self.lower_curvature = float(lower_curvature)

    def grad_f(self, x):
        return self.f.func(x)[1]


def wolfe_gap_from_grad(grad, x, x_set):
    p = x_set.lmo(grad)
    return float(grad @ (np.asarray(x, dtype=float) - p))


def wolfe_gap(target, x):
    """Wolfe gap of a ``SmoothedLagrangian`` or of the objective of a problem."""
    if isinstance(target, SmoothedLagrangian):
        return wolfe_gap_from_grad(target.grad(x), x, target.x_set)
    return wolfe_gap_from_grad(target.grad_f(x), x, target.x_set)


def build_prox_subproblem(problem, center, curvature=None):
    """Convex problem ``f(x) + rho * ||x - center||^2`` with the same constraints."""
    rho = problem.lower_curvature if curvature is None else float(curvature)
    center = np.asarray(center, dtype=float).copy()
    func = problem.f.func

    def f(x):
        v, g = func(x)
        d = x - center
        return v + rho * float(d @ d), g + 2.0 * rho * d

    base = problem.f
    d_x = problem.x_set.diameter()
    sub_f = SmoothOracle(f, problem.dim, base.lipschitz_grad + 2.0 * rho,
                         base.lipschitz_val + 2.0 * rho * d_x, True,
                         name=f"prox[{base.name}]")
    return ConstrainedProblem(sub_f, problem.h, problem.x_set, problem.prox_kind,
                              name=f"prox({problem.name})")


@dataclass
class KktReport:
    complementarity: float
    stationarity: float
    proximity: float
    infeasibility: float
    stationarity_kind: str = "wolfe-surrogate"


def kkt_measures(problem, x, y, anchor=None):
    """Complementarity ``sum |y_i h_i(x)|``, Wolfe-gap stationarity and proximity.

    Stationarity is the Wolfe gap of ``grad f + sum y_i grad h_i`` at ``x``, a
    computable stand-in for the normal-cone distance. Proximity is
    ``||anchor - x||^2`` (0 without an anchor).
    """
    x = np.asarray(x, dtype=float)
    y = np.zeros(problem.m) if y is None else np.asarray(y, dtype=float)
    g = problem.grad_f(x).copy()
    vals = np.zeros(problem.m)
    for i, o in enumerate(problem.h):
        v, gi = o(x, 0.0) if o.structured else o.func(x)
        vals[i] = v
        g += y[i] * gi
    prox = 0.0 if anchor is None else float(np.sum((np.asarray(anchor) - x) ** 2))
    return KktReport(
        complementarity=float(np.sum(np.abs(y * vals))),
        stationarity=max(0.0, wolfe_gap_from_grad(g, x, problem.x_set)),
        proximity=prox,
        infeasibility=float(max(0.0, vals.max())) if problem.m else 0.0)


@dataclass
class IppResult:
    x: np.ndarray
    j_hat: int
    iterates: list
    reports: list
    decreases: list
    hit_budget: list
    inner_iters_total: int
    eps_J: float = None
    eps_prime_J: float = None
    slater_ratio: float = None
    status: str = "converged"


def ipp_lcg(problem, J=None, delta_f=None, delta_h=None, mu=0.9, x0=None,
            epsilon=None, max_outer=200, max_inner=100_000, total_inner=None,
            tau_scale=1.0, slater_point=None, trace=False):
    """Inexact proximal point with level conditional gradient subsolves.

    Defaults follow ``delta_f = delta_h = epsilon`` and ``J = ceil(1/epsilon)``.
    Each subproblem is solved to accuracy ``min(delta_f, delta_h)``. The
    returned point is the iterate ``x_j`` with the smallest decrease
    ``f(x_{j-1}) - f(x_j)``. With a strictly feasible ``slater_point`` the
    accuracy quantities of the convergence analysis are also reported.
    """
    if epsilon is not None:
        delta_f = epsilon if delta_f is None else delta_f
        delta_h = epsilon if delta_h is None else delta_h
        J = math.ceil(1.0 / epsilon) if J is None else J
    if J is None or delta_f is None or delta_h is None:
        raise ValueError("give epsilon or all of J, delta_f, delta_h")
    if problem.lower_curvature <= 0:
        raise ValueError("proximal point needs a positive lower curvature")
    tol = min(delta_f, delta_h)
    x_prev = zero_vertex(problem.x_set) if x0 is None else np.asarray(x0, float)
    xs = [x_prev]
    fvals = [problem.objective(x_prev)]
    reports, decreases, hit, duals = [], [], [], []
    used = 0
    status = "converged"
    for j in range(1, J + 1):
        sub = build_prox_subproblem(problem, x_prev)
        remaining = None if total_inner is None else total_inner - used
        if remaining is not None and remaining <= 0:
            status = "budget"
            break
        try:
            sol = lcg_solve(sub, tol, mu, max_outer, max_inner, x0=x_prev,
                            total_inner=remaining, tau_scale=tau_scale)
            hit.append(False)
        except BudgetExhausted as exc:
            sol = exc.solution
            hit.append(True)
        used += sol.inner_iters_total
        x = sol.x
        y = sol.z[1:] / sol.gamma if sol.gamma > 0 else np.zeros(problem.m)
        duals.append(y)
        xs.append(x)
        fvals.append(problem.objective(x))
        decreases.append(fvals[-2] - fvals[-1])
        reports.append(kkt_measures(problem, x, y, anchor=x_prev))
        x_prev = x
    if not decreases:
        raise BudgetExhausted(None, "no proximal round completed")
    j_hat = int(np.argmin(decreases)) + 1
    res = IppResult(x=xs[j_hat], j_hat=j_hat, iterates=xs, reports=reports,
                    decreases=decreases, hit_budget=hit, inner_iters_total=used,
                    status=status)
    if slater_point is not None:
        _attach_accuracy(problem, res, slater_point, delta_f, delta_h, fvals)
    return res


def _attach_accuracy(problem, res, slater_point, delta_f, delta_h, fvals):
    # f* is bounded below by f(slater) - M_f * D_X, which keeps the ratio an
    # upper bound
    rho = problem.lower_curvature
    d_x = problem.x_set.diameter()
    cons = problem.constraints(slater_point)
    margin = float(-cons.max())
    if margin <= 0:
        raise ValueError("slater point must be strictly feasible")
    gap_bound = problem.f.lipschitz_val * d_x
    ratio = (gap_bound + rho * d_x * d_x / 2.0) / margin
    res.slater_ratio = ratio
    slack = delta_f + ratio * delta_h
    J = len(res.decreases)
    res.eps_J = 2.0 / rho * slack
    res.eps_prime_J = 8.0 * rho / J * (fvals[0] - fvals[-1]) + slack


class SmoothedLagrangian:
    """``F(x) = f(x) + <y(x), h(x)> - (c/2)||y(x)||^2`` with ``y = max(h/c, 0)``.

    Structured constraint rows are smoothed at the fixed level ``eta``.
    """

    def __init__(self, base, c, eta=None):
        if not c > 0:
            raise ValueError("dual smoothing c must be positive")
        self.base = base
        self.c = float(c)
        self.x_set = base.x_set
        if any(o.structured for o in base.h) and eta is None:
            raise ValueError("structured constraints need a smoothing level eta")
        self.eta = eta

    def _h(self, x):
        m = self.base.m
        vals = np.empty(m)
        jac = np.empty((m, x.size))
        for i, o in enumerate(self.base.h):
            v, g = o(x, self.eta) if o.structured else o.func(x)
            vals[i] = v
            jac[i] = g
        return vals, jac

    def multipliers(self, x):
        vals, _ = self._h(np.asarray(x, dtype=float))
        return np.maximum(vals / self.c, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        fv, fg = self.base.f.func(x)
        if self.base.m == 0:
            return fv, fg
        vals, jac = self._h(x)
        y = np.maximum(vals / self.c, 0.0)
        return fv + y @ vals - 0.5 * self.c * y @ y, fg + jac.T @ y

    def value(self, x):
        return self(x)[0]

    def grad(self, x):
        return self(x)[1]

    @property
    def lipschitz_grad(self):
        base = self.base
        if base.m == 0:
            return base.f.lipschitz_grad
        m_h = np.array([o.lipschitz_val for o in base.h])
        l_h = np.array([o.lipschitz_grad_at(self.eta) if o.structured
                        else o.lipschitz_grad for o in base.h])
        d = base.x_set.diameter()
        nm = np.linalg.norm(m_h)
        return (base.f.lipschitz_grad + nm * np.linalg.norm(l_h) * d / self.c
                + nm * nm / self.c)


@dataclass
class DncgResult:
    x: np.ndarray
    q: float
    infeas_sq: float
    k_hat: int
    c: float
    alpha: float
    eta: float
    q_trace: np.ndarray
    x_last: np.ndarray
    trace: list = field(default_factory=list)

    @property
    def min_q(self):
        return float(self.q_trace.min())


def dncg_eta(problem, K):
    """Fixed smoothing for structured constraint rows over a horizon ``K``."""
    m_h = np.linalg.norm([o.lipschitz_val for o in problem.h])
    return float(m_h * problem.x_set.diameter() ** 3 / K ** 0.125)


def dncg(problem, K, x0=None, c=None, alpha=None, eta=None, anytime=False,
         trace=False):
    """Run ``K`` conditional-gradient steps on the smoothed Lagrangian.

    Defaults ``c = K**-0.25`` and ``alpha = K**-0.5``. ``anytime=True`` uses
    ``alpha_k = k**-0.5``, ``c_k = k**-0.25`` instead; that mode does not carry
    the fixed-horizon guarantee. The returned point minimizes the Wolfe gap
    over ``x_0 .. x_{K-1}``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    c = K ** -0.25 if c is None else float(c)
    alpha = K ** -0.5 if alpha is None else float(alpha)
    if eta is None and any(o.structured for o in problem.h):
        eta = dncg_eta(problem, K)
    lag = SmoothedLagrangian(problem, c, eta)
    xs = problem.x_set
    x = zero_vertex(xs) if x0 is None else np.asarray(x0, dtype=float).copy()
    qs = np.empty(K)
    rows = []
    best_q, best_x, k_hat = math.inf, x, 0
    for k in range(1, K + 1):
        if anytime:
            lag.c = k ** -0.25
            step = k ** -0.5
        else:
            step = alpha
        fv, g = lag(x)
        p = xs.lmo(g)
        q = float(g @ (x - p))
        qs[k - 1] = q
        if trace:
            v = problem.violation(x)
            rows.append((k - 1, q, v * v, problem.objective(x)))
        if q < best_q:
            best_q, best_x, k_hat = q, x, k - 1
        x = (1.0 - step) * x + step * p
    viol = problem.violation(best_x)
    return DncgResult(x=best_x, q=best_q, infeas_sq=viol * viol, k_hat=k_hat,
                      c=lag.c, alpha=alpha, eta=eta, q_trace=qs, x_last=x,
                      trace=rows)


def dncg_violation_bound(problem, result):
    """Right-hand side ``c (Q + (rho/2) D^2 + M_f D)`` for the output point."""
    d = problem.x_set.diameter()
    return result.c * (result.q + 0.5 * problem.lower_curvature * d * d
                       + problem.f.lipschitz_val * d)
