"""Conditional gradient oracle for convex saddle problems over a simplex.

Solves ``min_{x in X} max_{z in simplex} f(x) + <h(x), z>`` with a
projection-free primal step and a prox (mirror) dual step on the simplex.
Every iteration yields a lower bound ``L_t`` from aggregated linearizations
and an upper bound ``U_t = f(x_t) + max_i h_i(x_t)`` on the saddle value.

When some rows are ``StructuredOracle`` instances the same loop runs on
smoothed versions with a decaying smoothing level, while ``U_t`` is always
computed from the exact functions.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConstant, Truncated
from .geometry import SimplexProx, zero_vertex
from .oracle import AffineMinorant, with_estimated_constants


def cgo_params(t, m_bar, d_x, tau_scale=1.0):
    """Step size, extrapolation weight and dual prox weight at iteration t."""
    if t < 1:
        raise ValueError("iteration counter starts at 1")
    if not (m_bar > 0 and d_x > 0):
        raise InvalidConstant(f"need positive Lipschitz bound and diameter, got {m_bar}, {d_x}")
    return 2.0 / (t + 1), (t - 1) / t, tau_scale * 9.0 * math.sqrt(t) * m_bar * d_x


class SaddleProblem:
    """``min_x max_z f(x) + <h(x), z>`` with ``z`` on the standard simplex.

    Parameters
    ----------
    h_bar : list of oracles
        Rows of the coupling map; smooth or structured.
    x_set : feasible set with ``lmo`` and ``diameter``.
    f_bar : oracle or None
        Optional primal-only term. ``None`` means zero.
    prox_kind : {'entropy', 'euclidean'}
    """

    def __init__(self, h_bar, x_set, f_bar=None, prox_kind="entropy"):
        if len(h_bar) < 1:
            raise ValueError("saddle problem needs at least one coupling row")
        self.x_set = x_set
        self.dim = x_set.dim
        self.h_bar = [self._fill(o) for o in h_bar]
        self.f_bar = None if f_bar is None else self._fill(f_bar)
        for o in self.oracles:
            if o.dim != self.dim:
                raise ValueError(f"oracle {o!r} has dim {o.dim}, set has {self.dim}")
        self.m = len(self.h_bar)
        self.prox = SimplexProx(prox_kind, self.m)
        self.d_x = x_set.diameter()
        self.m_bar = math.sqrt(sum(o.lipschitz_val ** 2 for o in self.h_bar))
        self.vbar = self.prox.vbar
        self.structured = any(o.structured for o in self.oracles)
        self.estimated = any(o.estimated for o in self.oracles)

    def _fill(self, o):
        if o.structured:
            return o
        return with_estimated_constants(o, self.x_set)

    @property
    def oracles(self):
        return self.h_bar + ([] if self.f_bar is None else [self.f_bar])

    def etas(self, t):
        """Per-row smoothing levels at iteration ``t`` (0 for smooth rows)."""
        t = max(t, 1)
        return [o.eta_at(t, self.d_x) if o.structured else 0.0 for o in self.h_bar]

    def f_eta(self, t):
        if self.f_bar is None or not self.f_bar.structured:
            return 0.0
        return self.f_bar.eta_at(max(t, 1), self.d_x)

    def eval_h(self, x, etas=None):
        vals = np.empty(self.m)
        jac = np.empty((self.m, self.dim))
        for i, o in enumerate(self.h_bar):
            if o.structured:
                v, g = o(x, 0.0 if etas is None else etas[i])
            else:
                v, g = o.func(x)
            vals[i] = v
            jac[i] = g
        return vals, jac

    def eval_f(self, x, eta=0.0):
        if self.f_bar is None:
            return 0.0, np.zeros(self.dim)
        if self.f_bar.structured:
            return self.f_bar(x, eta)
        return self.f_bar.func(x)

    def value(self, x):
        """Exact primal value ``f(x) + max_i h_i(x)``."""
        return self.eval_f(x)[0] + float(np.max(self.eval_h(x)[0]))

    def values(self, points):
        """Exact primal values at the rows of ``points``."""
        H = np.column_stack([o.values(points) for o in self.h_bar])
        out = H.max(axis=1)
        if self.f_bar is not None:
            out = out + self.f_bar.values(points)
        return out

    def gap_bound(self, t):
        """Worst-case bound on ``U_t - L_t`` for the default schedule."""
        if self.structured:
            raise ValueError("closed-form bound is stated for smooth problems only")
        lf = 0.0 if self.f_bar is None else self.f_bar.lipschitz_grad
        lh = max(o.lipschitz_grad for o in self.h_bar)
        d = self.d_x
        return (2.0 * (lf + lh) * d * d / (t + 1)
                + self.m_bar * d / math.sqrt(t + 1) * (18.0 * self.vbar + 7.0 / 6.0))


@dataclass
class CgoOutput:
    x: np.ndarray
    z: np.ndarray
    gamma: float
    L: float
    U: float
    iterations: int
    converged: bool
    truncated: bool
    f_minorant: AffineMinorant = None
    h_minorant: AffineMinorant = None
    trace: list = field(default_factory=list)
    etas: list = field(default_factory=list)

    @property
    def gap(self):
        return self.U - self.L


TRACE_FIELDS = ("t", "L", "U", "gap", "support")


def _run(problem, tol, max_iter, x0, tau_scale, stop, trace, strict):
    xs = problem.x_set
    x_prev = zero_vertex(xs) if x0 is None else np.asarray(x0, dtype=float).copy()
    m_bar, d_x = problem.m_bar, problem.d_x
    structured = problem.structured
    lmo = xs.lmo
    prox = problem.prox

    etas = problem.etas(1)
    f_eta = problem.f_eta(1)
    vals, jac = problem.eval_h(x_prev, etas)
    fv, fg = problem.eval_f(x_prev, f_eta)

    r = np.full(problem.m, 1.0 / problem.m)
    z = r.copy()
    # extrapolation memory: l_h(x_{t-2}, p_{t-1}) and l_h(x_{t-3}, p_{t-2})
    g_prev = vals.copy()
    g_prev2 = vals.copy()
    slope_f = fg.copy()
    icpt_f = fv - fg @ x_prev
    slope_h = jac.T @ r
    icpt_h = r @ (vals - jac @ x_prev)

    best = None
    rows = []
    t = 0
    converged = False
    while t < max_iter:
        t += 1
        alpha, lam, tau = cgo_params(t, m_bar, d_x, tau_scale)
        if structured and t > 1:
            etas = problem.etas(t)
            f_eta = problem.f_eta(t)
            vals, jac = problem.eval_h(x_prev, etas)
            fv, fg = problem.eval_f(x_prev, f_eta)
        h_tilde = g_prev + lam * (g_prev - g_prev2)
        r = prox.step(r, h_tilde, tau)
        z = (1.0 - alpha) * z + alpha * r

        cost = fg + jac.T @ r
        p = lmo(cost)
        x = (1.0 - alpha) * x_prev + alpha * p

        slope_f = (1.0 - alpha) * slope_f + alpha * fg
        icpt_f = (1.0 - alpha) * icpt_f + alpha * (fv - fg @ x_prev)
        jr = jac.T @ r
        slope_h = (1.0 - alpha) * slope_h + alpha * jr
        icpt_h = (1.0 - alpha) * icpt_h + alpha * (r @ vals - jr @ x_prev)
        s = slope_f + slope_h
        q = lmo(s)
        L = float(s @ q + icpt_f + icpt_h)

        g_new = vals + jac @ (p - x_prev)
        g_prev2, g_prev = g_prev, g_new

        # exact values at x_t; in the smooth case they double as the next
        # linearization point
        vals_x, jac_x = problem.eval_h(x)
        fv_x, fg_x = problem.eval_f(x)
        U = float(fv_x + vals_x.max())
        if not structured:
            vals, jac, fv, fg = vals_x, jac_x, fv_x, fg_x
        x_prev = x

        gap = U - L
        if trace is not None:
            rows.append((t, L, U, gap, int(np.count_nonzero(x))))
        if best is None or gap < best[5]:
            best = (x, z, float(z[0]), L, U, gap, t)
        done = stop(L, U, t) if stop is not None else gap <= tol
        if done:
            converged = True
            best = (x, z, float(z[0]), L, U, gap, t)
            break

    bx, bz, bgamma, bL, bU, _, _ = best
    out = CgoOutput(
        x=bx, z=bz, gamma=bgamma, L=bL, U=bU, iterations=t,
        converged=converged, truncated=not converged,
        f_minorant=AffineMinorant(slope_f, icpt_f),
        h_minorant=AffineMinorant(slope_h, icpt_h),
        trace=rows, etas=list(etas))
    if trace is not None and hasattr(trace, "extend"):
        trace.extend(rows)
    if strict and not converged:
        raise Truncated(out)
    return out


def cgo_solve(problem, epsilon, mu, max_iter=100_000, x0=None, tau_scale=1.0,
              stop=None, trace=None, strict=False):
    """Run the oracle until ``U_t - L_t <= (1 - mu) * epsilon``.

    ``stop(L, U, t)`` replaces the default stopping test when given. On budget
    exhaustion the best-gap iterate is returned with ``truncated=True`` (or
    ``Truncated`` is raised when ``strict``). ``trace`` may be a list that
    receives ``(t, L, U, gap, support)`` rows.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    return _run(problem, (1.0 - mu) * epsilon, int(max_iter), x0, tau_scale,
                stop, trace, strict)


def cgo_solve_nonsmooth(problem, epsilon, mu, max_iter=100_000, x0=None,
                        tau_scale=1.0, stop=None, trace=None, strict=False):
    """Same loop; structured rows are smoothed with the decaying schedule.

    Kept as a separate entry point for clarity. On a problem with no
    structured rows it follows exactly the smooth trajectory.
    """
    return cgo_solve(problem, epsilon, mu, max_iter, x0, tau_scale, stop, trace,
                     strict)
