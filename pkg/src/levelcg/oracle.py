"""Function oracles, affine minorants and Nesterov smoothing of hinge/max terms.

Two oracle flavours exist:

* ``SmoothOracle``: ``oracle(x) -> (value, gradient)`` with declared
  gradient-Lipschitz constant ``lipschitz_grad`` and value-Lipschitz constant
  ``lipschitz_val``.
* ``StructuredOracle``: a nonsmooth convex function with a max-type structure.
  ``oracle(x, eta) -> (value, gradient)`` returns the smoothed function for
  ``eta > 0`` and the exact value with a subgradient for ``eta == 0``.
  It carries the operator norm ``b_norm`` and prox-function range ``d_u`` so
  that ``smoothed <= exact <= smoothed + eta * d_u**2``.
"""

import math

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DimMismatch, InvalidConstant, NonFiniteInput

FD_STEP = 1e-5
# max over s of |sigma''(s)| for the logistic function
SIGMOID_CURVATURE = 1.0 / (6.0 * math.sqrt(3.0))


class SmoothOracle:
    structured = False

    def __init__(self, func, dim, lipschitz_grad=None, lipschitz_val=None,
                 convex=True, batch=None, estimated=False, name=""):
        self.func = func
        self.dim = int(dim)
        self.lipschitz_grad = lipschitz_grad
        self.lipschitz_val = lipschitz_val
        self.convex = convex
        self.batch = batch
        self.estimated = estimated
        self.name = name

    def __call__(self, x, eta=0.0):
        return self.func(x)

    def value(self, x):
        return self.func(x)[0]

    def grad(self, x):
        return self.func(x)[1]

    def values(self, points):
        """Values at the rows of ``points``."""
        if self.batch is not None:
            return np.asarray(self.batch(points), dtype=float)
        return np.array([self.func(p)[0] for p in points])

    def shift(self, c):
        """Oracle for ``x -> f(x) + c``."""
        func = self.func
        batch = self.batch
        return SmoothOracle(
            lambda x: _shifted(func(x), c), self.dim, self.lipschitz_grad,
            self.lipschitz_val, self.convex,
            None if batch is None else (lambda P: batch(P) + c),
            self.estimated, self.name)

    def __repr__(self):
        return (f"SmoothOracle({self.name or 'f'}, dim={self.dim}, "
                f"L={self.lipschitz_grad}, M={self.lipschitz_val})")


class StructuredOracle:
    structured = True

    def __init__(self, func, dim, b_norm, d_u, lipschitz_val=None, y_u_norm=0.0,
                 smooth_lipschitz=0.0, convex=True, batch=None, name=""):
        if b_norm <= 0 or d_u <= 0:
            raise InvalidConstant("structured oracle needs positive b_norm and d_u")
        self.func = func
        self.dim = int(dim)
        self.b_norm = float(b_norm)
        self.d_u = float(d_u)
        self.y_u_norm = float(y_u_norm)
        self.smooth_lipschitz = float(smooth_lipschitz)
        self.convex = convex
        self.batch = batch
        self.estimated = False
        self.name = name
        self.lipschitz_val = (self.m_bu if lipschitz_val is None
                              else float(lipschitz_val))

    @property
    def m_bu(self):
        """Lipschitz constant of the smoothed family used in the step-size rule."""
        return self.b_norm * (self.y_u_norm + math.sqrt(2.0) * self.d_u)

    @property
    def lipschitz_grad(self):
        # only meaningful for a fixed smoothing level; see lipschitz_grad_at
        return None

    def lipschitz_grad_at(self, eta):
        return self.smooth_lipschitz + self.b_norm ** 2 / eta

    def smoothing_gap(self, eta):
        return eta * self.d_u ** 2

    def eta_at(self, t, d_x):
        return eta_schedule(t, self.b_norm, d_x, self.d_u)

    def __call__(self, x, eta=0.0):
        return self.func(x, eta)

    def value(self, x, eta=0.0):
        return self.func(x, eta)[0]

    def grad(self, x, eta=0.0):
        return self.func(x, eta)[1]

    def values(self, points):
        """Exact (unsmoothed) values at the rows of ``points``."""
        if self.batch is not None:
            return np.asarray(self.batch(points), dtype=float)
        return np.array([self.func(p, 0.0)[0] for p in points])

    def smoothed(self, eta):
        """Freeze the smoothing level and return a plain smooth oracle."""
        func = self.func
        return SmoothOracle(lambda x: func(x, eta), self.dim,
                            self.lipschitz_grad_at(eta), self.lipschitz_val,
                            self.convex, name=f"{self.name}@eta={eta:g}")

    def shift(self, c):
        func = self.func
        batch = self.batch
        out = StructuredOracle(
            lambda x, eta: _shifted(func(x, eta), c), self.dim, self.b_norm,
            self.d_u, self.lipschitz_val, self.y_u_norm, self.smooth_lipschitz,
            self.convex, None if batch is None else (lambda P: batch(P) + c),
            self.name)
        return out

    def __repr__(self):
        return (f"StructuredOracle({self.name or 'h'}, dim={self.dim}, "
                f"b_norm={self.b_norm:g}, d_u={self.d_u:g})")


def _shifted(vg, c):
    return vg[0] + c, vg[1]


class AffineMinorant:
    __slots__ = ("slope", "intercept")

    def __init__(self, slope, intercept):
        self.slope = np.asarray(slope, dtype=float)
        self.intercept = float(intercept)

    def __call__(self, x):
        return float(self.slope @ np.asarray(x, dtype=float) + self.intercept)

    def minimize(self, xset):
        """Exact minimum over ``xset`` and a minimizer (one LMO call)."""
        p = xset.lmo(self.slope)
        return float(self.slope @ p + self.intercept), p

    def __repr__(self):
        return f"AffineMinorant(slope={self.slope!r}, intercept={self.intercept!r})"


def linearize(oracle, anchor, eta=0.0):
    anchor = np.asarray(anchor, dtype=float)
    value, grad = oracle(anchor, eta) if oracle.structured else oracle(anchor)
    grad = np.asarray(grad, dtype=float)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise NonFiniteInput("oracle returned a non-finite value or gradient")
    return AffineMinorant(grad, value - grad @ anchor)


def combine_minorant(prev, new, alpha):
    if prev.slope.shape != new.slope.shape:
        raise DimMismatch("minorants differ in dimension")
    return AffineMinorant((1.0 - alpha) * prev.slope + alpha * new.slope,
                          (1.0 - alpha) * prev.intercept + alpha * new.intercept)


def smoothed_hinge_eval(eta, a):
    """Smoothed ``max(a, 0)``: value and derivative. ``eta == 0`` is exact.

    Works elementwise on arrays.
    """
    a = np.asarray(a, dtype=float)
    if eta <= 0.0:
        value = np.maximum(a, 0.0)
        deriv = (a > 0.0).astype(float)
    else:
        deriv = np.clip(a / eta, 0.0, 1.0)
        value = np.where(a >= eta, a - 0.5 * eta, 0.5 * a * deriv)
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def smoothed_groupmax_eval(eta, v):
    """Entropy-smoothed max ``eta * log(mean(exp(v / eta)))`` and its gradient.

    ``eta == 0`` returns the exact max with the first maximizer as subgradient.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("group values contain NaN or inf")
    n = v.size
    if eta <= 0.0:
        grad = np.zeros(n)
        i = int(np.argmax(v))
        grad[i] = 1.0
        return float(v[i]), grad
    s = v / eta
    lse = logsumexp(s)
    grad = np.exp(s - lse)
    return float(eta * (lse - math.log(n))), grad


def sigmoid_indicator_eval(theta, a):
    """Logistic surrogate of ``1{a > 0}`` with temperature ``theta``."""
    s = expit(np.asarray(a, dtype=float) / theta)
    return s, s * (1.0 - s) / theta


def eta_schedule(t, b_norm, d_x, d_u):
    if t < 1:
        raise ValueError("iteration counter starts at 1")
    if b_norm <= 0 or d_x <= 0 or d_u <= 0:
        raise InvalidConstant("smoothing schedule needs positive constants")
    return b_norm * d_x / (math.sqrt(t) * d_u)


def fd_check(oracle, points, step=FD_STEP, eta=None):
    """Max relative error between analytic gradients and central differences.

    The error at a point is ``||g - g_fd||_inf / max(1, ||g_fd||_inf)`` so that
    near-zero gradients are compared in absolute terms.
    """
    if oracle.structured:
        e = 0.0 if eta is None else eta
        f = lambda x: oracle(x, e)
    else:
        f = oracle.func
    worst = 0.0
    for p in points:
        p = np.asarray(p, dtype=float)
        g = np.asarray(f(p)[1], dtype=float)
        g_fd = np.empty_like(p)
        for i in range(p.size):
            e_i = np.zeros_like(p)
            e_i[i] = step
            g_fd[i] = (f(p + e_i)[0] - f(p - e_i)[0]) / (2.0 * step)
        err = np.max(np.abs(g - g_fd)) / max(1.0, np.max(np.abs(g_fd)))
        worst = max(worst, float(err))
    return worst


def estimate_constants(func, xset, rng, n_pairs=200):
    """Sampled (L, M): twice the largest observed gradient/value ratios."""
    P = xset.sample(rng, n_pairs)
    Q = xset.sample(rng, n_pairs)
    L = M = 0.0
    for p, q in zip(P, Q):
        d = np.linalg.norm(p - q)
        if d < 1e-12:
            continue
        vp, gp = func(p)
        vq, gq = func(q)
        L = max(L, np.linalg.norm(np.asarray(gp) - gq) / d)
        M = max(M, abs(vp - vq) / d, np.linalg.norm(gp))
    return 2.0 * L, 2.0 * M


def with_estimated_constants(oracle, xset, rng=None, n_pairs=200):
    """Fill in missing constants of a smooth oracle by sampling."""
    if oracle.lipschitz_grad is not None and oracle.lipschitz_val is not None:
        return oracle
    rng = np.random.default_rng(0) if rng is None else rng
    L, M = estimate_constants(oracle.func, xset, rng, n_pairs)
    return SmoothOracle(
        oracle.func, oracle.dim,
        L if oracle.lipschitz_grad is None else oracle.lipschitz_grad,
        M if oracle.lipschitz_val is None else oracle.lipschitz_val,
        oracle.convex, oracle.batch, True, oracle.name)


def set_radius(xset):
    """Largest Euclidean norm of a point of ``xset``."""
    from .geometry import Box, ProductSet, ScaledSimplexLeq, StandardSimplex
    if isinstance(xset, ScaledSimplexLeq):
        return xset.radius
    if isinstance(xset, StandardSimplex):
        return 1.0
    if isinstance(xset, Box):
        return float(np.linalg.norm(np.maximum(np.abs(xset.lower), np.abs(xset.upper))))
    if isinstance(xset, ProductSet):
        return math.sqrt(sum(set_radius(f) ** 2 for f in xset.factors))
    raise TypeError(f"no radius rule for {type(xset).__name__}")


# ---------------------------------------------------------------- factories

def linear_oracle(c, b=0.0, name="linear"):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    b = float(b)
    return SmoothOracle(lambda x: (float(c @ x) + b, c), c.size, 0.0,
                        float(np.linalg.norm(c)), True,
                        lambda P: P @ c + b, name=name)


def constant_oracle(value, dim, name="constant"):
    value = float(value)
    zero = np.zeros(dim)
    return SmoothOracle(lambda x: (value, zero), dim, 0.0, 0.0, True,
                        lambda P: np.full(len(P), value), name=name)


def quadratic_oracle(Q, c, b=0.0, radius=1.0, name="quadratic"):
    """``x -> x'Qx/2 + c'x + b``; ``radius`` bounds ``||x||`` on the domain."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    c = np.atleast_1d(np.asarray(c, dtype=float))
    b = float(b)
    eig = np.linalg.eigvalsh(Q)
    L = float(np.max(np.abs(eig)))

    def f(x):
        Qx = Q @ x
        return float(0.5 * x @ Qx + c @ x) + b, Qx + c

    def batch(P):
        return 0.5 * np.einsum("ij,jk,ik->i", P, Q, P) + P @ c + b

    return SmoothOracle(f, c.size, L, L * radius + float(np.linalg.norm(c)),
                        bool(eig.min() >= -1e-12), batch, name=name)


def hinge_sum_oracle(A, b, weights, linear=None, const=0.0, name="hinge_sum"):
    """``x -> sum_k w_k [A_k x + b_k]_+ + <linear, x> + const``.

    Each hinge is smoothed with the same ``eta``; the smoothing error is at
    most ``eta * sum(w) / 2``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    w = np.broadcast_to(np.asarray(weights, dtype=float), b.shape).copy()
    if A.shape[0] != b.size:
        raise DimMismatch("hinge rows and offsets differ in length")
    if np.any(w < 0):
        raise InvalidConstant("hinge weights must be nonnegative")
    dim = A.shape[1]
    lin = np.zeros(dim) if linear is None else np.asarray(linear, dtype=float)
    const = float(const)
    row_norms = np.linalg.norm(A, axis=1)
    b_norm = math.sqrt(float(w @ row_norms ** 2))
    d_u = math.sqrt(float(w.sum()) / 2.0)
    lin_norm = float(np.linalg.norm(lin))

    def f(x, eta):
        a = A @ x + b
        val, der = smoothed_hinge_eval(eta, a)
        wd = w * der
        return float(w @ val + lin @ x) + const, A.T @ wd + lin

    def batch(P):
        return np.maximum(P @ A.T + b, 0.0) @ w + P @ lin + const

    return StructuredOracle(
        f, dim, max(b_norm, 1e-300), max(d_u, 1e-300),
        lipschitz_val=b_norm * math.sqrt(2.0) * d_u + lin_norm,
        smooth_lipschitz=0.0, batch=batch, name=name)


def groupmax_sum_oracle(groups, dim, const=0.0, name="group_max"):
    """``x -> sum_g max_{i in g} x_i + const`` with entropy smoothing per group."""
    groups = [np.asarray(g, dtype=int) for g in groups]
    const = float(const)
    sizes = np.array([g.size for g in groups], dtype=float)
    d_u = math.sqrt(float(np.sum(np.log(sizes))))
    y_u = math.sqrt(float(np.sum(1.0 / sizes)))
    if d_u <= 0.0:
        # singleton groups are plain coordinates; no smoothing error at all
        d_u = 1e-12

    def f(x, eta):
        grad = np.zeros(dim)
        total = const
        for g in groups:
            v, gg = smoothed_groupmax_eval(eta, x[g])
            total += v
            grad[g] += gg
        return total, grad

    def batch(P):
        return sum(P[:, g].max(axis=1) for g in groups) + const

    return StructuredOracle(f, dim, 1.0, d_u, y_u_norm=y_u, batch=batch, name=name)


def evaluate_stack(oracles, x, etas=None):
    """Stack values and gradients of a list of oracles at ``x``.

    ``etas[i]`` is the smoothing level for structured oracle ``i`` (ignored for
    smooth ones); ``None`` means exact evaluation.
    """
    m = len(oracles)
    vals = np.empty(m)
    jac = np.empty((m, x.size))
    for i, o in enumerate(oracles):
        if o.structured:
            v, g = o(x, 0.0 if etas is None else etas[i])
        else:
            v, g = o.func(x)
        vals[i] = v
        jac[i] = g
    return vals, jac
