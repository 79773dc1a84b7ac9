"""Risk-averse portfolio models that track an index.

Decision vector layout is ``[x (N weights), u (optional), v (optional)]``.
``u`` is the value-at-risk level of the CVaR objective and ``v`` the
threshold variable of the convex cardinality surrogate.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import BadAlpha, BadPsi, BadTheta, DimMismatch, EmptyData, NonFiniteInput
from ..geometry import Box, ProductSet, ScaledSimplexLeq, zero_vertex
from ..level import ConstrainedProblem
from ..nonconvex import NonconvexProblem
from ..oracle import (SIGMOID_CURVATURE, SmoothOracle, constant_oracle,
                      hinge_sum_oracle, sigmoid_indicator_eval)

KINDS = ("card-free-convex", "card-free-nonconvex", "card-convex",
         "card-nonconvex-1", "card-nonconvex-2")
COUNT_TOL = 1e-6
DEFAULT_THETA = 1e-2
DEFAULT_ALPHA = 0.1
DEFAULT_V_BOUNDS = (-1.0, 1.0)


@dataclass
class ReturnsData:
    asset_returns: np.ndarray  # K x N
    index_returns: np.ndarray  # K
    asset_names: list = field(default_factory=list)

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.asset_returns, dtype=float))
        R = np.asarray(self.index_returns, dtype=float).reshape(-1)
        if r.size == 0 or R.size == 0:
            raise EmptyData("returns data has no rows or no assets")
        if r.shape[0] != R.size:
            raise DimMismatch(f"{r.shape[0]} asset rows but {R.size} index returns")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(R))):
            raise NonFiniteInput("returns contain NaN or inf")
        self.asset_returns = r
        self.index_returns = R
        if not self.asset_names:
            self.asset_names = [f"a{i}" for i in range(r.shape[1])]
        if len(self.asset_names) != r.shape[1]:
            raise DimMismatch("asset name count differs from column count")

    @property
    def n_weeks(self):
        return self.asset_returns.shape[0]

    @property
    def n_assets(self):
        return self.asset_returns.shape[1]


def gen_synthetic_returns(n_assets=50, n_weeks=500, seed=0, n_factors=3):
    """Weekly returns from a factor model; the index is a noisy random mix of the assets."""
    rng = np.random.default_rng(seed)
    factors = rng.normal(0.0015, 0.02, size=(n_weeks, n_factors))
    factors[:, 1:] *= 0.5
    loadings = rng.normal(1.0, 0.3, size=(n_factors, n_assets))
    loadings[1:] = rng.normal(0.0, 0.5, size=(n_factors - 1, n_assets))
    drift = rng.normal(0.0005, 0.001, size=n_assets)
    idio = rng.uniform(0.01, 0.04, size=n_assets)
    r = factors @ loadings + drift + rng.normal(size=(n_weeks, n_assets)) * idio
    w = rng.dirichlet(np.full(n_assets, 0.5))
    R = r @ w + rng.normal(0.0, 0.002, size=n_weeks)
    return ReturnsData(r, R, [f"S{i:03d}" for i in range(n_assets)])


def psi_rule(n_assets):
    """Cardinality budget: a fifth of the assets up to 100, a twentieth above."""
    if n_assets < 1:
        raise ValueError("need at least one asset")
    return n_assets // 5 if n_assets <= 100 else n_assets // 20


def default_u_bounds(data):
    r, R = data.asset_returns, data.index_returns
    return float(np.min(R - r.max(axis=1))), float(np.max(R))


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")


def _check_theta(theta):
    if not (theta > 0 and math.isfinite(theta)):
        raise BadTheta(f"theta must be positive, got {theta}")


def _check_psi(psi, n):
    if not psi >= 1:
        raise BadPsi(f"psi must be at least 1, got {psi}")


@dataclass
class PortfolioModel:
    kind: str
    problem: object
    n_assets: int
    u_index: int = None
    v_index: int = None
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.problem.dim

    def weights(self, z):
        return np.asarray(z, dtype=float)[: self.n_assets]

    def start(self):
        """No holdings, ``u`` and ``v`` at their lower bounds (feasible)."""
        return zero_vertex(self.problem.x_set)


def _cvar_objective(data, alpha, dim, u_index):
    # u + (1/(alpha K)) sum_k [R_k - r_k x - u]_+
    K, N = data.asset_returns.shape
    A = np.zeros((K, dim))
    A[:, :N] = -data.asset_returns
    A[:, u_index] = -1.0
    lin = np.zeros(dim)
    lin[u_index] = 1.0
    return hinge_sum_oracle(A, data.index_returns, 1.0 / (alpha * K), lin,
                            name="cvar_risk")


def card_row(n_assets, psi, dim, v_index):
    """``N v + (1/psi) sum_i [x_i - v]_+`` as a hinge-sum oracle."""
    A = np.zeros((n_assets, dim))
    A[np.arange(n_assets), np.arange(n_assets)] = 1.0
    A[:, v_index] = -1.0
    lin = np.zeros(dim)
    lin[v_index] = float(n_assets)
    return hinge_sum_oracle(A, np.zeros(n_assets), 1.0 / psi, lin, name="cardinality")


def sigmoid_risk_oracle(data, theta, dim=None, extra=None):
    """Mean over weeks of ``sigmoid((R_k - r_k x) / theta)``.

    ``extra`` optionally adds a smooth term on the weights (value, grad, L, M).
    """
    r, R = data.asset_returns, data.index_returns
    K, N = r.shape
    dim = N if dim is None else dim
    lam = float(np.linalg.eigvalsh(r.T @ r / K).max())
    L = SIGMOID_CURVATURE * lam / theta ** 2
    M = float(np.linalg.norm(r, axis=1).mean()) / (4.0 * theta)
    if extra is not None:
        L += extra[2]
        M += extra[3]

    def f(z):
        x = z[:N]
        s, ds = sigmoid_indicator_eval(theta, R - r @ x)
        g = np.zeros(dim)
        g[:N] = -(ds @ r) / K
        v = float(s.mean())
        if extra is not None:
            ev, eg = extra[0](x), extra[1](x)
            v += ev
            g[:N] += eg
        return v, g

    return SmoothOracle(f, dim, L, M, convex=False, name="sigmoid_risk")


def build_card_free_convex(data, alpha=DEFAULT_ALPHA, u_bounds=None):
    _check_alpha(alpha)
    N = data.n_assets
    lo, hi = default_u_bounds(data) if u_bounds is None else u_bounds
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("u bounds must be finite")
    xs = ProductSet([ScaledSimplexLeq(N, 1.0), Box([lo], [hi])])
    f = _cvar_objective(data, alpha, N + 1, N)
    problem = ConstrainedProblem(f, [constant_oracle(-1.0, N + 1)], xs,
                                 name="card-free-convex")
    return PortfolioModel("card-free-convex", problem, N, u_index=N,
                          params={"alpha": alpha, "u_bounds": [lo, hi]})


def build_card_free_nonconvex(data, theta=DEFAULT_THETA):
    _check_theta(theta)
    N = data.n_assets
    f = sigmoid_risk_oracle(data, theta)
    problem = NonconvexProblem(f, [], ScaledSimplexLeq(N, 1.0),
                               lower_curvature=f.lipschitz_grad,
                               name="card-free-nonconvex")
    return PortfolioModel("card-free-nonconvex", problem, N, params={"theta": theta})


def build_card_convex(data, alpha=DEFAULT_ALPHA, psi=None, u_bounds=None,
                      v_bounds=DEFAULT_V_BOUNDS):
    _check_alpha(alpha)
    N = data.n_assets
    psi = psi_rule(N) if psi is None else psi
    _check_psi(psi, N)
    lo, hi = default_u_bounds(data) if u_bounds is None else u_bounds
    xs = ProductSet([ScaledSimplexLeq(N, 1.0), Box([lo], [hi]),
                     Box([v_bounds[0]], [v_bounds[1]])])
    f = _cvar_objective(data, alpha, N + 2, N)
    h = card_row(N, psi, N + 2, N + 1)
    problem = ConstrainedProblem(f, [h], xs, name="card-convex")
    return PortfolioModel("card-convex", problem, N, u_index=N, v_index=N + 1,
                          params={"alpha": alpha, "psi": psi, "u_bounds": [lo, hi],
                                  "v_bounds": list(v_bounds)})


def build_card_nonconvex_1(data, theta=DEFAULT_THETA, psi=None,
                           v_bounds=DEFAULT_V_BOUNDS):
    _check_theta(theta)
    N = data.n_assets
    psi = psi_rule(N) if psi is None else psi
    _check_psi(psi, N)
    xs = ProductSet([ScaledSimplexLeq(N, 1.0), Box([v_bounds[0]], [v_bounds[1]])])
    f = sigmoid_risk_oracle(data, theta, dim=N + 1)
    h = card_row(N, psi, N + 1, N)
    problem = NonconvexProblem(f, [h], xs, lower_curvature=f.lipschitz_grad,
                               name="card-nonconvex-1")
    return PortfolioModel("card-nonconvex-1", problem, N, v_index=N,
                          params={"theta": theta, "psi": psi, "v_bounds": list(v_bounds)})


def build_card_nonconvex_2(data, theta=DEFAULT_THETA, psi=None):
    """Sigmoid risk plus ``(1/psi) sum_i sigmoid(x_i / theta)``, a smooth count of holdings."""
    _check_theta(theta)
    N = data.n_assets
    psi = psi_rule(N) if psi is None else psi
    _check_psi(psi, N)

    def pen(x):
        return float(sigmoid_indicator_eval(theta, x)[0].sum()) / psi

    def pen_grad(x):
        return sigmoid_indicator_eval(theta, x)[1] / psi

    extra = (pen, pen_grad, SIGMOID_CURVATURE / (psi * theta ** 2),
             math.sqrt(N) / (4.0 * psi * theta))
    f = sigmoid_risk_oracle(data, theta, extra=extra)
    problem = NonconvexProblem(f, [], ScaledSimplexLeq(N, 1.0),
                               lower_curvature=f.lipschitz_grad,
                               name="card-nonconvex-2")
    return PortfolioModel("card-nonconvex-2", problem, N,
                          params={"theta": theta, "psi": psi})


BUILDERS = {
    "card-free-convex": build_card_free_convex,
    "card-free-nonconvex": build_card_free_nonconvex,
    "card-convex": build_card_convex,
    "card-nonconvex-1": build_card_nonconvex_1,
    "card-nonconvex-2": build_card_nonconvex_2,
}


def risk(x, data):
    """Fraction of weeks where the portfolio trails the index (strictly)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != data.n_assets:
        raise DimMismatch(f"weights have length {x.size}, data has {data.n_assets} assets")
    margins = data.index_returns - data.asset_returns @ x
    return float(np.mean(margins > 0.0))


def count_assets(x, tol=COUNT_TOL):
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return int(np.count_nonzero(np.asarray(x, dtype=float) > tol))


def card_violation(x, psi, tol=COUNT_TOL):
    return max(count_assets(x, tol) - int(psi), 0)
