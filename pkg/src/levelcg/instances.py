"""Small benchmark problems with known answers, shared by tests and the CLI."""

import numpy as np

from .cgo import SaddleProblem
from .geometry import Box
from .level import ConstrainedProblem
from .nonconvex import NonconvexProblem
from .oracle import hinge_sum_oracle, linear_oracle, quadratic_oracle

UNIT = Box([0.0], [1.0])


def toy_problem():
    """min x s.t. 0.3 - x <= 0 on [0, 1]; optimum 0.3."""
    return ConstrainedProblem(linear_oracle([1.0]), [linear_oracle([-1.0], 0.3)],
                              UNIT, name="toy")


TOY_OPTIMUM = 0.3


def toy_saddle():
    """max(x, 0.3 - x) on [0, 1]; value 0.15 at x = 0.15."""
    return SaddleProblem([linear_oracle([1.0]), linear_oracle([-1.0], 0.3)], UNIT)


def smooth_saddle():
    """max((x - 0.8)^2, x - 0.5) on [0, 1]."""
    return SaddleProblem([quadratic_oracle([[2.0]], [-1.6], 0.64),
                          linear_oracle([1.0], -0.5)], UNIT)


def hinge_saddle():
    """max(0.8 - x, [x - 0.5]_+) on [0, 1]; value 0.15 at x = 0.65."""
    return SaddleProblem([linear_oracle([-1.0], 0.8),
                          hinge_sum_oracle([[1.0]], [-0.5], 1.0)], UNIT)


def dncg_problem():
    """min (x - 0.8)^2 s.t. x - 0.5 <= 0 on [0, 1]; optimum at 0.5."""
    f = quadratic_oracle([[2.0]], [-1.6], 0.64)
    return NonconvexProblem(f, [linear_oracle([1.0], -0.5)], UNIT,
                            lower_curvature=0.0, name="dncg-1d")


def ipp_convex_problem():
    """Same as ``dncg_problem`` with a positive proximal weight."""
    f = quadratic_oracle([[2.0]], [-1.6], 0.64)
    return NonconvexProblem(f, [linear_oracle([1.0], -0.5)], UNIT,
                            lower_curvature=1.0, name="ipp-convex")


def ipp_nonconvex_problem():
    """min -(x - 0.2)^2 s.t. x - 0.6 <= 0 on [0, 1].

    Stationary points are 0 (local) and 0.6 (global).
    """
    f = quadratic_oracle([[-2.0]], [0.4], -0.04)
    return NonconvexProblem(f, [linear_oracle([1.0], -0.6)], UNIT,
                            lower_curvature=2.0, name="ipp-nonconvex")


def random_saddle(rng, dim=None, rows=None):
    """Random convex quadratic or linear rows on a box of dimension <= 3."""
    dim = int(rng.integers(1, 4)) if dim is None else dim
    rows = int(rng.integers(1, 4)) if rows is None else rows
    lo = rng.uniform(-1.0, 0.0, size=dim)
    hi = lo + rng.uniform(0.5, 1.5, size=dim)
    box = Box(lo, hi)
    radius = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    out = []
    for _ in range(rows):
        if rng.random() < 0.5:
            out.append(linear_oracle(rng.normal(size=dim), rng.normal()))
        else:
            B = rng.normal(size=(dim, dim))
            Q = B @ B.T / dim
            out.append(quadratic_oracle(Q, rng.normal(size=dim), rng.normal(),
                                        radius=radius))
    return SaddleProblem(out, box)
