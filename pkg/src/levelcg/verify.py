"""Brute-force reference values for small instances.

Grid searches give an upper estimate of a minimum together with a
Lipschitz-based error bar; ``exact_cvar`` scans order statistics.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadAlpha, GridTooLarge

MAX_GRID_POINTS = 10 ** 7


@dataclass
class GridSpec:
    """Per-dimension ``(lo, hi, points)`` triples."""

    axes: list

    def __post_init__(self):
        axes = []
        for lo, hi, n in self.axes:
            if int(n) < 2:
                raise ValueError("need at least 2 points per dimension")
            if not hi >= lo:
                raise ValueError("grid axis has hi < lo")
            axes.append((float(lo), float(hi), int(n)))
        self.axes = axes
        if self.size > MAX_GRID_POINTS:
            raise GridTooLarge(f"{self.size} grid points exceed {MAX_GRID_POINTS}")

    @classmethod
    def uniform(cls, lo, hi, points, dim):
        return cls([(lo, hi, points)] * dim)

    @property
    def dim(self):
        return len(self.axes)

    @property
    def size(self):
        return math.prod(n for _, _, n in self.axes)

    @property
    def steps(self):
        return np.array([(hi - lo) / (n - 1) for lo, hi, n in self.axes])

    def points(self):
        lines = [np.linspace(lo, hi, n) for lo, hi, n in self.axes]
        mesh = np.meshgrid(*lines, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def refined(self):
        """Same box with the step halved."""
        return GridSpec([(lo, hi, 2 * n - 1) for lo, hi, n in self.axes])


@dataclass
class GridResult:
    value: float
    x: np.ndarray
    err_bound: float
    n_feasible: int

    @property
    def lower(self):
        return self.value - self.err_bound


def _feasible(points, xset, tol=1e-12):
    if hasattr(xset, "contains_rows"):
        return xset.contains_rows(points, tol)
    return np.array([xset.contains(p, tol) for p in points], dtype=bool)


def grid_saddle(problem, grid):
    """``min_x f(x) + max_i h_i(x)`` over the feasible grid points.

    The inner maximum over the simplex is exact (largest component). The
    grid minimum overestimates the true value by at most
    ``(M_f + max_i M_i) * ||step||``, reported as ``err_bound``.
    """
    if grid.dim != problem.dim:
        raise ValueError("grid and problem dimensions differ")
    if grid.dim > 3:
        raise ValueError("grid oracle is limited to three dimensions")
    pts = grid.points()
    pts = pts[_feasible(pts, problem.x_set)]
    if pts.shape[0] == 0:
        raise ValueError("no grid point lies in the feasible set")
    vals = problem.values(pts)
    i = int(np.argmin(vals))
    lip = max(o.lipschitz_val for o in problem.h_bar)
    if problem.f_bar is not None:
        lip += problem.f_bar.lipschitz_val
    err = lip * float(np.linalg.norm(grid.steps))
    return GridResult(float(vals[i]), pts[i], err, pts.shape[0])


def grid_minimize(oracle, xset, grid, constraints=()):
    """Minimum of ``oracle`` over grid points in ``xset`` with ``h_i <= 0``."""
    if grid.dim != xset.dim:
        raise ValueError("grid and set dimensions differ")
    if grid.dim > 3:
        raise ValueError("grid oracle is limited to three dimensions")
    pts = grid.points()
    keep = _feasible(pts, xset)
    for h in constraints:
        keep &= h.values(pts) <= 0.0
    pts = pts[keep]
    if pts.shape[0] == 0:
        raise ValueError("no feasible grid point")
    vals = oracle.values(pts)
    i = int(np.argmin(vals))
    err = float(oracle.lipschitz_val or 0.0) * float(np.linalg.norm(grid.steps))
    return GridResult(float(vals[i]), pts[i], err, pts.shape[0])


def exact_cvar(values, alpha):
    """``min_u u + (1/(alpha K)) sum_k [v_k - u]_+`` by scanning sorted samples.

    The function of ``u`` is piecewise linear and convex with kinks at the
    samples, so its minimum is attained at one of them.
    """
    if not 0.0 < alpha < 1.0:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))[::-1]
    K = v.size
    if K == 0:
        raise ValueError("need at least one sample")
    # with u = v[j] (descending order) the hinge sum is sum_{i<j} (v_i - v_j)
    csum = np.concatenate([[0.0], np.cumsum(v)[:-1]])
    idx = np.arange(K)
    obj = v + (csum - idx * v) / (alpha * K)
    return float(obj.min())
