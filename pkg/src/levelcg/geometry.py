"""Compact convex sets with linear minimization oracles, plus simplex prox steps.

Every set exposes ``dim``, ``lmo(cost)``, ``diameter()``, ``contains(x)`` and
``sample(rng, n)``. LMO ties are broken towards the lowest index, and a zero
cost on a box coordinate selects the lower bound, so runs are reproducible.
"""

import math

import numpy as np

from .errors import DegenerateDual, DimMismatch, NonFiniteInput, UnboundedSet

_DUAL_FLOOR = 1e-300


def _as_cost(cost, dim=None):
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 1:
        cost = cost.reshape(-1)
    if dim is not None and cost.shape[0] != dim:
        raise DimMismatch(f"cost has length {cost.shape[0]}, expected {dim}")
    # a sum is NaN/inf whenever an entry is; recheck only on that rare path
    if not math.isfinite(cost.sum()) and not np.all(np.isfinite(cost)):
        raise NonFiniteInput("cost vector contains NaN or inf")
    return cost


def lmo_scaled_simplex(cost, radius):
    """Minimize ``<cost, x>`` over ``{x >= 0, sum(x) <= radius}``."""
    cost = _as_cost(cost)
    out = np.zeros_like(cost)
    if radius <= 0 or cost.size == 0:
        return out
    i = int(np.argmin(cost))
    if cost[i] < 0.0:
        out[i] = radius
    return out


def lmo_box(cost, box):
    cost = _as_cost(cost, box.dim)
    return np.where(cost < 0.0, box.upper, box.lower)


def lmo_product(cost, pset):
    cost = _as_cost(cost, pset.dim)
    return np.concatenate(
        [f.lmo(cost[s]) for f, s in zip(pset.factors, pset.slices)]
    )


class ScaledSimplexLeq:
    """``{x in R^dim : x >= 0, sum(x) <= radius}``."""

    def __init__(self, dim, radius=1.0):
        if dim < 1:
            raise ValueError("dim must be positive")
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        self.dim = int(dim)
        self.radius = float(radius)

    def lmo(self, cost):
        return lmo_scaled_simplex(_as_cost(cost, self.dim), self.radius)

    def diameter(self):
        return self.radius * (math.sqrt(2.0) if self.dim >= 2 else 1.0)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and x.sum() <= self.radius + tol)

    def contains_rows(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        return np.all(X >= -tol, axis=1) & (X.sum(axis=1) <= self.radius + tol)

    def sample(self, rng, n):
        w = rng.dirichlet(np.ones(self.dim + 1), size=n)
        return self.radius * w[:, : self.dim]

    def __repr__(self):
        return f"ScaledSimplexLeq(dim={self.dim}, radius={self.radius})"


class StandardSimplex:
    """``{z >= 0 : sum(z) = 1}``."""

    def __init__(self, dim):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)

    def lmo(self, cost):
        cost = _as_cost(cost, self.dim)
        out = np.zeros(self.dim)
        out[int(np.argmin(cost))] = 1.0
        return out

    def diameter(self):
        return math.sqrt(2.0) if self.dim >= 2 else 0.0

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= max(tol, 1e-12))

    def contains_rows(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        return np.all(X >= -tol, axis=1) & (np.abs(X.sum(axis=1) - 1.0) <= max(tol, 1e-12))

    def sample(self, rng, n):
        return rng.dirichlet(np.ones(self.dim), size=n)

    def uniform(self):
        return np.full(self.dim, 1.0 / self.dim)

    def __repr__(self):
        return f"StandardSimplex(dim={self.dim})"


class Box:
    """Axis-aligned box ``lower <= x <= upper``."""

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape:
            raise DimMismatch("lower and upper bounds differ in shape")
        if np.any(lower > upper):
            raise ValueError("empty box: some lower bound exceeds upper bound")
        self.lower = lower
        self.upper = upper
        self.dim = lower.shape[0]

    def lmo(self, cost):
        return lmo_box(cost, self)

    def diameter(self):
        width = self.upper - self.lower
        if not np.all(np.isfinite(width)):
            raise UnboundedSet("box has an infinite side")
        return float(np.linalg.norm(width))

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def contains_rows(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=1)

    def sample(self, rng, n):
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class ProductSet:
    """Cartesian product of sets, variables laid out factor by factor."""

    def __init__(self, factors):
        if not factors:
            raise ValueError("product needs at least one factor")
        self.factors = list(factors)
        self.slices = []
        start = 0
        for f in self.factors:
            self.slices.append(slice(start, start + f.dim))
            start += f.dim
        self.dim = start

    def lmo(self, cost):
        return lmo_product(cost, self)

    def diameter(self):
        return math.sqrt(sum(f.diameter() ** 2 for f in self.factors))

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.dim:
            return False
        return all(f.contains(x[s], tol) for f, s in zip(self.factors, self.slices))

    def contains_rows(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        keep = np.ones(X.shape[0], dtype=bool)
        for f, s in zip(self.factors, self.slices):
            keep &= f.contains_rows(X[:, s], tol)
        return keep

    def sample(self, rng, n):
        return np.hstack([f.sample(rng, n) for f in self.factors])

    def __repr__(self):
        return f"ProductSet({self.factors!r})"


def diameter(xset):
    return xset.diameter()


def zero_vertex(xset):
    """The deterministic start point ``LMO(0)``."""
    return xset.lmo(np.zeros(xset.dim))


def project_simplex(v):
    """Euclidean projection onto the standard simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    # projection commutes with a common shift; shifting keeps the sums small
    v = v - v.max()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


class SimplexProx:
    """Dual prox step on the standard simplex.

    ``kind='entropy'`` uses the KL divergence (multiplicative update), and
    ``kind='euclidean'`` uses half the squared distance (projection).
    """

    KINDS = ("entropy", "euclidean")

    def __init__(self, kind="entropy", dim=2):
        if kind not in self.KINDS:
            raise ValueError(f"unknown prox kind {kind!r}")
        self.kind = kind
        self.dim = int(dim)

    @property
    def vbar(self):
        # divergence bound from the uniform start, used by the step-size rules
        if self.kind == "entropy":
            return math.log(self.dim) if self.dim > 1 else 0.0
        return self.dim / 2.0

    def step(self, r_prev, gain, tau):
        return prox_simplex(self, r_prev, gain, tau)

    def __repr__(self):
        return f"SimplexProx(kind={self.kind!r}, dim={self.dim})"


def prox_simplex(prox, r_prev, gain, tau):
    """argmin over the simplex of ``<-gain, z> + tau * V(r_prev, z)``."""
    r_prev = np.asarray(r_prev, dtype=float)
    gain = np.asarray(gain, dtype=float)
    if r_prev.shape != gain.shape:
        raise DimMismatch("r_prev and gain differ in shape")
    if not math.isfinite(gain.sum() + r_prev.sum()):
        raise NonFiniteInput("prox input contains NaN or inf")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if prox.kind == "entropy":
        if r_prev.min() <= 0.0:
            raise DegenerateDual("entropy prox needs a strictly positive previous point")
        logits = np.log(r_prev) + gain / tau
        logits -= logits.max()
        r = np.exp(logits)
        r /= r.sum()
        if r.min() < _DUAL_FLOOR:
            r = np.maximum(r, _DUAL_FLOOR)
            r /= r.sum()
        return r
    return project_simplex(r_prev + gain / tau)
