"""Fluence map models for radiation therapy planning with angle sparsity.

Doses are linear in aperture intensities: ``z = P y`` where column ``j`` of
``P`` is the dose delivered by aperture ``j`` at unit intensity. Intensities
live on ``{y >= 0, sum(y) <= 1}`` and the group row
``sum_angles max_{apertures} y - phi <= 0`` pushes the plan onto few angles.

All doses and thresholds are stored in Gy and divided by ``dose_scale``
(the largest criterion bound) inside the models, so model values are O(1).
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import BadPhi, BadTheta, DimMismatch
from ..geometry import Box, ProductSet, ScaledSimplexLeq, zero_vertex
from ..level import ConstrainedProblem
from ..nonconvex import NonconvexProblem
from ..oracle import (SIGMOID_CURVATURE, SmoothOracle, groupmax_sum_oracle,
                      hinge_sum_oracle, sigmoid_indicator_eval)

DEFAULT_THETA = 0.05
COUNT_TOL = 1e-6
MANIFEST = "manifest.json"


@dataclass
class Criterion:
    structure: str
    kind: str  # "under" or "over"
    bound: float  # Gy
    quantile: float
    weight: float = 1.0

    def label(self):
        pct = round(100 * (1 - self.quantile) if self.kind == "under"
                    else 100 * self.quantile)
        op = ">=" if self.kind == "under" else "<="
        return f"{self.structure}: V{self.bound:g} {op} {pct}%"


@dataclass
class ImrtInstance:
    dose_matrices: list  # per angle, voxels x beamlets, Gy per unit intensity
    apertures: list  # per angle, list of boolean beamlet masks
    structures: dict  # name -> voxel indices
    criteria: list
    under_target: np.ndarray  # per-voxel lower dose target (Gy)
    over_target: np.ndarray  # per-voxel upper dose target (Gy)
    under_weight: np.ndarray = None
    over_weight: np.ndarray = None
    phi: float = 0.005
    tau_bounds: tuple = (0.0, 150.0)
    seed: int = None

    def __post_init__(self):
        n_vox = self.n_voxels
        for D in self.dose_matrices:
            if D.shape[0] != n_vox:
                raise DimMismatch("dose matrices disagree on the voxel count")
            if np.any(D < 0):
                raise ValueError("dose matrices must be nonnegative")
        for name, idx in self.structures.items():
            idx = np.asarray(idx, dtype=int)
            if idx.size == 0 or idx.min() < 0 or idx.max() >= n_vox:
                raise ValueError(f"structure {name!r} has voxel indices out of range")
            self.structures[name] = idx
        for c in self.criteria:
            if not 0.0 < c.quantile < 1.0:
                raise ValueError("criterion quantile must lie in (0, 1)")
            if c.kind not in ("under", "over"):
                raise ValueError(f"unknown criterion kind {c.kind!r}")
            if c.structure not in self.structures:
                raise ValueError(f"criterion refers to unknown structure {c.structure!r}")
        for a, masks in enumerate(self.apertures):
            if len(masks) == 0:
                raise ValueError(f"angle {a} has no apertures")
        if self.under_weight is None:
            self.under_weight = np.ones(n_vox)
        if self.over_weight is None:
            self.over_weight = np.ones(n_vox)

    @property
    def n_voxels(self):
        return self.dose_matrices[0].shape[0]

    @property
    def n_angles(self):
        return len(self.dose_matrices)

    @property
    def dose_scale(self):
        return max(c.bound for c in self.criteria)

    def aperture_groups(self):
        groups, start = [], 0
        for masks in self.apertures:
            groups.append(np.arange(start, start + len(masks)))
            start += len(masks)
        return groups

    @property
    def n_apertures(self):
        return sum(len(m) for m in self.apertures)

    def aperture_dose(self):
        """Voxels x apertures matrix in Gy per unit intensity."""
        cols = []
        for D, masks in zip(self.dose_matrices, self.apertures):
            for mask in masks:
                cols.append(D[:, np.asarray(mask, dtype=bool)].sum(axis=1))
        return np.column_stack(cols)

    def save(self, path):
        """Write CSV matrices plus a JSON manifest into directory ``path``."""
        os.makedirs(path, exist_ok=True)
        files = []
        for a, D in enumerate(self.dose_matrices):
            name = f"dose_{a:03d}.csv"
            np.savetxt(os.path.join(path, name), D, delimiter=",", fmt="%.17g")
            files.append(name)
        with open(os.path.join(path, "apertures.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["angle", "aperture", "mask"])
            for a, masks in enumerate(self.apertures):
                for e, mask in enumerate(masks):
                    bits = "".join("1" if b else "0" for b in mask)
                    w.writerow([a, e, bits])
        np.savetxt(os.path.join(path, "targets.csv"),
                   np.column_stack([self.under_target, self.over_target,
                                    self.under_weight, self.over_weight]),
                   delimiter=",", fmt="%.17g",
                   header="under_target,over_target,under_weight,over_weight",
                   comments="")
        manifest = {
            "dose_files": files,
            "structures": {k: v.tolist() for k, v in self.structures.items()},
            "criteria": [c.__dict__ for c in self.criteria],
            "phi": self.phi,
            "tau_bounds": list(self.tau_bounds),
            "seed": self.seed,
        }
        with open(os.path.join(path, MANIFEST), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(os.path.join(path, MANIFEST)) as fh:
            man = json.load(fh)
        dose = [np.atleast_2d(np.loadtxt(os.path.join(path, f), delimiter=","))
                for f in man["dose_files"]]
        apertures = [[] for _ in dose]
        with open(os.path.join(path, "apertures.csv"), newline="") as fh:
            for row in csv.DictReader(fh):
                apertures[int(row["angle"])].append(
                    np.array([c == "1" for c in row["mask"]]))
        targets = np.loadtxt(os.path.join(path, "targets.csv"), delimiter=",",
                             skiprows=1, ndmin=2)
        return cls(dose, apertures, man["structures"],
                   [Criterion(**c) for c in man["criteria"]],
                   targets[:, 0], targets[:, 1], targets[:, 2], targets[:, 3],
                   phi=man["phi"], tau_bounds=tuple(man["tau_bounds"]),
                   seed=man["seed"])


def gen_synthetic_imrt(n_angles=8, n_voxels=512, n_beamlets=16, n_structures=2,
                       apertures_per_angle=4, seed=0):
    """Random phantom: voxels on a cube, tumors as random balls, coplanar beams.

    Each beamlet deposits a Gaussian profile around its ray with depth
    attenuation. Apertures are random rectangles on the beamlet grid. Doses
    are scaled so that spreading unit intensity evenly over all apertures
    gives tumors a mean of 60 Gy.
    """
    rng = np.random.default_rng(seed)
    side = max(1, round(n_voxels ** (1.0 / 3.0)))
    while side ** 3 < n_voxels:
        side += 1
    grid = np.stack(np.meshgrid(*[np.linspace(0, 1, side)] * 3, indexing="ij"),
                    axis=-1).reshape(-1, 3)[:n_voxels]
    center = np.full(3, 0.5)

    rows = max(1, int(math.floor(math.sqrt(n_beamlets))))
    cols = int(math.ceil(n_beamlets / rows))
    sigma = 0.6 / max(rows, cols)
    doses, apertures = [], []
    for a in range(n_angles):
        ang = 2.0 * math.pi * a / n_angles
        beam = np.array([math.cos(ang), math.sin(ang), 0.0])
        lateral = np.array([-math.sin(ang), math.cos(ang), 0.0])
        rel = grid - center
        s = rel @ lateral
        h = rel[:, 2]
        depth = rel @ beam + 0.5 * math.sqrt(3.0)
        D = np.empty((n_voxels, n_beamlets))
        for j in range(n_beamlets):
            r, c = divmod(j, cols)
            s0 = (c + 0.5) / cols - 0.5
            h0 = (r + 0.5) / rows - 0.5
            prof = np.exp(-((s - s0) ** 2 + (h - h0) ** 2) / (2 * sigma ** 2))
            D[:, j] = prof * np.exp(-0.8 * depth)
        D *= rng.uniform(0.9, 1.1, size=D.shape)
        doses.append(D)
        masks = []
        for _ in range(apertures_per_angle):
            r0, r1 = sorted(rng.integers(0, rows, size=2))
            c0, c1 = sorted(rng.integers(0, cols, size=2))
            mask = np.zeros(n_beamlets, dtype=bool)
            for j in range(n_beamlets):
                r, c = divmod(j, cols)
                if r0 <= r <= r1 and c0 <= c <= c1:
                    mask[j] = True
            masks.append(mask)
        apertures.append(masks)

    structures = {}
    taken = np.zeros(n_voxels, dtype=bool)
    for k in range(n_structures):
        c = center + rng.uniform(-0.2, 0.2, size=3)
        dist = np.linalg.norm(grid - c, axis=1)
        idx = np.argsort(dist)
        idx = idx[~taken[idx]][: max(1, n_voxels // 16)]
        taken[idx] = True
        structures[f"PTV{k + 1}"] = np.sort(idx)
    healthy = np.nonzero(~taken)[0]
    if healthy.size:
        structures["Body"] = healthy

    names = [f"PTV{k + 1}" for k in range(n_structures)]
    criteria = [
        Criterion(names[0], "under", 40.0, 0.01),
        Criterion(names[min(1, n_structures - 1)], "under", 50.0, 0.01),
        Criterion(names[0], "over", 100.0, 0.05),
    ]

    under_t = np.zeros(n_voxels)
    over_t = np.full(n_voxels, 30.0)
    for c in criteria:
        idx = structures[c.structure]
        if c.kind == "under":
            under_t[idx] = np.maximum(under_t[idx], c.bound)
    for name in names:
        over_t[structures[name]] = 100.0

    inst = ImrtInstance(doses, apertures, structures, criteria, under_t, over_t,
                        seed=seed)
    P = inst.aperture_dose()
    tumor = np.concatenate([structures[n] for n in names])
    uniform = P.mean(axis=1)
    scale = 60.0 / float(uniform[tumor].mean())
    inst.dose_matrices = [D * scale for D in doses]
    return inst


def _check_phi(phi):
    if not (phi > 0 and math.isfinite(phi)):
        raise BadPhi(f"phi must be positive, got {phi}")


@dataclass
class ImrtModel:
    kind: str
    problem: object
    instance: ImrtInstance
    n_apertures: int
    phi: float
    group_row: int
    criterion_rows: list = field(default_factory=list)
    theta: float = None

    def intensities(self, z):
        return np.asarray(z, dtype=float)[: self.n_apertures]

    def start(self):
        return zero_vertex(self.problem.x_set)


def dose_objective(P, under_t, over_t, under_w, over_w, dim):
    """``(1/Nv) sum_v wl [Tl - z]_+^2 + wu [z - Tu]_+^2`` with ``z = P y``."""
    n_vox, n_ap = P.shape
    lam = float(np.linalg.eigvalsh(P.T @ P).max())
    wmax = float(max(under_w.max(), over_w.max()))
    zmax = P.max(axis=1)
    worst = np.maximum(under_w * under_t, over_w * np.maximum(zmax - over_t, 0.0))
    L = 2.0 * wmax * lam / n_vox
    M = 2.0 * math.sqrt(lam) * float(np.linalg.norm(worst)) / n_vox

    def f(x):
        z = P @ x[:n_ap]
        lo = np.maximum(under_t - z, 0.0)
        hi = np.maximum(z - over_t, 0.0)
        val = float(under_w @ lo ** 2 + over_w @ hi ** 2) / n_vox
        g = np.zeros(dim)
        g[:n_ap] = P.T @ (2.0 * (over_w * hi - under_w * lo)) / n_vox
        return val, g

    def batch(Y):
        Z = Y[:, :n_ap] @ P.T
        return ((np.maximum(under_t - Z, 0.0) ** 2 @ under_w
                 + np.maximum(Z - over_t, 0.0) ** 2 @ over_w) / n_vox)

    return SmoothOracle(f, dim, L, M, True, batch, name="dose_penalty")


def cvar_row(P_k, criterion, bound, dim, tau_index):
    """CVaR form of a dose-volume criterion as a hinge-sum row.

    underdose: ``-tau + (1/(p N)) sum [tau - z_v]_+ + b <= 0``
    overdose:  `` tau + (1/(p N)) sum [z_v - tau]_+ - b <= 0``
    """
    n_k, n_ap = P_k.shape
    sign = 1.0 if criterion.kind == "over" else -1.0
    A = np.zeros((n_k, dim))
    A[:, :n_ap] = sign * P_k
    A[:, tau_index] = -sign
    lin = np.zeros(dim)
    lin[tau_index] = sign
    return hinge_sum_oracle(A, np.zeros(n_k), 1.0 / (criterion.quantile * n_k), lin,
                            const=-sign * bound,
                            name=f"cvar[{criterion.label()}]")


def build_imrt_convex(instance, phi=None):
    phi = instance.phi if phi is None else phi
    _check_phi(phi)
    s = instance.dose_scale
    P = instance.aperture_dose() / s
    n_ap = P.shape[1]
    n_c = len(instance.criteria)
    dim = n_ap + n_c
    lo, hi = instance.tau_bounds
    xs = ProductSet([ScaledSimplexLeq(n_ap, 1.0),
                     Box(np.full(n_c, lo / s), np.full(n_c, hi / s))])
    f = dose_objective(P, instance.under_target / s, instance.over_target / s,
                       instance.under_weight, instance.over_weight, dim)
    rows = [cvar_row(P[instance.structures[c.structure]], c, c.bound / s, dim,
                     n_ap + k)
            for k, c in enumerate(instance.criteria)]
    rows.append(groupmax_sum_oracle(instance.aperture_groups(), dim, const=-phi,
                                    name="group_sparsity"))
    problem = ConstrainedProblem(f, rows, xs, name=f"imrt-convex(phi={phi:g})")
    return ImrtModel("imrt-convex", problem, instance, n_ap, phi,
                     group_row=n_c, criterion_rows=list(range(n_c)))


def criteria_objective(P, instance, theta, weights, dim):
    """Weighted fraction of voxels missing each criterion, with sigmoid steps."""
    s = instance.dose_scale
    n_ap = P.shape[1]
    parts = []
    L = 0.0
    M = 0.0
    for c, w in zip(instance.criteria, weights):
        Pk = P[instance.structures[c.structure]]
        sign = 1.0 if c.kind == "over" else -1.0
        parts.append((Pk, sign, c.bound / s, w / Pk.shape[0]))
        L += w / Pk.shape[0] * float(np.linalg.eigvalsh(Pk.T @ Pk).max())
        M += w / Pk.shape[0] * float(np.linalg.norm(Pk, axis=1).sum())
    L *= SIGMOID_CURVATURE / theta ** 2
    M /= 4.0 * theta

    def f(x):
        y = x[:n_ap]
        val = 0.0
        g = np.zeros(dim)
        for Pk, sign, tau, scale in parts:
            sv, ds = sigmoid_indicator_eval(theta, sign * (Pk @ y - tau))
            val += scale * float(sv.sum())
            g[:n_ap] += scale * sign * (Pk.T @ ds)
        return val, g

    return SmoothOracle(f, dim, L, M, convex=False, name="criteria_sigmoid")


def build_imrt_nonconvex(instance, phi=None, theta=DEFAULT_THETA, weights=None):
    phi = instance.phi if phi is None else phi
    _check_phi(phi)
    if not (theta > 0 and math.isfinite(theta)):
        raise BadTheta(f"theta must be positive, got {theta}")
    weights = ([c.weight for c in instance.criteria] if weights is None
               else list(weights))
    if len(weights) != len(instance.criteria):
        raise DimMismatch("one weight per criterion is required")
    P = instance.aperture_dose() / instance.dose_scale
    n_ap = P.shape[1]
    f = criteria_objective(P, instance, theta, weights, n_ap)
    h = groupmax_sum_oracle(instance.aperture_groups(), n_ap, const=-phi,
                            name="group_sparsity")
    problem = NonconvexProblem(f, [h], ScaledSimplexLeq(n_ap, 1.0),
                               lower_curvature=f.lipschitz_grad,
                               name=f"imrt-nonconvex(phi={phi:g})")
    return ImrtModel("imrt-nonconvex", problem, instance, n_ap, phi, group_row=0,
                     theta=theta)


def doses(instance, y):
    """Voxel doses in Gy for aperture intensities ``y``."""
    return instance.aperture_dose() @ np.asarray(y, dtype=float)[: instance.n_apertures]


def criteria_table(instance, y):
    """One row per criterion: achieved dose-volume fraction and pass/fail."""
    z = doses(instance, y)
    out = []
    for c in instance.criteria:
        zk = z[instance.structures[c.structure]]
        if c.kind == "under":
            frac = float(np.mean(zk >= c.bound))
            ok = frac >= 1.0 - c.quantile
        else:
            frac = float(np.mean(zk > c.bound))
            ok = frac <= c.quantile
        out.append({"criterion": c.label(), "structure": c.structure,
                    "kind": c.kind, "bound_gy": c.bound, "fraction": frac,
                    "satisfied": bool(ok)})
    return out


def plan_summary(instance, y, tol=COUNT_TOL):
    y = np.asarray(y, dtype=float)[: instance.n_apertures]
    groups = instance.aperture_groups()
    active = [g for g in groups if np.any(y[g] > tol)]
    return {"angles": len(active), "apertures": int(np.count_nonzero(y > tol))}


def constraint_split(model, z):
    """``(||h_s||_2, ||h_c||_2)``: group-sparsity and clinical parts of ``[h]_+``."""
    vals = np.maximum(model.problem.constraints(z), 0.0)
    hs = float(vals[model.group_row])
    hc = float(np.linalg.norm(vals[model.criterion_rows])) if model.criterion_rows else 0.0
    return hs, hc
