"""Experiment runner: data loading, run configs, JSON reports and sweeps.

A run builds a model, applies one algorithm under an iteration budget and
writes a report whose content depends only on the config. Wall time goes to a
separate ``*.timing.json`` file so that reports stay byte-identical across
reruns.
"""

import csv
import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (BudgetExhausted, ConfigError, EmptyData, LevelCGError,
                     ParseError)
from .level import LEVEL_TRACE_FIELDS, lcg_solve, mlcg_solve
from .cgo import TRACE_FIELDS
from .models import imrt as imrt_models
from .models import portfolio as pf
from .nonconvex import DNCG_TRACE_FIELDS, NonconvexProblem, dncg, ipp_lcg

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

ALGORITHMS = ("lcg", "mlcg", "ipp-lcg", "dncg", "lcg-then-dncg")
CONVEX_MODELS = ("card-free-convex", "card-convex", "imrt-convex")
NONCONVEX_MODELS = ("card-free-nonconvex", "card-nonconvex-1", "card-nonconvex-2",
                    "imrt-nonconvex")
MODELS = CONVEX_MODELS + NONCONVEX_MODELS
# convex model used for the warm start of lcg-then-dncg
WARM_START_MODEL = {
    "imrt-nonconvex": "imrt-convex",
    "card-nonconvex-1": "card-convex",
    "card-nonconvex-2": "card-free-convex",
    "card-free-nonconvex": "card-free-convex",
}
REPORT_VERSION = 1


@dataclass
class RunConfig:
    model: str = "card-free-convex"
    algorithm: str = "lcg"
    eps: float = 1e-3
    mu: float = 0.9
    delta_f: float = None
    delta_h: float = None
    max_outer: int = 200
    max_inner: int = 100_000
    total_inner: int = 100
    K: int = 100
    alpha: float = pf.DEFAULT_ALPHA
    theta: float = None
    psi: object = "auto"
    phi: float = 0.005
    c: float = None
    tau_scale: float = 1.0
    data: dict = field(default_factory=lambda: {"synthetic": {}})
    seed: int = 0
    out: str = None
    trace: bool = False
    force: bool = False
    name: str = None

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        convex = self.model in CONVEX_MODELS
        if convex and self.algorithm in ("dncg", "ipp-lcg", "lcg-then-dncg") and not self.force:
            raise ConfigError(f"{self.algorithm} targets nonconvex models; set force to run it on {self.model}")
        if not convex and self.algorithm in ("lcg", "mlcg"):
            raise ConfigError(f"{self.algorithm} needs a convex model, {self.model} is not")
        if self.algorithm == "lcg-then-dncg" and self.model not in WARM_START_MODEL:
            raise ConfigError(f"no convex warm start defined for {self.model}")
        if not (self.eps > 0 and 0 < self.mu < 1):
            raise ConfigError("need eps > 0 and mu in (0, 1)")
        if self.psi != "auto" and not (isinstance(self.psi, (int, float)) and self.psi >= 1):
            raise ConfigError("psi must be 'auto' or a number >= 1")
        if not isinstance(self.data, dict) or len(self.data) != 1:
            raise ConfigError("data must hold exactly one of 'csv', 'synthetic', 'dir'")
        src = next(iter(self.data))
        if src not in ("csv", "synthetic", "dir"):
            raise ConfigError(f"unknown data source {src!r}")
        for k in ("total_inner", "max_inner", "max_outer", "K"):
            v = getattr(self, k)
            if v is not None and int(v) < 1:
                raise ConfigError(f"{k} must be positive")

    @property
    def is_imrt(self):
        return self.model.startswith("imrt")


def load_returns_csv(path):
    """Read weekly returns: header ``index_return,<asset>,...``, one row per week."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise EmptyData(f"{path} is empty")
    header = [c.strip() for c in rows[0]]
    if not header or header[0] != "index_return":
        raise ParseError(1, 1, "missing header; first column must be 'index_return'")
    if len(header) < 2:
        raise ParseError(1, 2, "no asset columns")
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(i, min(len(row), len(header)) + 1,
                             f"expected {len(header)} cells, found {len(row)}")
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(i, j, f"not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(i, j, f"non-finite value {cell!r}")
            vals.append(v)
        data.append(vals)
    if not data:
        raise EmptyData(f"{path} has a header but no data rows")
    arr = np.array(data)
    return pf.ReturnsData(arr[:, 1:], arr[:, 0], header[1:])


def save_returns_csv(data, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index_return"] + list(data.asset_names))
        for R, r in zip(data.index_returns, data.asset_returns):
            w.writerow([repr(float(R))] + [repr(float(v)) for v in r])


def _load_data(cfg):
    src, spec = next(iter(cfg.data.items()))
    if cfg.is_imrt:
        if src == "dir":
            return imrt_models.ImrtInstance.load(spec)
        if src != "synthetic":
            raise ConfigError("IMRT models take 'synthetic' or 'dir' data")
        opts = dict(spec or {})
        opts.setdefault("seed", cfg.seed)
        return imrt_models.gen_synthetic_imrt(**opts)
    if src == "csv":
        return load_returns_csv(spec)
    if src != "synthetic":
        raise ConfigError("portfolio models take 'csv' or 'synthetic' data")
    opts = dict(spec or {})
    opts.setdefault("seed", cfg.seed)
    return pf.gen_synthetic_returns(**opts)


def _build(kind, cfg, data):
    if kind.startswith("imrt"):
        if kind == "imrt-convex":
            return imrt_models.build_imrt_convex(data, cfg.phi)
        theta = imrt_models.DEFAULT_THETA if cfg.theta is None else cfg.theta
        return imrt_models.build_imrt_nonconvex(data, cfg.phi, theta)
    psi = None if cfg.psi == "auto" else cfg.psi
    theta = pf.DEFAULT_THETA if cfg.theta is None else cfg.theta
    if kind == "card-free-convex":
        return pf.build_card_free_convex(data, cfg.alpha)
    if kind == "card-convex":
        return pf.build_card_convex(data, cfg.alpha, psi)
    if kind == "card-free-nonconvex":
        return pf.build_card_free_nonconvex(data, theta)
    if kind == "card-nonconvex-1":
        return pf.build_card_nonconvex_1(data, theta, psi)
    return pf.build_card_nonconvex_2(data, theta, psi)


def _transfer(src_model, z, dst_model):
    """Map a convex-model point onto the nonconvex model's variable layout."""
    start = dst_model.start()
    if isinstance(dst_model, imrt_models.ImrtModel):
        start[: dst_model.n_apertures] = z[: src_model.n_apertures]
        return start
    start[: dst_model.n_assets] = z[: src_model.n_assets]
    if dst_model.v_index is not None and src_model.v_index is not None:
        start[dst_model.v_index] = z[src_model.v_index]
    return start


def _lcg_like(solver, problem, cfg, x0):
    try:
        sol = solver(problem, x0, cfg)
    except BudgetExhausted as exc:
        sol = exc.solution
    return sol


def _as_nonconvex(problem):
    """View a convex model through the nonconvex solvers (``force`` runs).

    Any ``L``-smooth function has lower curvature at most ``L``, which is the
    weight used for the proximal term.
    """
    if isinstance(problem, NonconvexProblem):
        return problem
    if problem.f.structured:
        raise ConfigError(f"{problem.name or 'this model'} has a nonsmooth objective; "
                          "the nonconvex solvers need a smooth one")
    return NonconvexProblem(problem.f, problem.h, problem.x_set,
                            problem.f.lipschitz_grad, problem.prox_kind, problem.name)


def _run_algorithm(cfg, model, data, sink):
    p = model.problem
    if cfg.algorithm in ("ipp-lcg", "dncg"):
        p = _as_nonconvex(p)
    x0 = model.start()
    if cfg.algorithm == "lcg":
        sol = _lcg_like(lambda pr, x, c: lcg_solve(
            pr, c.eps, c.mu, c.max_outer, c.max_inner, x0=x, total_inner=c.total_inner,
            tau_scale=c.tau_scale, trace=c.trace), p, cfg, x0)
        sink["levels"] = sol.trace
        sink["cgo"] = sol.cgo_trace
        return sol.x, {"status": sol.status, "outer_iters": sol.outer_iters,
                       "inner_iters": sol.inner_iters_total,
                       "level": sol.level, "gap_bound": sol.f_gap_bound}
    if cfg.algorithm == "mlcg":
        sol = _lcg_like(lambda pr, x, c: mlcg_solve(
            pr, x, c.eps, c.mu, c.max_outer, c.max_inner, total_inner=c.total_inner,
            tau_scale=c.tau_scale, trace=c.trace), p, cfg, x0)
        sink["levels"] = sol.trace
        sink["cgo"] = sol.cgo_trace
        return sol.x, {"status": sol.status, "outer_iters": sol.outer_iters,
                       "inner_iters": sol.inner_iters_total, "level": sol.level,
                       "kappa": sol.kappa}
    if cfg.algorithm == "ipp-lcg":
        res = ipp_lcg(p, mu=cfg.mu, x0=x0, epsilon=cfg.eps,
                      delta_f=cfg.delta_f, delta_h=cfg.delta_h,
                      max_outer=cfg.max_outer, max_inner=cfg.max_inner,
                      total_inner=cfg.total_inner, tau_scale=cfg.tau_scale)
        return res.x, {"status": res.status, "outer_iters": len(res.decreases),
                       "inner_iters": res.inner_iters_total, "j_hat": res.j_hat}
    if cfg.algorithm == "dncg":
        res = dncg(p, cfg.K, x0=x0, c=cfg.c, trace=cfg.trace)
        sink["dncg"] = res.trace
        return res.x, {"status": "converged", "K": cfg.K, "k_hat": res.k_hat,
                       "wolfe_gap": res.q}
    # lcg-then-dncg
    conv = _build(WARM_START_MODEL[cfg.model], cfg, data)
    sol = _lcg_like(lambda pr, x, c: lcg_solve(
        pr, c.eps, c.mu, c.max_outer, c.max_inner, x0=x, total_inner=c.total_inner,
        tau_scale=c.tau_scale, trace=c.trace), conv.problem, cfg, conv.start())
    sink["levels"] = sol.trace
    start = _transfer(conv, sol.x, model)
    res = dncg(p, cfg.K, x0=start, c=cfg.c, trace=cfg.trace)
    sink["dncg"] = res.trace
    return res.x, {"status": "converged", "lcg_status": sol.status,
                   "outer_iters": sol.outer_iters, "inner_iters": sol.inner_iters_total,
                   "K": cfg.K, "k_hat": res.k_hat, "wolfe_gap": res.q}


def _metrics(cfg, model, data, x):
    p = model.problem
    cons = p.constraints(x) if p.m else np.zeros(0)
    out = {"objective": p.objective(x),
           "constraint_norm": float(np.linalg.norm(np.maximum(cons, 0.0)))}
    if cfg.is_imrt:
        y = model.intensities(x)
        if isinstance(model, imrt_models.ImrtModel):
            hs, hc = imrt_models.constraint_split(model, x)
            out["h_s"] = hs
            out["h_c"] = hc
        out.update(imrt_models.plan_summary(data, y))
        out["criteria"] = imrt_models.criteria_table(data, y)
        return out
    w = model.weights(x)
    psi = model.params.get("psi", pf.psi_rule(data.n_assets) if cfg.psi == "auto" else cfg.psi)
    out["risk"] = pf.risk(w, data)
    out["assets"] = pf.count_assets(w)
    out["psi"] = psi
    out["card_violation"] = pf.card_violation(w, psi)
    return out


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_trace(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])


def dumps_report(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def run(config):
    """Build, solve and report. Solver errors become a ``failed`` report."""
    cfg = config if isinstance(config, RunConfig) else RunConfig.from_dict(config)
    cfg.validate()
    echo = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    report = {"version": REPORT_VERSION, "config": echo, "status": "failed",
              "error": None, "metrics": {}, "iterations": {}}
    sink = {}
    t0 = time.perf_counter()
    limiter = threadpool_limits(1) if threadpool_limits is not None else None
    try:
        data = _load_data(cfg)
        model = _build(cfg.model, cfg, data)
        x, info = _run_algorithm(cfg, model, data, sink)
        report["status"] = info.pop("status")
        report["iterations"] = info
        report["metrics"] = _metrics(cfg, model, data, x)
        report["solution"] = {"nonzero": {str(i): float(v) for i, v in enumerate(x)
                                          if abs(v) > 1e-12}}
    except (ParseError, EmptyData, ConfigError):
        raise
    except (LevelCGError, ValueError, ArithmeticError) as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    finally:
        if limiter is not None:
            limiter.unregister()
    wall = time.perf_counter() - t0
    report = _clean(report)
    if cfg.out:
        base, _ = os.path.splitext(cfg.out)
        os.makedirs(os.path.dirname(os.path.abspath(cfg.out)), exist_ok=True)
        with open(cfg.out, "w") as fh:
            fh.write(dumps_report(report))
        with open(base + ".timing.json", "w") as fh:
            json.dump({"wall_seconds": wall}, fh)
        if cfg.trace:
            if sink.get("levels"):
                _write_trace(base + ".levels.csv", LEVEL_TRACE_FIELDS, sink["levels"])
            if sink.get("cgo"):
                _write_trace(base + ".cgo.csv", ("k",) + TRACE_FIELDS, sink["cgo"])
            if sink.get("dncg"):
                _write_trace(base + ".dncg.csv", DNCG_TRACE_FIELDS, sink["dncg"])
    report["wall_seconds"] = wall
    return report


SWEEP_COLUMNS = ("name", "model", "algorithm", "phi", "psi", "status", "objective",
                 "constraint_norm", "h_s", "h_c", "risk", "assets", "card_violation",
                 "angles", "apertures", "outer_iters", "inner_iters", "K")


def _sweep_row(cfg, report):
    m = report.get("metrics", {})
    it = report.get("iterations", {})
    row = {"name": cfg.name or "", "model": cfg.model, "algorithm": cfg.algorithm,
           "phi": cfg.phi if cfg.is_imrt else "", "psi": m.get("psi", ""),
           "status": report["status"]}
    for k in SWEEP_COLUMNS[6:15]:
        row[k] = m.get(k, "")
    for k in ("outer_iters", "inner_iters", "K"):
        row[k] = it.get(k, "")
    return row


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def sweep(configs, csv_path=None, md_path=None):
    """Run configs in order; a failing member yields a ``failed`` row."""
    configs = list(configs)
    if not configs:
        raise ConfigError("sweep needs at least one config")
    rows = []
    for c in configs:
        cfg = c if isinstance(c, RunConfig) else RunConfig.from_dict(c)
        try:
            report = run(cfg)
        except (ParseError, EmptyData, ConfigError, OSError) as exc:
            report = {"status": "failed", "metrics": {}, "iterations": {},
                      "error": {"type": type(exc).__name__, "message": str(exc)}}
        rows.append(_sweep_row(cfg, report))
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    md = markdown_table(rows)
    if md_path:
        with open(md_path, "w") as fh:
            fh.write(md)
    return rows, md


def markdown_table(rows, columns=SWEEP_COLUMNS):
    cols = [c for c in columns if any(r.get(c, "") != "" for r in rows)]
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        lines.append("| " + " | ".join(_fmt(r.get(c, "")) for c in cols) + " |")
    return "\n".join(lines) + "\n"


def criteria_markdown(criteria):
    lines = ["| criterion | achieved fraction | satisfied |", "|---|---|---|"]
    for c in criteria:
        lines.append(f"| {c['criterion']} | {c['fraction']:.4f} | "
                     f"{'yes' if c['satisfied'] else 'no'} |")
    return "\n".join(lines) + "\n"
