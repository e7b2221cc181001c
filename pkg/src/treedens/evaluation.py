"""L1 distances between a fitted tree density and a reference, and the experiment harness."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .density import TreeDensityModel, eval_density, eval_log_density, fit_tree_density, root_and_order
from .histograms import Dataset, Partition1D
from .mi import default_bin_widths, mi_matrix
from .trees import is_optimal, max_spanning_tree, mi_gap
from .truth import FGMTreeTruth, true_mi_matrix


class ModelTruth:
    """Expose a fitted model through the ground-truth interface (pdf, logpdf, sample, box)."""

    def __init__(self, model: TreeDensityModel, seed: int = 0):
        self.model = model
        self.seed = seed

    @property
    def d(self) -> int:
        return self.model.d

    def logpdf(self, x):
        return np.atleast_1d(eval_log_density(self.model, np.atleast_2d(x)))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, m, rng=None, workers=1):
        from .density import sample

        return sample(self.model, m, self.seed if rng is None else rng, workers=workers)

    def _axis_cells(self, axis):
        k = self.model.order.permutation[axis]
        return self.model.vertex_marginal(k).cells

    def support_box(self):
        p = self.model.partition
        lo = np.array([p.left_edge(self._axis_cells(v).min()) for v in range(self.d)])
        hi = np.array([p.left_edge(self._axis_cells(v).max() + 1) for v in range(self.d)])
        return lo, hi

    def breakpoints(self, axis):
        c = self._axis_cells(axis)
        return self.model.partition.left_edge(np.arange(c.min(), c.max() + 2))


@dataclass(frozen=True)
class L1Estimate:
    value: float
    se: float
    m: int


def l1_distance_mc(model: TreeDensityModel, gt, m: int = 100_000, rng: int | np.random.Generator = 0) -> L1Estimate:
    """Monte Carlo ``int |g - f_n|`` as ``2 E_g[(1 - f_n/g)_+]``, sampling the reference ``g``.

    The integrand lies in [0, 1], so the estimate lies in [0, 2].
    """
    if m < 100:
        raise ValueError("need m >= 100 Monte Carlo samples")
    if gt.d != model.d:
        raise ValueError(f"dimension mismatch: model d={model.d}, reference d={gt.d}")
    x = gt.sample(m, rng)
    lg = gt.logpdf(x)
    if np.any(~np.isfinite(lg)):
        raise ValueError("reference density is zero at one of its own samples")
    lf = eval_log_density(model, x)
    with np.errstate(over="ignore"):
        integrand = np.maximum(0.0, 1.0 - np.exp(lf - lg))
    return L1Estimate(2.0 * float(integrand.mean()), 2.0 * float(integrand.std(ddof=1)) / math.sqrt(m), m)


def _model_box(model: TreeDensityModel):
    mt = ModelTruth(model)
    return mt.support_box(), [mt.breakpoints(v) for v in range(model.d)]


GRID_TOL = 1e-6
_GRID_SUB = {1: (16, 256), 2: (4, 64), 3: (2, 16)}


def _grid_axes(model: TreeDensityModel, gt) -> list[np.ndarray]:
    (mlo, mhi), mbreaks = _model_box(model)
    glo, ghi = gt.support_box()
    axes = []
    for v in range(model.d):
        lo, hi = min(mlo[v], glo[v]), max(mhi[v], ghi[v])
        pts = np.concatenate([mbreaks[v], gt.breakpoints(v), [glo[v], ghi[v], lo, hi]])
        axes.append(np.unique(pts[(pts >= lo) & (pts <= hi)]))
    return axes


def _grid_sum(model: TreeDensityModel, gt, axes, sub: int, order: int, chunk: int) -> float:
    d = model.d
    t, w = np.polynomial.legendre.leggauss(order)
    t, w = 0.5 * (t + 1), 0.5 * w
    panel = (np.arange(sub)[:, None] + t[None, :]).ravel() / sub
    pw = np.tile(w, sub) / sub
    nodes = np.array(list(itertools.product(panel, repeat=d)))  # (S, d) in [0, 1]^d
    weights = np.prod(np.array(list(itertools.product(pw, repeat=d))), axis=1)
    lows = np.array(list(itertools.product(*[a[:-1] for a in axes])))
    widths = np.array(list(itertools.product(*[np.diff(a) for a in axes])))
    keep = np.all(widths > 0, axis=1)
    lows, widths = lows[keep], widths[keep]
    step = max(1, chunk * 4096 // len(weights))
    total = []
    for s in range(0, len(lows), step):
        lo, wd = lows[s:s + step], widths[s:s + step]
        fn = eval_density(model, lo + 0.5 * wd)
        pts = lo[:, None, :] + wd[:, None, :] * nodes[None, :, :]
        g = gt.pdf(pts.reshape(-1, d)).reshape(len(lo), -1)
        vol = np.prod(wd, axis=1)
        total.append(np.abs(g - fn[:, None]) @ weights * vol)
    return math.fsum(np.concatenate(total).tolist()) if total else 0.0


def l1_distance_grid(model: TreeDensityModel, gt, sub: int | None = None, order: int = 4,
                     chunk: int = 256, tol: float = GRID_TOL) -> float:
    """Deterministic ``int |g - f_n|`` for d <= 3.

    The union of both grids and the reference support is cut into boxes on
    which ``f_n`` is constant; ``g`` is integrated per box by composite
    Gauss-Legendre with ``sub`` panels of ``order`` nodes per axis.  Without
    an explicit ``sub`` the panel count is doubled until two successive
    values agree to ``tol`` (or a per-dimension cap is reached).
    """
    d = model.d
    if d > 3:
        raise ValueError("grid L1 integration supports d <= 3")
    if gt.d != d:
        raise ValueError(f"dimension mismatch: model d={d}, reference d={gt.d}")
    axes = _grid_axes(model, gt)
    if sub is not None:
        return _grid_sum(model, gt, axes, sub, order, chunk)
    sub, cap = _GRID_SUB[d]
    val = _grid_sum(model, gt, axes, sub, order, chunk)
    while sub < cap:
        sub *= 2
        nxt = _grid_sum(model, gt, axes, sub, order, chunk)
        done = abs(nxt - val) <= tol
        val = nxt
        if done:
            break
    return val


def replication_seeds(seed: int, n: int, rep: int) -> tuple[int, int]:
    """(data seed, Monte Carlo seed) derived from (master seed, n, replication)."""
    s = np.random.SeedSequence([int(seed), int(n), int(rep)]).generate_state(2)
    return int(s[0]), int(s[1])


@dataclass
class ExperimentConfig:
    n_grid: Sequence[int]
    reps: int = 20
    c1: float = 1.0
    c2: float = 1.0
    seed: int = 0
    mc_samples: int = 100_000

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ValueError("n_grid must be a non-empty list of positive sizes")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")
        if self.mc_samples < 100:
            raise ValueError("mc_samples must be >= 100")


def run_replication(gt, n: int, rep: int, cfg: ExperimentConfig, true_mi=None) -> dict[str, Any]:
    data_seed, mc_seed = replication_seeds(cfg.seed, n, rep)
    data = Dataset(gt.sample(n, data_seed))
    h, hp = default_bin_widths(n, cfg.c1, cfg.c2, warn=False)
    mi = mi_matrix(data, Partition1D(hp))
    tree = max_spanning_tree(mi)
    model = fit_tree_density(data, root_and_order(tree), Partition1D(h))
    l1 = l1_distance_mc(model, gt, cfg.mc_samples, mc_seed)
    gap = mi_gap(mi) if len(mi.edges) > 1 else None
    return {
        "n": n,
        "rep": rep,
        "data_seed": data_seed,
        "h": h,
        "h_prime": hp,
        "tree": " ".join(f"{i + 1}-{j + 1}" for i, j in tree.edges),
        "in_optimal_set": bool(is_optimal(tree, true_mi)) if true_mi is not None else None,
        "l1": l1.value,
        "l1_se": l1.se,
        "emp_delta": gap.delta if gap else None,
        "emp_tied_pairs": gap.tied_pairs if gap else 0,
    }


def _run_all(gt, cfg: ExperimentConfig, workers: int, true_mi) -> list[dict]:
    tasks = [(n, r) for n in cfg.n_grid for r in range(cfg.reps)]

    def one(task):
        return run_replication(gt, task[0], task[1], cfg, true_mi)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, tasks))
    else:
        rows = [one(t) for t in tasks]
    return sorted(rows, key=lambda r: (r["n"], r["rep"]))


@dataclass
class IdentificationReport:
    config: dict
    rows: list[dict]
    summary: list[dict]
    true_delta: float | None
    true_tied_pairs: int

    @property
    def frequencies(self) -> list[float]:
        return [s["frequency"] for s in self.summary]

    @property
    def l1_medians(self) -> list[float]:
        return [s["l1_median"] for s in self.summary]

    def to_json(self) -> str:
        return json.dumps({"kind": "identification", "config": self.config, "true_delta": self.true_delta,
                           "true_tied_pairs": self.true_tied_pairs, "summary": self.summary}, indent=1) + "\n"

    def to_csv(self) -> str:
        return _rows_csv(self.rows, self.summary)


@dataclass
class RateReport:
    config: dict
    rows: list[dict]
    summary: list[dict]
    slope: float
    intercept: float
    slope_halfwidth: float
    fit: str = "weighted"

    @property
    def n_grid(self) -> list[int]:
        return [s["n"] for s in self.summary]

    @property
    def means(self) -> np.ndarray:
        return np.array([s["l1_mean"] for s in self.summary])

    @property
    def ses(self) -> np.ndarray:
        return np.array([s["l1_mean_se"] for s in self.summary])

    def to_json(self) -> str:
        return json.dumps({"kind": "rate", "config": self.config, "slope": self.slope, "intercept": self.intercept,
                           "slope_halfwidth": self.slope_halfwidth, "fit": self.fit, "summary": self.summary},
                          indent=1) + "\n"

    def to_csv(self) -> str:
        return _rows_csv(self.rows, self.summary)


def _rows_csv(rows: list[dict], summary: list[dict]) -> str:
    buf = io.StringIO()
    for block, records in (("replications", rows), ("summary", summary)):
        if block == "summary":
            buf.write("\n")
        buf.write(f"# {block}\n")
        if not records:
            continue
        w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _config_echo(gt, cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["truth"] = gt.to_dict() if hasattr(gt, "to_dict") else None
    return out


def identification_experiment(gt: FGMTreeTruth, n_grid, reps=20, c1=1.0, c2=1.0, seed=0,
                              mc_samples=100_000, workers=1, rows=None) -> IdentificationReport:
    """Frequency of selecting an optimal tree and L1 error spread, per sample size."""
    cfg = ExperimentConfig(n_grid, reps, c1, c2, seed, mc_samples)
    true_mi = true_mi_matrix(gt)
    rows = rows if rows is not None else _run_all(gt, cfg, workers, true_mi)
    tgap = mi_gap(true_mi) if len(true_mi.edges) > 1 else None
    summary = []
    for n in cfg.n_grid:
        rs = [r for r in rows if r["n"] == n]
        l1 = np.array([r["l1"] for r in rs])
        summary.append({
            "n": n,
            "reps": len(rs),
            "frequency": sum(r["in_optimal_set"] for r in rs) / len(rs),
            "l1_mean": float(l1.mean()),
            "l1_median": float(np.median(l1)),
            "l1_q10": float(np.quantile(l1, 0.1)),
            "l1_q90": float(np.quantile(l1, 0.9)),
            "h": rs[0]["h"],
            "h_prime": rs[0]["h_prime"],
            "mean_emp_tied_pairs": float(np.mean([r["emp_tied_pairs"] for r in rs])),
            "seed": cfg.seed,
        })
    return IdentificationReport(_config_echo(gt, cfg), rows, summary,
                                tgap.delta if tgap else None, tgap.tied_pairs if tgap else 0)


def loglog_fit(n, mean, se=None) -> tuple[float, float, float, str]:
    """Least-squares line through (log n, log mean); weighted by the delta-method variance when possible.

    Returns slope, intercept, 95% half-width of the slope, and the fit kind.
    """
    x = np.log(np.asarray(n, dtype=np.float64))
    y = np.log(np.asarray(mean, dtype=np.float64))
    if se is not None and np.all(np.asarray(se) > 0) and len(x) > 2:
        var = (np.asarray(se) / np.asarray(mean)) ** 2
        kind = "weighted"
    else:
        var = np.ones_like(x)
        kind = "ordinary"
    w = 1.0 / var
    X = np.column_stack([np.ones_like(x), x])
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ (X.T @ (w * y))
    if kind == "ordinary" and len(x) > 2:
        resid = y - X @ beta
        cov = cov * float(resid @ resid) / (len(x) - 2)
    return float(beta[1]), float(beta[0]), 1.96 * math.sqrt(cov[1, 1]), kind


def rate_experiment(gt: FGMTreeTruth, n_grid, reps=10, c1=1.0, c2=1.0, seed=0,
                    mc_samples=100_000, workers=1, rows=None) -> RateReport:
    """Mean L1 error per n and the fitted log-log slope."""
    cfg = ExperimentConfig(n_grid, reps, c1, c2, seed, mc_samples)
    if len(cfg.n_grid) < 2 or cfg.n_grid[-1] < 100 * cfg.n_grid[0]:
        raise ValueError("a rate fit needs an n grid spanning at least two decades")
    rows = rows if rows is not None else _run_all(gt, cfg, workers, None)
    summary = []
    for n in cfg.n_grid:
        l1 = np.array([r["l1"] for r in rows if r["n"] == n])
        se = float(l1.std(ddof=1) / math.sqrt(l1.size)) if l1.size > 1 else 0.0
        summary.append({"n": n, "reps": int(l1.size), "l1_mean": float(l1.mean()), "l1_mean_se": se,
                        "h": rows[[r["n"] for r in rows].index(n)]["h"]})
    slope, intercept, half, kind = loglog_fit([s["n"] for s in summary], [s["l1_mean"] for s in summary],
                                              [s["l1_mean_se"] for s in summary])
    return RateReport(_config_echo(gt, cfg), rows, summary, slope, intercept, half, kind)


def write_report(report, prefix: str | Path) -> tuple[Path, Path]:
    prefix = Path(prefix)
    csv_path = prefix.with_name(prefix.name + ".csv")
    json_path = prefix.with_name(prefix.name + ".json")
    csv_path.write_text(report.to_csv())
    json_path.write_text(report.to_json())
    return csv_path, json_path
