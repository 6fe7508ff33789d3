"""Sample-size sweeps and the MILLI alpha/beta grid search, both built on cached experiment cells."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

from ..datasets import ConfigError
from .config import SURROGATE_METHODS, ExperimentConfig, MethodSpec
from .experiment import ReportTable, run_experiment

SWEEP_MAGIC = "MILSWEEP 1"
GRID_MAGIC = "MILGRID 1"


@dataclass
class SweepResult:
    budgets: list
    methods: list
    points: dict  # (method, budget) -> (mean, sem) of the overall column
    tables: dict  # budget -> ReportTable

    def curve(self, method):
        return [self.points.get((method, b)) for b in self.budgets]


def sweep_sample_size(cfg: ExperimentConfig, budgets, out_dir=None, jobs: int = 1) -> SweepResult:
    """Re-run the surrogate methods at each budget, sharing trained models across budgets."""
    budgets = sorted({int(b) for b in budgets})
    if not budgets:
        raise ConfigError("empty budget list")
    base = [m for m in cfg.methods if m.name in SURROGATE_METHODS]
    if not base:
        raise ConfigError("no surrogate methods to sweep")
    tables, points = {}, {}
    for b in budgets:
        c = copy.deepcopy(cfg)
        c.methods = [MethodSpec(m.name, {**m.params, "n": b, "label": f"{m.label}@{b}"}) for m in base]
        t = run_experiment(c, out_dir, jobs)
        tables[b] = t
        for m in base:
            v = t.get(f"{m.label}@{b}")
            if v is not None:
                points[(m.label, b)] = v
    result = SweepResult(budgets, [m.label for m in base], points, tables)
    if out_dir is not None:
        lines = [SWEEP_MAGIC, f"# dataset={cfg.dataset.generator} metric={cfg.metric} repeats={cfg.repeats}"]
        lines.append("budget\tmethod\tmean\tsem")
        for m in result.methods:
            for b in budgets:
                v = points.get((m, b))
                mean, s = ("nan", "nan") if v is None else (f"{v[0]:.10f}", f"{v[1]:.10f}")
                lines.append(f"{b}\t{m}\t{mean}\t{s}")
        Path(out_dir, "sweep.tsv").write_text("\n".join(lines) + "\n")
    return result


@dataclass
class GridResult:
    best: tuple  # (alpha, beta)
    scores: dict  # (alpha, beta) -> (mean, sem)
    table: ReportTable


def _grid_label(a, b) -> str:
    return f"milli@a={a!r},b={b!r}"


def best_point(scores: dict) -> tuple:
    """Highest mean; ties go to the smaller |beta|, then the smaller alpha."""
    return min(scores, key=lambda ab: (-scores[ab][0], abs(ab[1]), ab[0]))


def grid_search_alpha_beta(cfg: ExperimentConfig, alphas, betas, out_dir=None, jobs: int = 1) -> GridResult:
    """Score MILLI at every grid point on the validation split and return the best point."""
    alphas, betas = list(alphas), list(betas)
    if not alphas or not betas:
        raise ConfigError("alpha and beta grids must be non-empty")
    n = cfg.method_params(MethodSpec("milli"))["n"]
    c = copy.deepcopy(cfg)
    c.eval_split = "val"
    c.methods = [
        MethodSpec("milli", {"alpha": float(a), "beta": float(b), "n": n, "label": _grid_label(a, b)})
        for a in alphas
        for b in betas
    ]
    table = run_experiment(c, out_dir, jobs)
    scores = {}
    for a in alphas:
        for b in betas:
            v = table.get(_grid_label(a, b))
            if v is not None:
                scores[(float(a), float(b))] = v
    if not scores:
        raise ConfigError("no grid point produced a score")
    best = best_point(scores)
    if out_dir is not None:
        lines = [GRID_MAGIC, f"# dataset={cfg.dataset.generator} metric={cfg.metric} split=val n={n}"]
        lines.append("alpha\tbeta\tmean\tsem")
        for a in alphas:
            for b in betas:
                v = scores.get((float(a), float(b)))
                mean, s = ("nan", "nan") if v is None else (f"{v[0]:.10f}", f"{v[1]:.10f}")
                lines.append(f"{float(a)!r}\t{float(b)!r}\t{mean}\t{s}")
        lines.append(f"# best alpha={best[0]!r} beta={best[1]!r}")
        Path(out_dir, "grid.tsv").write_text("\n".join(lines) + "\n")
    return GridResult(best, scores, table)
