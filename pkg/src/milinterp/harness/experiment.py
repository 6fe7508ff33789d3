"""Repeated train/explain/evaluate runs, with per-cell caching and a deterministic results file.

A *cell* is one (repeat, model, method) combination. Each completed cell is
stored as JSON under ``<out>/cells`` and trained models as checkpoints under
``<out>/models``, so re-running a finished directory makes no classifier calls.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import MILError
from ..datasets import generate_fourclass, generate_single_positive, generate_smil
from ..metrics import evaluate_method, sem
from ..models import OracleModel, accuracy, load_model, save_model, train
from .config import ExperimentConfig, derive_seed
from .methods import applicable, make_method

log = logging.getLogger(__name__)

RESULTS_MAGIC = "MILRESULTS 1"
RESULTS_COLUMNS = ("dataset", "model", "method", "metric", "class_policy", "repeat", "mean", "sem", "n_bags", "status")
CELL_VERSION = 1


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.10f}"


def make_dataset(cfg: ExperimentConfig, seed: int):
    gcfg = cfg.dataset.generator_config(seed)
    kind = cfg.dataset.generator
    if kind == "fourclass":
        return generate_fourclass(gcfg)
    if kind == "single_positive":
        return generate_single_positive(gcfg, cfg.dataset.num_positive_classes)
    return generate_smil(gcfg, cfg.dataset.witness_rate)


@dataclass
class RepeatSeeds:
    repeat: int
    dataset: int
    train: dict

    @classmethod
    def for_repeat(cls, cfg: ExperimentConfig, r: int):
        return cls(r, derive_seed(cfg.seed, "dataset", r), {m: derive_seed(cfg.seed, "train", r, m) for m in cfg.models})


def cell_seed(cfg: ExperimentConfig, r: int, model: str, method: str) -> int:
    # keyed by method family, not label: sweep and grid variants share random streams
    return derive_seed(cfg.seed, "cell", r, model, method)


class RepeatContext:
    """Lazily builds one repeat's dataset and models; reuses checkpoints on disk."""

    def __init__(self, cfg: ExperimentConfig, r: int, workdir: Optional[Path]):
        self.cfg, self.r, self.workdir = cfg, r, workdir
        self.seeds = RepeatSeeds.for_repeat(cfg, r)
        self._dataset = None
        self._models = {}
        self.calls = 0

    @property
    def dataset(self):
        if self._dataset is None:
            self._dataset = make_dataset(self.cfg, self.seeds.dataset)
        return self._dataset

    def _paths(self, kind):
        stem = self.workdir / "models" / f"r{self.r}_{kind}"
        return stem.with_suffix(".ckpt"), stem.with_suffix(".json")

    def model_info(self, kind) -> Optional[dict]:
        if self.workdir is None:
            return None
        _, meta = self._paths(kind)
        return json.loads(meta.read_text()) if meta.exists() else None

    def model(self, kind):
        if kind in self._models:
            return self._models[kind]
        ds = self.dataset
        if kind == "oracle":
            m = OracleModel.from_dataset(ds)
            info = self.model_info(kind)
            if info is None:
                info = {"accuracy": accuracy(m, ds.test), "seed": None}
                self.calls += m.call_count
                self._save_meta(kind, info)
        else:
            ckpt, _ = self._paths(kind) if self.workdir else (None, None)
            info = self.model_info(kind)
            if ckpt is not None and ckpt.exists() and info is not None:
                m = load_model(ckpt)
            else:
                seed = self.seeds.train[kind]
                m, tlog = train(kind, ds, self.cfg.train_config(seed))
                info = {"accuracy": accuracy(m, ds.test), "seed": seed, "best_epoch": tlog.best_epoch}
                self.calls += m.call_count
                if ckpt is not None:
                    ckpt.parent.mkdir(parents=True, exist_ok=True)
                    save_model(m, ckpt)
                self._save_meta(kind, info)
        m.reset_calls()
        self._models[kind] = (m, info)
        return self._models[kind]

    def _save_meta(self, kind, info):
        if self.workdir is None:
            return
        _, meta = self._paths(kind)
        meta.parent.mkdir(parents=True, exist_ok=True)
        meta.write_text(json.dumps(info, sort_keys=True))


@dataclass
class CellResult:
    repeat: int
    model: str
    method: str
    status: str  # ok | n/a | error
    mean: float = float("nan")
    n_bags: int = 0
    seed: int = 0
    calls: int = 0
    error: str = ""
    bag_scores: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = dict(self.__dict__, version=CELL_VERSION)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str):
        d = json.loads(text)
        d.pop("version", None)
        return cls(**d)


def _cell_path(workdir: Path, r: int, model: str, method: str) -> Path:
    return workdir / "cells" / f"r{r}__{model}__{method}.json"


def _load_cell(workdir, r, model, method) -> Optional[CellResult]:
    if workdir is None:
        return None
    p = _cell_path(workdir, r, model, method)
    if not p.exists():
        return None
    cell = CellResult.from_json(p.read_text())
    return cell if cell.status != "error" else None


def run_cell(cfg: ExperimentConfig, ctx: RepeatContext, model_kind: str, spec) -> CellResult:
    seed = cell_seed(cfg, ctx.r, model_kind, spec.name)
    try:
        model, _ = ctx.model(model_kind)
    except MILError as e:
        return CellResult(ctx.r, model_kind, spec.label, "error", seed=seed, error=f"model: {e}")
    if not applicable(spec.name, model):
        return CellResult(ctx.r, model_kind, spec.label, "n/a", seed=seed)
    ds = ctx.dataset
    bags = ds.split(cfg.eval_split)[: cfg.max_eval_bags]
    fn = make_method(spec.name, cfg.method_params(spec))
    model.reset_calls()
    try:
        res = evaluate_method(
            model, bags, fn, cfg.metric, cfg.class_policy, ds.rule, seed, spec.label, cfg.aopc_orderings
        )
    except (MILError, ValueError, np.linalg.LinAlgError) as e:
        log.warning("cell r=%d %s/%s failed: %s", ctx.r, model_kind, spec.label, e)
        return CellResult(ctx.r, model_kind, spec.label, "error", seed=seed, calls=model.call_count, error=str(e))
    calls = model.call_count
    ctx.calls += calls
    return CellResult(ctx.r, model_kind, spec.label, "ok", res.mean, res.n_bags, seed, calls, "", res.bag_scores)


def _run_group(cfg: ExperimentConfig, r: int, model_kind: str, workdir, ctx: Optional[RepeatContext] = None):
    """All method cells of one (repeat, model); returns (cells, model info, classifier calls made)."""
    ctx = ctx or RepeatContext(cfg, r, workdir)
    before = ctx.calls
    cells = []
    for spec in cfg.methods:
        cached = _load_cell(workdir, r, model_kind, spec.label)
        if cached is not None:
            cells.append(cached)
            continue
        cell = run_cell(cfg, ctx, model_kind, spec)
        if workdir is not None:
            p = _cell_path(workdir, r, model_kind, spec.label)
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(cell.to_json())
        cells.append(cell)
    info = ctx.model_info(model_kind)
    if info is None:
        try:
            info = ctx.model(model_kind)[1]
        except MILError as e:
            info = {"accuracy": float("nan"), "error": str(e)}
    return cells, info, ctx.calls - before


@dataclass
class ReportTable:
    dataset: str
    metric: str
    class_policy: str
    repeats: int
    models: list
    methods: list
    cells: dict  # (method, model) -> (mean, sem, n_bags) or None when not applicable
    overall: dict  # method -> (mean, sem)
    accuracy: dict  # model -> (mean, sem)
    failures: list = field(default_factory=list)
    classifier_calls: int = 0

    def get(self, method, model="overall"):
        if model == "overall":
            return self.overall.get(method)
        return self.cells.get((method, model))

    def render(self) -> str:
        head = ["method", *self.models, "overall"]
        rows = []
        for m in self.methods:
            row = [m]
            for model in self.models:
                c = self.cells.get((m, model))
                row.append("n/a" if c is None else f"{c[0]:.3f} ± {c[1]:.3f}")
            o = self.overall.get(m)
            row.append("n/a" if o is None else f"{o[0]:.3f} ± {o[1]:.3f}")
            rows.append(row)
        acc = ["model accuracy"] + [f"{self.accuracy[mm][0]:.3f} ± {self.accuracy[mm][1]:.3f}" for mm in self.models]
        acc.append(f"{np.mean([self.accuracy[mm][0] for mm in self.models]):.3f}")
        rows.append(acc)
        widths = [max(len(r[i]) for r in [head, *rows]) for i in range(len(head))]
        line = lambda r: "  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip()
        out = [
            f"{self.dataset}: {self.metric} ({self.class_policy} classes), mean ± sem over {self.repeats} repeat(s)",
            "datasets regenerated and models retrained per repeat",
            line(head),
            line(["-" * w for w in widths]),
        ]
        out += [line(r) for r in rows]
        for f in self.failures:
            out.append(f"FAILED {f}")
        return "\n".join(out) + "\n"


def aggregate(cfg: ExperimentConfig, cells: list, infos: dict) -> ReportTable:
    labels = [m.label for m in cfg.methods]
    by_key = {(c.repeat, c.model, c.method): c for c in cells}
    table_cells, overall = {}, {}
    failures = [
        f"r={c.repeat} {c.model}/{c.method}: {c.error}" for c in sorted(cells, key=lambda c: (c.repeat, c.model, c.method))
        if c.status == "error"
    ]
    for method in labels:
        per_model = {}
        for model in cfg.models:
            reps = [by_key.get((r, model, method)) for r in range(cfg.repeats)]
            ok = [c for c in reps if c is not None and c.status == "ok"]
            if not ok:
                table_cells[(method, model)] = None
                continue
            means = [c.mean for c in ok]
            per_model[model] = {c.repeat: c.mean for c in ok}
            table_cells[(method, model)] = (float(np.mean(means)), sem(means), sum(c.n_bags for c in ok))
        if per_model:
            col_means = [table_cells[(method, m)][0] for m in per_model]
            common = set.intersection(*(set(v) for v in per_model.values()))
            rep_means = [np.mean([v[r] for v in per_model.values()]) for r in sorted(common)]
            overall[method] = (float(np.mean(col_means)), sem(rep_means))
    acc = {}
    for model in cfg.models:
        vals = [infos[(r, model)]["accuracy"] for r in range(cfg.repeats) if (r, model) in infos]
        acc[model] = (float(np.mean(vals)) if vals else float("nan"), sem(vals))
    return ReportTable(
        cfg.dataset.generator, cfg.metric, cfg.class_policy, cfg.repeats, list(cfg.models), labels,
        table_cells, overall, acc, failures,
    )


def write_results(path, cfg: ExperimentConfig, table: ReportTable, cells: list, infos: dict):
    """Tab-separated results with a versioned header and the full seed ledger."""
    lines = [
        RESULTS_MAGIC,
        f"# dataset={cfg.dataset.generator} metric={cfg.metric} class_policy={cfg.class_policy} "
        f"repeats={cfg.repeats} master_seed={cfg.seed} regenerated_per_repeat=yes",
    ]
    for r in range(cfg.repeats):
        s = RepeatSeeds.for_repeat(cfg, r)
        train_seeds = " ".join(f"train.{m}={s.train[m]}" for m in cfg.models if m != "oracle")
        lines.append(f"# seeds repeat={r} dataset={s.dataset} {train_seeds}".rstrip())
    lines.append("\t".join(RESULTS_COLUMNS + ("seed",)))
    ds = cfg.dataset.generator
    for c in sorted(cells, key=lambda c: (c.repeat, c.model, c.method)):
        lines.append(
            "\t".join(
                [ds, c.model, c.method, cfg.metric, cfg.class_policy, str(c.repeat), _fmt(c.mean), "0",
                 str(c.n_bags), c.status, str(c.seed)]
            )
        )
    for method in table.methods:
        for model in table.models:
            v = table.cells.get((method, model))
            row = [ds, model, method, cfg.metric, cfg.class_policy, "all"]
            row += ["nan", "nan", "0", "n/a"] if v is None else [_fmt(v[0]), _fmt(v[1]), str(v[2]), "ok"]
            lines.append("\t".join(row + ["-"]))
        o = table.overall.get(method)
        if o is not None:
            lines.append("\t".join([ds, "overall", method, cfg.metric, cfg.class_policy, "all", _fmt(o[0]), _fmt(o[1]), "0", "ok", "-"]))
    for model in table.models:
        a = table.accuracy[model]
        lines.append("\t".join([ds, model, "model_accuracy", "accuracy", "-", "all", _fmt(a[0]), _fmt(a[1]), "0", "ok", "-"]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_results(path) -> list[dict]:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != RESULTS_MAGIC:
        raise ValueError(f"{path} is not a version-1 results file")
    rows = [l for l in text[1:] if not l.startswith("#")]
    header = rows[0].split("\t")
    return [dict(zip(header, r.split("\t"))) for r in rows[1:]]


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> ReportTable:
    """Run every (repeat, model, method) cell, then aggregate and write reports.

    With ``out_dir`` set, writes ``results.tsv`` and ``report.txt`` there and
    caches finished cells and trained models for resumption. ``jobs > 1``
    runs (repeat, model) groups in worker processes; results do not depend on
    ``jobs``.
    """
    cfg.validate()
    out = out_dir or cfg.output_dir
    workdir = Path(out) if out else None
    if workdir is not None:
        workdir.mkdir(parents=True, exist_ok=True)
    groups = [(r, m) for r in range(cfg.repeats) for m in cfg.models]
    cells, infos, calls = [], {}, 0
    if jobs > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(groups), os.cpu_count() or 1)) as pool:
            futures = {g: pool.submit(_run_group, cfg, g[0], g[1], workdir) for g in groups}
            for g in groups:
                c, info, n = futures[g].result()
                cells += c
                infos[g] = info
                calls += n
    else:
        contexts = {}
        for r, m in groups:
            ctx = contexts.setdefault(r, RepeatContext(cfg, r, workdir))
            c, info, n = _run_group(cfg, r, m, workdir, ctx)
            cells += c
            infos[(r, m)] = info
            calls += n
            if m == cfg.models[-1]:
                contexts.pop(r)  # free the repeat's data once all its models are done
    table = aggregate(cfg, cells, infos)
    table.classifier_calls = calls
    if workdir is not None:
        write_results(workdir / "results.tsv", cfg, table, cells, infos)
        (workdir / "report.txt").write_text(table.render())
    return table
