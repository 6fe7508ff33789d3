"""Command-line entry point: ``milinterp <generate|train|explain|evaluate|sweep|tune>``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from ..core import MILError, resolve_classes
from ..datasets import ConfigError, ParseError, load_dataset, save_dataset
from ..models import OracleModel, TrainConfig, load_model, save_model, train
from .config import METHOD_NAMES, ExperimentConfig, MethodSpec, config_from_dict, load_config
from .experiment import make_dataset, run_experiment
from .methods import make_method
from .search import grid_search_alpha_beta, sweep_sample_size

ATTR_MAGIC = "MILATTR 1"
TRAINLOG_MAGIC = "MILTRAINLOG 1"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    return [int(x) for x in _floats(text)]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--config", help="YAML or JSON experiment config")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="milinterp", description="Model-agnostic interpretability for multiple instance learning.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset file")
    g.add_argument("--generator", choices=("fourclass", "single_positive", "smil"))
    g.add_argument("--num-train", type=int)
    g.add_argument("--num-val", type=int)
    g.add_argument("--num-test", type=int)
    g.add_argument("--positive-classes", type=int, help="single_positive only")
    g.add_argument("--witness-rate", type=float, help="smil only")
    g.add_argument("--name", default="dataset.milbags", help="file name inside --out")

    t = sub.add_parser("train", parents=[common], help="train a model and write a checkpoint")
    t.add_argument("--data", required=True)
    t.add_argument("--kind", required=True, choices=("instance", "attention", "embedding"))
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--patience", type=int)

    e = sub.add_parser("explain", parents=[common], help="write attributions for one bag or a whole split")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True, help="checkpoint path, or 'oracle'")
    e.add_argument("--method", required=True, choices=METHOD_NAMES)
    which = e.add_mutually_exclusive_group(required=True)
    which.add_argument("--bag", help="bag id")
    which.add_argument("--split", choices=("train", "val", "test"))
    e.add_argument("--classes", type=_ints, help="comma-separated class indices (default: all)")
    e.add_argument("--n", type=int, help="surrogate sample budget")
    e.add_argument("--alpha", type=float)
    e.add_argument("--beta", type=float)

    sub.add_parser("evaluate", parents=[common], help="run the configured experiment and write tables")

    s = sub.add_parser("sweep", parents=[common], help="surrogate score versus sample budget")
    s.add_argument("--budgets", type=_ints, required=True)

    u = sub.add_parser("tune", parents=[common], help="grid search MILLI alpha/beta on the validation split")
    u.add_argument("--alphas", type=_floats, required=True)
    u.add_argument("--betas", type=_floats, required=True)
    return p


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_generate(args, out: Path):
    cfg = _experiment_config(args)
    ds = cfg.dataset
    if args.generator:
        ds.generator = args.generator
    for key in ("num_train", "num_val", "num_test"):
        if getattr(args, key) is not None:
            ds.params[key] = getattr(args, key)
    if args.positive_classes is not None:
        ds.num_positive_classes = args.positive_classes
    if args.witness_rate is not None:
        ds.witness_rate = args.witness_rate
    cfg.validate()
    dataset = make_dataset(cfg, cfg.seed)
    path = out / args.name
    save_dataset(dataset, path)
    print(f"wrote {len(dataset.bags)} bags to {path}")


def _cmd_train(args, out: Path):
    cfg = _experiment_config(args)
    dataset = load_dataset(args.data)
    overrides = dict(cfg.train)
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    for key in ("max_epochs", "patience"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    try:
        tcfg = TrainConfig(**{**overrides, "seed": cfg.seed}).validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    model, tlog = train(args.kind, dataset, tcfg)
    save_model(model, out / f"{args.kind}.ckpt")
    rows = [TRAINLOG_MAGIC, "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc"]
    rows += [f"{r.epoch}\t{r.train_loss:.10f}\t{r.train_acc:.6f}\t{r.val_loss:.10f}\t{r.val_acc:.6f}" for r in tlog.epochs]
    rows.append(f"# best_epoch={tlog.best_epoch} stopped_early={tlog.stopped_early}")
    (out / f"{args.kind}.log.tsv").write_text("\n".join(rows) + "\n")
    print(f"trained {args.kind}: best epoch {tlog.best_epoch}, checkpoint {out / (args.kind + '.ckpt')}")


def _fmt(x) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def _cmd_explain(args, out: Path):
    cfg = _experiment_config(args)
    dataset = load_dataset(args.data)
    model = OracleModel.from_dataset(dataset) if args.model == "oracle" else load_model(args.model)
    if args.bag is not None:
        bags = [b for b in dataset.bags if b.bag_id == args.bag]
        if not bags:
            raise ConfigError(f"no bag with id {args.bag!r}")
    else:
        bags = dataset.split(args.split)
    spec = MethodSpec(args.method, {k: v for k, v in (("n", args.n), ("alpha", args.alpha), ("beta", args.beta)) if v is not None})
    cfg.dataset.generator = dataset.rule.name  # picks the regime defaults for MILLI
    fn = make_method(spec.name, cfg.method_params(spec))
    classes = resolve_classes(args.classes, model.num_classes)
    lines = [ATTR_MAGIC, f"# method={args.method} model={args.model} data={args.data} seed={cfg.seed}"]
    for bag in bags:
        attr = fn(model, bag, classes, cfg.seed)
        lines.append(f"bag {bag.bag_id} {bag.bag_label} {attr.method_name} {attr.num_classes} {bag.k}")
        for c in attr.classes:
            icpt = float("nan") if attr.intercepts is None else attr.intercepts[c]
            lines.append(f"{c}\t{_fmt(icpt)}\t" + ",".join(_fmt(v) for v in attr.row(c)))
    path = out / f"attributions_{args.method}.txt"
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote attributions for {len(bags)} bag(s) to {path}")


def _cmd_evaluate(args, out: Path):
    table = run_experiment(_experiment_config(args), out, args.jobs)
    print(table.render(), end="")
    return EXIT_RUNTIME if table.failures else EXIT_OK


def _cmd_sweep(args, out: Path):
    res = sweep_sample_size(_experiment_config(args), args.budgets, out, args.jobs)
    for m in res.methods:
        pts = ", ".join(f"{b}: {v[0]:.3f}" for b, v in zip(res.budgets, res.curve(m)) if v is not None)
        print(f"{m}: {pts}")
    print(f"plot data in {out / 'sweep.tsv'}")


def _cmd_tune(args, out: Path):
    res = grid_search_alpha_beta(_experiment_config(args), args.alphas, args.betas, out, args.jobs)
    a, b = res.best
    print(f"best alpha={a} beta={b} score={res.scores[res.best][0]:.4f}; grid in {out / 'grid.tsv'}")


COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "explain": _cmd_explain,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "tune": _cmd_tune,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out) or EXIT_OK
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (MILError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
