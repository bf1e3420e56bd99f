"""Command-line entry point: ``sgnn {train,eval,bench,theory-check,sbm-gen}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench import bench_csv, eta_sweep, run_bench
from .config import load_config
from .data import _atomic_write, format_matrix_csv, save_dataset
from .errors import ConfigError, NumericError, ParseError, SGNNError
from .metrics import classification_accuracy, clustering_accuracy, kmeans, metrics_report, nmi
from .theory import sweep
from .trainer import embed, load_stack, predict, save_stack, train_stack

log = logging.getLogger("sgnn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BOUND = 0, 2, 3, 4


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_bytes(path: Path, blob: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def cmd_train(rc, args) -> int:
    data = rc.dataset()
    cfg = rc.stack_config(data.features.shape[1])
    cfg.validate(data)
    out = _out_dir(args)
    _atomic_write(out / "config.ini", rc.resolved_text())
    modules, trace = train_stack(cfg, data)
    _write_bytes(out / "checkpoint.sgnn", save_stack(modules, cfg.loss_kind))
    _atomic_write(out / "trace.csv", trace.to_csv(with_wall=False))
    _atomic_write(out / "timing.csv", trace.timing_csv())
    _atomic_write(out / "embeddings.csv", format_matrix_csv(embed(modules, data)))
    if trace.final_loss:
        print(f"final-module loss {trace.final_loss[-1][1]:.6f} after {trace.updates} updates")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(rc, args) -> int:
    data = rc.dataset()
    modules, _ = load_stack(Path(args.checkpoint).read_bytes())
    if modules[0].in_dim != data.features.shape[1]:
        raise ConfigError(f"checkpoint expects {modules[0].in_dim} input features, "
                          f"dataset has {data.features.shape[1]}")
    if data.labels is None:
        raise ConfigError("evaluation needs labels")
    task = rc.get("eval", "task")
    seed = rc.int("eval", "kmeans_seed")
    acc = nmi_value = test_acc = None
    if task == "clustering":
        h = embed(modules, data)
        res = kmeans(h, data.num_classes, seed=seed, restarts=rc.int("eval", "kmeans_restarts"))
        acc = clustering_accuracy(res.assignments, data.labels)
        nmi_value = nmi(res.assignments, data.labels)
    elif task == "classification":
        if data.split is None or data.split["test"].size == 0:
            raise ConfigError("classification evaluation needs a non-empty test split")
        test_acc = classification_accuracy(predict(modules, data), data.labels, data.split["test"])
    else:
        raise ConfigError(f"eval.task must be 'clustering' or 'classification', got {task!r}")
    report = metrics_report(acc, nmi_value, test_acc, seeds=[rc.int("train", "seed"), seed],
                            config_hash=rc.config_hash())
    out = _out_dir(args)
    _atomic_write(out / "metrics.json", report + "\n")
    _atomic_write(out / "config.ini", rc.resolved_text())
    print(report)
    return EXIT_OK


def cmd_bench(rc, args) -> int:
    out = _out_dir(args)
    _atomic_write(out / "config.ini", rc.resolved_text())
    base = rc.sbm_spec()
    stack = rc.stack_config(base.feature_dim)
    stack.epochs = rc.int("bench", "epochs")
    stack.bt_rounds = rc.int("bench", "bt_rounds")
    if args.eta_sweep:
        data = rc.dataset()
        stack = rc.stack_config(data.features.shape[1])
        etas = [float(t) for t in rc.get("bench", "eta_grid").split(",") if t.strip()]
        text = eta_sweep(stack, data, etas, kmeans_seed=rc.int("eval", "kmeans_seed"))
        _atomic_write(out / "eta_sweep.csv", text)
    else:
        sizes = [int(t) for t in rc.get("bench", "sizes").split(",") if t.strip()]
        text = bench_csv(run_bench(stack, base, sizes))
        _atomic_write(out / "bench.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_theory_check(rc, args) -> int:
    out = _out_dir(args)
    _atomic_write(out / "config.ini", rc.resolved_text())
    regimes = [t.strip() for t in rc.get("theory", "regimes").split(",") if t.strip()]
    rep = sweep(rc.int("theory", "trials"), rc.int("theory", "n"), rc.int("theory", "d"),
                rc.int("theory", "k"), seed=rc.int("theory", "seed"), regimes=regimes,
                dump_dir=out / "violations")
    text = rep.to_text()
    _atomic_write(out / "theory_report.txt", text)
    sys.stdout.write(text)
    return EXIT_BOUND if rep.any_violation else EXIT_OK


def cmd_sbm_gen(rc, args) -> int:
    data = rc.dataset()
    paths = save_dataset(data, _out_dir(args))
    _atomic_write(Path(args.out) / "config.ini", rc.resolved_text())
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "theory-check": cmd_theory_check,
    "sbm-gen": cmd_sbm_gen,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgnn", description="Stacked separable GNN training and checks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [train], [dataset], [eval], [bench], [theory]")
        p.add_argument("--seed", type=int, help="training seed (overrides train.seed)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set train.eta=10")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
        if name == "bench":
            p.add_argument("--eta-sweep", action="store_true", help="sweep eta instead of timing sizes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_config(args.config, args.set, seed=args.seed)
        return COMMANDS[args.command](rc, args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SGNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
