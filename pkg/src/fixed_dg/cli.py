"""Command line entry point.

Subcommands: gen, train, eval, bench, bounds, report.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
``FIXED_DG_THREADS`` caps how many bench runs execute concurrently.
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bounds as bounds_mod
from . import reporting
from .config import arch_builder, build_dataset, parse_config, serialize_config
from .datagen import split_train_val
from .errors import FixedDgError
from .models import load_checkpoint, save_checkpoint
from .trainer import evaluate, leave_one_domain_out, read_run_jsonl, train, write_run_jsonl


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fixed-dg", description="domain-generalization lab")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset and write it as CSV")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--config", required=True)

    b = sub.add_parser("bench", help="leave-one-domain-out benchmark over seeds x algorithms")
    b.add_argument("--config", required=True)
    b.add_argument("--algorithms", default=None, help="comma list overriding bench.algorithms")
    b.add_argument("--seeds", type=int, default=None, help="number of trial seeds")
    b.add_argument("--out", default=None)

    v = sub.add_parser("bounds", help="run the divergence-bound verification suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", required=True, help="CSV report path")

    r = sub.add_parser("report", help="aggregate run JSONL files into a result table")
    r.add_argument("--runs", required=True, help="directory scanned recursively for *.jsonl")
    r.add_argument("--out", default=None, help="directory for table.csv/table.txt")
    return p


def _cmd_gen(args) -> int:
    cfg = parse_config(args.config)
    ds = build_dataset(cfg)
    from .datagen import CsvSchema, save_csv

    kind = "flat" if len(ds.feature_shape) == 1 else "long"
    save_csv(ds, args.out, CsvSchema(kind=kind))
    sizes = ", ".join(f"{d.name}:{d.x.shape[0]}" for d in ds.domains)
    print(f"wrote {args.out} ({kind}, {ds.num_domains} domains, {ds.num_classes} classes; {sizes})")
    return 0


def _run_dir(cfg, override) -> str:
    out = override if override else cfg.values["report.out_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    ds = build_dataset(cfg)
    acfg = cfg.algorithm_config(seed=args.seed)
    tr, va = split_train_val(ds, ratio=cfg.values["data.split_ratio"], seed=acfg.seed)
    bundle, result = train(acfg, tr, va, arch=arch_builder(cfg)(tr))

    out = _run_dir(cfg, args.out)
    with open(os.path.join(out, "config.txt"), "w") as f:
        f.write(serialize_config(cfg))
    write_run_jsonl(result, os.path.join(out, "metrics.jsonl"))
    save_checkpoint(bundle, os.path.join(out, "best.ckpt"))
    if cfg.values["report.emit_plots"]:
        feats = np.concatenate([bundle.features(d.x) for d in va.domains])
        labels = np.concatenate([d.y for d in va.domains])
        doms = np.concatenate([np.full(d.y.shape[0], d.domain_id) for d in va.domains])
        reporting.project_embeddings(feats, labels, doms, os.path.join(out, "embedding"))
    print(
        f"{acfg.algorithm}: best val acc {result.best_val_acc:.4f} at epoch "
        f"{result.selected_epoch} ({result.wall_time:.1f}s) -> {out}"
    )
    return 0


def _cmd_eval(args) -> int:
    cfg = parse_config(args.config)
    bundle = load_checkpoint(args.ckpt)
    ds = build_dataset(cfg)
    ev = evaluate(bundle, ds)
    for name, acc in ev.per_domain.items():
        print(f"{name}: {acc:.4f}")
    print(f"macro: {ev.macro:.4f}  overall: {ev.overall:.4f}")
    return 0


def _cmd_bench(args) -> int:
    cfg = parse_config(args.config)
    ds = build_dataset(cfg)
    algorithms = (
        tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        if args.algorithms
        else cfg.values["bench.algorithms"]
    )
    n_seeds = args.seeds if args.seeds is not None else cfg.values["bench.seeds"]
    base_seed = cfg.values["algorithm.seed"] if cfg.values["algorithm.seed"] >= 0 else cfg.values["data.seed"]
    out = _run_dir(cfg, args.out)
    build_arch = arch_builder(cfg)

    def one(task):
        alg, seed = task
        acfg = cfg.algorithm_config(algorithm=alg, seed=seed)
        lodo = leave_one_domain_out(
            acfg, ds, arch_for=build_arch, split_ratio=cfg.values["data.split_ratio"], keep_bundles=True
        )
        run_dir = os.path.join(out, alg, f"seed{seed}")
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.txt"), "w") as f:
            f.write(serialize_config(cfg))
            f.write(f"# resolved: algorithm.name = {alg}, algorithm.seed = {seed}\n")
        for target, res in lodo.rows:
            write_run_jsonl(res, os.path.join(run_dir, f"{target}.jsonl"))
            save_checkpoint(lodo.bundles[target], os.path.join(run_dir, f"{target}.ckpt"))
        return lodo

    tasks = [(alg, base_seed + s) for alg in algorithms for s in range(n_seeds)]
    threads = max(1, int(os.environ.get("FIXED_DG_THREADS", "1")))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, tasks))
    else:
        results = [one(t) for t in tasks]

    finals = []
    for lodo in results:
        for target, res in lodo.rows:
            finals.append(
                {"config": res.config, "target_domain": target, "target_acc": res.target_acc}
            )
    rows = reporting.aggregate_runs(finals)
    reporting.write_table_csv(rows, os.path.join(out, "table.csv"))
    text = reporting.table_text(rows)
    with open(os.path.join(out, "table.txt"), "w") as f:
        f.write(text)
    print(text, end="")
    print(f"{len(finals)} runs -> {out}")
    return 0


def _cmd_bounds(args) -> int:
    rows = bounds_mod.run_default_suites(seed=args.seed)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["suite", "instance", "inequality", "lhs", "rhs", "slack"])
        for r in rows:
            w.writerow([r["suite"], r["instance"], r["inequality"], repr(r["lhs"]), repr(r["rhs"]), repr(r["slack"])])
    negative = [r for r in rows if r["slack"] < 0]
    print(f"{len(rows)} inequalities checked, min slack {min(r['slack'] for r in rows):.3g}, "
          f"{len(negative)} negative -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    finals = []
    for root, _, files in os.walk(args.runs):
        for name in files:
            if name.endswith(".jsonl"):
                _, final = read_run_jsonl(os.path.join(root, name))
                if final is not None:  # incomplete runs carry no sentinel record
                    finals.append(final)
    rows = reporting.aggregate_runs(finals)
    text = reporting.table_text(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        reporting.write_table_csv(rows, os.path.join(args.out, "table.csv"))
        with open(os.path.join(args.out, "table.txt"), "w") as f:
            f.write(text)
    print(text, end="")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "bounds": _cmd_bounds,
    "report": _cmd_report,
}


def run_cli(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits 0 for --help, 2 for usage errors
        return 0 if e.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except FixedDgError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
