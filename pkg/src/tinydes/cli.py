"""Command-line interface.

Subcommands: train, crossval, bench-infer, export-src, inspect.
Flags override values from an optional --config key=value file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ._rng import derive_seed
from .bench import (DEFAULT_FULL_METHODS, METHOD_ORDER, DatasetSpec,
                    ExperimentConfig, config_from_text, emit_report,
                    measure_inference, run_experiment)
from .cluster import fit_kmeans
from .data import fit_standardizer, stratified_split, apply_standardizer, Dataset
from .errors import TinyDesError
from .selection import build_competence_model, build_dsel
from .tinyformat import emit_static_source, export_tiny, load_tiny
from .trees import generate_pool


def _add_dataset_flags(p):
    p.add_argument("--dataset", required=True,
                   help="IDX image file or CSV file (.csv suffix switches modes)")
    p.add_argument("--labels", help="IDX label file (IDX mode)")
    p.add_argument("--label-column", default="-1",
                   help="CSV label column name or index (CSV mode)")


def _spec_from_flags(args, name="cli") -> DatasetSpec:
    path = args.dataset
    if path.endswith(".csv"):
        return DatasetSpec(name=name, csv=path, label_column=args.label_column)
    if not args.labels:
        raise TinyDesError("--labels is required for IDX datasets")
    return DatasetSpec(name=name, images=path, labels=args.labels)


def _common_model_flags(p):
    p.add_argument("--j", default="20", help="ensemble size(s), comma separated")
    p.add_argument("--clusters", type=int, default=5, help="k-means cluster count")
    p.add_argument("--n-acc", type=int, default=None, help="accuracy shortlist size")
    p.add_argument("--dsel-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=42)


def cmd_train(args) -> int:
    data = _spec_from_flags(args).load()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pool_train, dsel_part = stratified_split(data, 1.0 - args.dsel_fraction,
                                             derive_seed(args.seed, 1))
    s = fit_standardizer(pool_train)
    std_train = Dataset(apply_standardizer(s, pool_train.features), pool_train.labels,
                        data.n_classes)
    pool = generate_pool(std_train, seed=derive_seed(args.seed, 2))
    dsel = build_dsel(pool, dsel_part, s)
    km = fit_kmeans(dsel.samples, args.clusters, derive_seed(args.seed, 3))
    n_acc = args.n_acc or -(-pool.pool_size // 2)
    for j in _parse_int_list(args.j):
        cm = build_competence_model(dsel, km, n_acc, j)
        blob, manifest = export_tiny(s, cm, pool)
        model_path = out / f"model_j{j}.tdes"
        model_path.write_bytes(blob)
        (out / f"model_j{j}.manifest").write_text(manifest, encoding="utf-8")
        print(f"wrote {model_path} ({len(blob)} bytes, pool {pool.pool_size} trees, "
              f"k={args.clusters}, J={j})")
    return 0


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v]


def cmd_crossval(args) -> int:
    if args.config:
        cfg = config_from_text(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = ExperimentConfig()
    overrides = {}
    if args.dataset:
        overrides["datasets"] = (_spec_from_flags(args, name=args.name),)
    if args.method:
        overrides["methods"] = tuple(args.method)
    if args.j:
        overrides["j_values"] = tuple(_parse_int_list(args.j))
    if args.clusters is not None:
        overrides["k_clusters"] = args.clusters
    if args.neighbors is not None:
        overrides["k_neighbors"] = args.neighbors
    if args.n_acc is not None:
        overrides["n_acc"] = args.n_acc
    if args.pct_static is not None:
        overrides["pct_static"] = args.pct_static
    if args.splits is not None:
        overrides["n_splits"] = args.splits
    if args.repeats is not None:
        overrides["n_repeats"] = args.repeats
    if args.dsel_fraction is not None:
        overrides["dsel_fraction"] = args.dsel_fraction
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out:
        overrides["out_dir"] = args.out
    if args.full:
        overrides["profile"] = "full"
        if "methods" not in overrides and not args.config:
            overrides["methods"] = tuple(DEFAULT_FULL_METHODS)
    elif args.desk_scale:
        overrides["profile"] = "desk-scale"
    cfg = replace(cfg, **overrides)
    if not cfg.datasets:
        print("error: no datasets configured (use --dataset or a --config file)",
              file=sys.stderr)
        return 2
    table = run_experiment(cfg)
    paths = emit_report(table, cfg.out_dir)
    for r in table.rows:
        tag = f"{r.method}" + (f" {r.params}" if r.params else "")
        if r.status == "ok":
            print(f"{r.dataset:>12}  {tag:<28} acc {r.mean_accuracy:.4f} "
                  f"({r.std_accuracy:.4f})  cost {r.mean_cost:10.1f}")
        else:
            print(f"{r.dataset:>12}  {tag:<28} FAILED: {r.error}")
    print("reports:", ", ".join(sorted(paths.values())))
    return 0


def cmd_bench_infer(args) -> int:
    engine = load_tiny(Path(args.model).read_bytes())
    probes = _spec_from_flags(args).load()
    stats = measure_inference(engine, probes, warmup=args.warmup, reps=args.reps)
    print(f"probes             : {stats['n_probes']}")
    print(f"reps               : {stats['reps']}")
    print(f"mean wall per probe: {stats['mean_wall_s'] * 1e6:.2f} us "
          f"(std {stats['std_wall_s'] * 1e6:.2f})")
    print(f"mean cost per probe: {stats['mean_cost']:.2f} node visits + centroid units "
          f"(std {stats['std_cost']:.2f})")
    return 0


def cmd_export_src(args) -> int:
    source = emit_static_source(Path(args.model).read_bytes())
    Path(args.out).write_text(source, encoding="utf-8")
    print(f"wrote {args.out} ({len(source)} chars)")
    return 0


def cmd_inspect(args) -> int:
    blob = Path(args.model).read_bytes()
    engine = load_tiny(blob)
    print(f"file               = {args.model}")
    print(f"bytes              = {len(blob)}")
    print(f"n_features         = {engine.n_features}")
    print(f"n_classes          = {engine.n_classes}")
    print(f"k_clusters         = {engine.k}")
    print(f"ensemble_size (J)  = {engine.j}")
    print(f"trees retained     = {engine.pool_size}")
    print(f"node records       = {engine.node_feature.shape[0]}")
    print(f"rom_estimate_bytes = {len(blob) - 4}")
    print("crc                = ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tinydes",
                                 description="train, benchmark and compact "
                                             "clustering-selected tree ensembles")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the full pipeline and export .tdes models")
    _add_dataset_flags(p)
    _common_model_flags(p)
    p.add_argument("--out", default="models", help="output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("crossval", help="repeated stratified cross-validation benchmark")
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--dataset")
    p.add_argument("--labels")
    p.add_argument("--label-column", default="-1")
    p.add_argument("--name", default="dataset", help="dataset name used in reports")
    p.add_argument("--method", action="append", choices=METHOD_ORDER,
                   help="repeatable; default: all six (KNORA excluded with --full)")
    p.add_argument("--j", help="comma-separated ensemble sizes")
    p.add_argument("--clusters", type=int)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--n-acc", type=int)
    p.add_argument("--pct-static", type=float)
    p.add_argument("--splits", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--dsel-fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", action="store_true",
                       help="stratified 5000-sample subset (default)")
    scale.add_argument("--full", action="store_true", help="entire dataset")
    p.set_defaults(fn=cmd_crossval)

    p = sub.add_parser("bench-infer", help="time a .tdes engine on probe data")
    p.add_argument("--model", required=True)
    _add_dataset_flags(p)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--reps", type=int, default=3)
    p.set_defaults(fn=cmd_bench_infer)

    p = sub.add_parser("export-src", help="emit the C89 source form of a .tdes model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_src)

    p = sub.add_parser("inspect", help="validate a .tdes file and dump its manifest")
    p.add_argument("--model", required=True)
    p.set_defaults(fn=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TinyDesError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
