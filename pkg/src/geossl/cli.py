"""Command-line entry point: gen-survey, train, extract, eval, compare, experiment.

Every subcommand resolves flags over file config, logs the merged
configuration before running, and writes it next to its outputs. Exit
codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from . import evaluation as ev
from . import trainer as tr
from .survey import GeneratorConfig, generate_survey, load_manifest, save_manifest


def _load_yaml(path) -> dict:
    with open(path) as f:
        return yaml.safe_load(f) or {}


def _log_config(name: str, cfg: dict):
    print(f"[{name}] resolved config:")
    print(json.dumps(cfg, sort_keys=True, indent=2, default=str))


# ---------------------------------------------------------------- subcommands


def cmd_gen_survey(args) -> int:
    raw = _load_yaml(args.config)
    cfg = GeneratorConfig(**raw)
    resolved = {"generator": asdict(cfg), "seed": args.seed, "out": args.out}
    _log_config("gen-survey", resolved)
    manifest = generate_survey(cfg, args.seed)
    save_manifest(manifest, args.out)
    (Path(args.out) / "gen_config.json").write_text(
        json.dumps(resolved, sort_keys=True, indent=2))
    print(f"wrote {len(manifest)} patches to {args.out}")
    return 0


def _resolve_run_config(args) -> tr.RunConfig:
    raw = _load_yaml(args.config) if args.config else {}
    cfg = tr.RunConfig.from_dict(raw)
    if args.objective:
        cfg.objective = args.objective
    if args.mode:
        cfg.sampler.mode = args.mode
    if args.r_loc is not None:
        cfg.sampler.r_loc = args.r_loc
    if args.dataset:
        cfg.dataset_path = args.dataset
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.out:
        cfg.out_dir = args.out
    if cfg.sampler.mode == "geo" and cfg.sampler.r_loc <= 0:
        raise tr.TrainerError("geo mode requires --r-loc or a config r_loc value")
    return cfg


def cmd_train(args) -> int:
    cfg = _resolve_run_config(args)
    _log_config("train", cfg.to_dict())
    record = tr.train(cfg)
    print(f"final checkpoint: {record.final_checkpoint}")
    return 0


def cmd_extract(args) -> int:
    resolved = {"checkpoint": args.checkpoint, "dataset": args.dataset, "out": args.out}
    _log_config("extract", resolved)
    manifest = load_manifest(args.dataset)
    table, ids = tr.extract_latents(args.checkpoint, manifest)
    np.savez(args.out, latents=table, ids=ids)
    print(f"wrote {table.shape[0]}x{table.shape[1]} latents to {args.out}")
    return 0


def cmd_eval(args) -> int:
    resolved = {"latents": args.latents, "dataset": args.dataset,
                "pca_dim": args.pca_dim, "split_seed": args.split_seed, "out": args.out}
    _log_config("eval", resolved)
    manifest = load_manifest(args.dataset)
    data = np.load(args.latents)
    labels = manifest.labels()
    if np.any(labels < 0):
        print("error: dataset has unlabelled patches", file=sys.stderr)
        return 1
    report = ev.evaluate_latents(data["latents"], labels, len(manifest.class_names),
                                 split_seed=args.split_seed, pca_dim=args.pca_dim,
                                 config=resolved)
    Path(args.out).write_text(report.to_json())
    base = Path(args.out).with_suffix(".confusion.csv")
    with open(base, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([""] + manifest.class_names)
        for name, row in zip(manifest.class_names, report.confusion):
            w.writerow([name] + row)
    print(f"macro-F1: {report.macro_f1:.4f} -> {args.out}")
    return 0


def _report_from_json(path) -> ev.EvalReport:
    d = json.loads(Path(path).read_text())
    return ev.EvalReport(**d)


def cmd_compare(args) -> int:
    _log_config("compare", {"a": args.a, "b": args.b, "out": args.out})
    rows = ev.compare_runs(_report_from_json(args.a), _report_from_json(args.b))
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["row", "a", "b", "delta", "relative"])
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} delta rows to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    matrix = _load_yaml(args.matrix)
    _log_config("experiment", matrix)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    objectives = matrix.get("objectives", list(tr.OBJECTIVES))
    modes = matrix.get("modes", ["standard", "geo"])
    seeds = matrix.get("seeds", [0])
    pca_dims = matrix.get("pca_dims", [None])
    base = matrix.get("base", {})
    dataset = matrix.get("dataset")
    if dataset is None:
        print("error: matrix must name a dataset", file=sys.stderr)
        return 2
    manifest = load_manifest(dataset)
    labels = manifest.labels()
    n_classes = len(manifest.class_names)

    rows = []
    any_failed = False
    for objective in objectives:
        for mode in modes:
            for dim in pca_dims:
                scores = []
                failed = False
                for seed in seeds:
                    cell = f"{objective}_{mode}_d{dim}_s{seed}"
                    try:
                        cfg = tr.RunConfig.from_dict(dict(base))
                        cfg.objective = objective
                        cfg.sampler.mode = mode
                        cfg.dataset_path = dataset
                        cfg.seed = int(seed)
                        cfg.out_dir = str(out_dir / cell)
                        record = tr.train(cfg)
                        table, _ = tr.extract_latents(record.final_checkpoint, manifest)
                        report = ev.evaluate_latents(table, labels, n_classes,
                                                     split_seed=int(seed), pca_dim=dim)
                        scores.append(report.macro_f1)
                    except Exception as e:
                        print(f"cell {cell} FAILED: {e}", file=sys.stderr)
                        failed = True
                        any_failed = True
                rows.append({
                    "method": f"{'geo-' if mode == 'geo' else ''}{objective}",
                    "dataset": dataset,
                    "pca_dim": dim if dim is not None else "raw",
                    "mean_macro_f1": f"{np.mean(scores):.4f}" if scores else "FAILED",
                    "std_macro_f1": f"{np.std(scores):.4f}" if scores else "FAILED",
                    "n_seeds": len(scores),
                    "status": "FAILED" if failed else "ok",
                })
    with open(out_dir / "comparison.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out_dir / 'comparison.csv'}")
    return 1 if any_failed else 0


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geossl",
                                description="Location-regularised SSL experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-survey", help="generate a synthetic geo-tagged survey")
    g.add_argument("--config", required=True, help="generator YAML (GeneratorConfig keys)")
    g.add_argument("--seed", type=int, default=0, help="generator seed")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(fn=cmd_gen_survey)

    t = sub.add_parser("train", help="train one SSL objective")
    t.add_argument("--config", help="run YAML (RunConfig keys)")
    t.add_argument("--objective", choices=tr.OBJECTIVES, help="config key: objective")
    t.add_argument("--mode", choices=["standard", "geo"], help="config key: sampler.mode")
    t.add_argument("--r-loc", type=float, dest="r_loc", help="config key: sampler.r_loc (metres)")
    t.add_argument("--dataset", help="config key: dataset_path")
    t.add_argument("--seed", type=int, help="config key: seed")
    t.add_argument("--epochs", type=int, help="config key: epochs")
    t.add_argument("--out", help="config key: out_dir")
    t.set_defaults(fn=cmd_train)

    x = sub.add_parser("extract", help="extract latents for every patch")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--dataset", required=True)
    x.add_argument("--out", required=True, help="output .npz")
    x.set_defaults(fn=cmd_extract)

    e = sub.add_parser("eval", help="probe latents and report macro-F1")
    e.add_argument("--latents", required=True, help="npz from extract")
    e.add_argument("--dataset", required=True)
    e.add_argument("--pca-dim", type=int, default=None, dest="pca_dim")
    e.add_argument("--split-seed", type=int, default=0, dest="split_seed")
    e.add_argument("--out", required=True, help="output report JSON")
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("compare", help="delta table between two eval reports")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--out", required=True, help="output CSV")
    c.set_defaults(fn=cmd_compare)

    m = sub.add_parser("experiment", help="run an objectives x modes x seeds grid")
    m.add_argument("--matrix", required=True, help="matrix YAML")
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(fn=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
