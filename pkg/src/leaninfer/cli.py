"""Command-line entry point: synth / ingest / embed / reduce / eval / report.

Stages communicate through versioned artifacts in a run directory, so
expensive embeddings are computed once and reused across the evaluation
matrix. Every subcommand accepts the full set of pipeline flags; the resolved
configuration is hashed into every artifact, and the report stage refuses to
aggregate artifacts whose hashes disagree unless forced. ``--workers 1``
guarantees bit-reproducible outputs; higher counts preserve results but may
reorder log lines.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, pipeline
from .pipeline import (
    CLASSIFIERS,
    FRAMEWORKS,
    METHODS,
    PROTOCOLS,
    REDUCERS,
    StageError,
    resolve_config,
)
from .synth import PRESETS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="leaninfer",
        description="Political-leaning inference pipeline over retweet interaction graphs",
    )
    ap.add_argument("--version", action="version", version=f"leaninfer {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data", type=Path, required=True, help="run directory for artifacts")
        p.add_argument("--config", type=Path, help="JSON config overriding defaults")
        p.add_argument("--seed", type=int, help="global seed")
        p.add_argument("--workers", type=int, help="worker count (default $LEANINFER_WORKERS or 1)")
        p.add_argument("--method", choices=METHODS, help="representation method")
        p.add_argument("--reducer", choices=REDUCERS, help="dimensionality reduction")
        p.add_argument("--classifier", choices=CLASSIFIERS)
        p.add_argument("--framework", choices=FRAMEWORKS)
        p.add_argument("--protocol", choices=PROTOCOLS)
        p.add_argument("--dims", type=int)
        p.add_argument("--p", type=float)
        p.add_argument("--q", type=float)
        p.add_argument("--walks-per-node", type=int, dest="walks_per_node")
        p.add_argument("--walk-length", type=int, dest="walk_length")
        p.add_argument("--window", type=int)
        p.add_argument("--fa2-iterations", type=int, dest="fa2_iterations")
        p.add_argument("--perplexity", type=float)
        p.add_argument("--n-neighbors", type=int, dest="n_neighbors")
        p.add_argument("--min-dist", type=float, dest="min_dist")

    p = sub.add_parser("synth", help="generate a synthetic ground-truth dataset")
    common(p)
    p.add_argument("--preset", choices=PRESETS, default="eus7-small")
    p.add_argument("--base-rate", type=float, dest="base_rate")
    p.add_argument("--hub-boost", type=float, dest="hub_boost")
    p.add_argument("--labeled-rate-boost", type=float, dest="labeled_rate_boost")
    p.add_argument("--decay", type=float)

    p = sub.add_parser("ingest", help="load edge/label files into a graph cache")
    common(p)
    p.add_argument("--edges", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--anchors", type=Path)

    p = sub.add_parser("embed", help="build a user representation")
    common(p)
    p.add_argument("--all", action="store_true", help="build all four representations")

    p = sub.add_parser("reduce", help="reduce an embedding to 2-d")
    common(p)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    common(p)
    p.add_argument("--matrix", action="store_true",
                   help="evaluate the full method x classifier x framework matrix")

    p = sub.add_parser("report", help="aggregate reports, emit CSV tables and SVG figures")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="aggregate artifacts even if their config hashes mismatch")
    return ap


def _config_from_args(args) -> dict:
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    data = {}
    for knob in ("preset", "base_rate", "hub_boost", "labeled_rate_boost", "decay"):
        if getattr(args, knob, None) is not None:
            data[knob] = getattr(args, knob)
    if data:
        overrides["data"] = data
    method = {}
    if getattr(args, "method", None):
        method["name"] = args.method
    for knob in ("dims", "p", "q", "walks_per_node", "walk_length", "window", "fa2_iterations"):
        if getattr(args, knob, None) is not None:
            method[knob] = getattr(args, knob)
    if method:
        overrides["method"] = method
    reduce_over = {}
    if getattr(args, "reducer", None):
        reduce_over["name"] = args.reducer
    for knob in ("perplexity", "n_neighbors", "min_dist"):
        if getattr(args, knob, None) is not None:
            reduce_over[knob] = getattr(args, knob)
    if reduce_over:
        overrides["reduce"] = reduce_over
    if getattr(args, "classifier", None):
        overrides["classifier"] = {"family": args.classifier}
    if getattr(args, "framework", None):
        overrides["framework"] = args.framework
    if getattr(args, "protocol", None):
        overrides["protocol"] = args.protocol
    return resolve_config(overrides, getattr(args, "config", None))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config_from_args(args)
    out_dir = args.data
    try:
        if args.command == "synth":
            info = pipeline.stage_synth(cfg, out_dir)
            print(f"synth: {info['n_users']} users, {info['labeled']} labeled -> {out_dir}")
        elif args.command == "ingest":
            info = pipeline.stage_ingest(cfg, args.edges, args.labels, args.anchors, out_dir)
            print(f"ingest: {info['n_users']} users, {info['labeled']} labeled "
                  f"({info['dropped']} labels dropped) -> {out_dir}")
        elif args.command == "embed":
            methods = list(METHODS) if args.all else [args.method or cfg["method"]["name"]]
            for m in methods:
                path = pipeline.stage_embed(cfg, out_dir, method=m)
                print(f"embed: {path}")
        elif args.command == "reduce":
            path = pipeline.stage_reduce(cfg, out_dir, method=args.method, reducer=args.reducer)
            print(f"reduce: {path}")
        elif args.command == "eval":
            if args.matrix:
                info = pipeline.stage_eval_matrix(cfg, out_dir)
                print(f"eval: {info['cells']} cells complete")
                for cell, err in sorted(info["errors"].items()):
                    print(f"eval: cell {cell} failed: {err}", file=sys.stderr)
                if info["errors"]:
                    return 1
            else:
                path = pipeline.stage_eval(cfg, out_dir, method=args.method,
                                           classifier=args.classifier,
                                           framework=args.framework,
                                           protocol=args.protocol,
                                           reducer=args.reducer)
                with open(path, "r", encoding="utf-8") as f:
                    doc = json.load(f)
                print(f"eval: f1_macro={doc['f1_macro']:.4f} -> {path}")
        elif args.command == "report":
            info = pipeline.stage_report(cfg, out_dir, force=args.force)
            print(f"report: {len(info['tables'])} tables, {len(info['figures'])} figures")
            for name in info["skipped"]:
                print(f"report: skipped {name} (config hash mismatch; use --force)", file=sys.stderr)
            if info["skipped"] and not args.force:
                return 1
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
