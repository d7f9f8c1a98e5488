"""Command-line entry point: ``evossl run|tune|report|fetch``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config


def _run(args) -> int:
    from .harness import run_experiment

    cfg = load_config(args.config)
    rep = run_experiment(cfg, workers=args.workers)
    print(f"computed {rep.computed}, skipped {rep.skipped}, failed {len(rep.failed)} -> {cfg.output_dir}")
    return rep.exit_code


def _tune(args) -> int:
    from .harness import ProtocolError, run_tuning

    cfg = load_config(args.config)
    try:
        sel = run_tuning(cfg, args.stage, force=args.force, method=args.method, workers=args.workers)
    except ProtocolError as exc:
        print(exc, file=sys.stderr)
        return 2
    print(f"stage {args.stage} selected {sel['selected']}")
    return 0


def _report(args) -> int:
    from .harness import write_report

    try:
        paths = write_report(args.dir)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


def _fetch(args) -> int:
    from .openml import FetchError, fetch_openml

    try:
        ds = fetch_openml(args.openml_id, cache_dir=args.cache_dir)
    except (FetchError, OSError) as exc:
        print(f"fetch failed: {exc}", file=sys.stderr)
        return 1
    print(f"{ds.name}: {ds.n} rows, {ds.d} features, {ds.n_classes} classes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evossl")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every method x dataset x lf x seed cell")
    r.add_argument("-c", "--config", required=True)
    r.add_argument("--workers", type=int, default=None)
    r.set_defaults(func=_run)

    t = sub.add_parser("tune", help="sweep one staged tuning grid on the development datasets")
    t.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    t.add_argument("-c", "--config", required=True)
    t.add_argument("--method", choices=("ccssl", "eassl"), default="ccssl")
    t.add_argument("--force", action="store_true", help="allow datasets outside the development set")
    t.add_argument("--workers", type=int, default=None)
    t.set_defaults(func=_tune)

    rep = sub.add_parser("report", help="tables and plots from a runs directory")
    rep.add_argument("-d", "--dir", required=True)
    rep.set_defaults(func=_report)

    f = sub.add_parser("fetch", help="download an OpenML dataset into the cache")
    f.add_argument("--openml-id", type=int, required=True)
    f.add_argument("--cache-dir", default=None)
    f.set_defaults(func=_fetch)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
