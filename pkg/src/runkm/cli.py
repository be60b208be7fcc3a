"""
Command line interface.

    runkm run --config <path> [--out <dir>] [--seed <n>] [--grid-parallel <n>]
    runkm check --config <path>
    runkm summarize <dir>

Exit status is 0 when every run's bound ledger is satisfied, 1 on a ledger
violation or a failed cell, and 2 on usage or configuration errors.
"""

import argparse
import csv
import logging
import sys

from .harness import ConfigError, check_experiment, load_config, run_experiment, summarize_traces


def _parser():
    p = argparse.ArgumentParser(prog="runkm", description="Run inexact running KM tracking experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the experiment grid of a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="run this seed only")
    r.add_argument("--grid-parallel", type=int, default=1, metavar="N",
                   help="number of grid cells run concurrently")
    r.add_argument("-v", "--verbose", action="store_true", help="log per-cell wall time")

    c = sub.add_parser("check", help="validate a config without running it")
    c.add_argument("--config", required=True)

    s = sub.add_parser("summarize", help="summary rows for the traces in a directory")
    s.add_argument("directory")
    return p


def _run(args):
    cfg = load_config(args.config)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    if args.grid_parallel < 1:
        print("error: --grid-parallel must be >= 1", file=sys.stderr)
        return 2
    out = args.out or cfg.out
    seeds = [args.seed] if args.seed is not None else None
    results = run_experiment(cfg, out_dir=out, seeds=seeds, parallel=args.grid_parallel,
                             keep_runs=False)
    status = 0
    for r in results:
        s = r.summary
        if s.error:
            print(f"cell {s.cell} seed {s.seed}: {s.error}", file=sys.stderr)
            status = 1
        elif not s.ledger_ok:
            print(f"cell {s.cell} seed {s.seed}: ledger violation {s.violation}", file=sys.stderr)
            status = 1
    n_ok = sum(1 for r in results if not r.summary.error and r.summary.ledger_ok)
    print(f"{n_ok}/{len(results)} runs satisfied their bound ledgers; output in {out}")
    return status


def _check(args):
    cfg = load_config(args.config)
    problems = check_experiment(cfg)
    for msg in problems:
        print(msg, file=sys.stderr)
    if problems:
        return 1
    print(f"{args.config}: ok ({cfg.scenario}, {len(cfg.cells())} cells x {len(cfg.seeds)} seeds, "
          f"T={cfg.horizon})")
    return 0


def _summarize(args):
    try:
        rows = summarize_traces(args.directory)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if not rows:
        print(f"error: no trace files in {args.directory}", file=sys.stderr)
        return 2
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else int(v) if isinstance(v, bool) else v)
                    for k, v in row.items()})
    return 0 if all(r["ledger_ok"] for r in rows) else 1


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return {"run": _run, "check": _check, "summarize": _summarize}[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
