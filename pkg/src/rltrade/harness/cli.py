"""Command-line entry point: ``rltrade run|sweep|plotdata``.

Exit codes: 0 on success, 2 for unknown names or keys, 3 for invalid values.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from rltrade.harness.config import ConfigError, load_config
from rltrade.harness.runner import (
    emit_plotdata,
    parse_grid,
    read_records,
    run_experiment,
    summary_path,
    sweep,
    write_rows,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rltrade", description="Run reinforcement-learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configured experiment")
    run.add_argument("config", type=Path)
    sweep_p = sub.add_parser("sweep", help="run a config over a Cartesian grid of overrides")
    sweep_p.add_argument("config", type=Path)
    sweep_p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                         help="repeat for several keys")
    for p in (run, sweep_p):
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--jobs", type=int, help="worker processes for replicates")
        p.add_argument("--out", type=Path, help="CSV output path")

    plot = sub.add_parser("plotdata", help="turn a run CSV into tidy long-format rows")
    plot.add_argument("csv", type=Path)
    plot.add_argument("--metric", default="rms_error")
    plot.add_argument("--out", type=Path, help="write here instead of stdout")
    return parser


def _config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    return dataclasses.replace(cfg, **changes) if changes else cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _config(args)
            out = args.out or cfg.out
            result = run_experiment(cfg, out=out)
            if out is None:
                sys.stdout.write(write_rows(result.summary()))
            else:
                print(f"wrote {out} and {summary_path(out)}", file=sys.stderr)
        elif args.command == "sweep":
            cfg = _config(args)
            if not args.grid:
                raise ConfigError("sweep needs at least one --grid entry")
            rows = sweep(cfg, parse_grid(args.grid), out=args.out)
            if args.out is None:
                sys.stdout.write(write_rows(rows))
        else:
            rows = emit_plotdata(read_records(args.csv), args.metric)
            text = write_rows(rows, args.out, ("replicate", "episode", "metric", "value"))
            if args.out is None:
                sys.stdout.write(text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
