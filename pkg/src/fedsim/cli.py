"""``fedsim`` command line: run, grid, table, validate."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError
from .harness import ExperimentSpec, default_lr_grid, emit_table, read_rows, run_grid, run_single, select_best
from .harness.runner import ROW_COLUMNS, write_csv

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def parse_axis(text: str) -> tuple[str, list]:
    """``name=v1,v2,...``; ``name=pow2`` expands to the default step-size grid."""
    if "=" not in text:
        raise ConfigError("expected name=v1,v2,...", f"--axis {text}")
    name, _, raw = text.partition("=")
    name = name.strip()
    if raw.strip() == "pow2":
        return name, default_lr_grid()
    values = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            raise ConfigError("empty value", f"--axis {text}")
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return name, values


def parse_seeds(text: str | None):
    if text is None:
        return None
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}", "--seeds") from None


def _summarise(rows) -> int:
    for row in rows:
        print(
            f"{row['name']} seed={row['seed']} rounds={row['rounds_run']} "
            f"subopt={row['final_suboptimality']:.6g} acc={row['final_accuracy']:.4g} "
            f"rounds_to_target={row['rounds_to_target']} diverged={row['diverged']}"
        )
    if rows and all(r["diverged"] for r in rows):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.config)
    return _summarise(run_single(spec, args.out, parse_seeds(args.seeds)))


def cmd_grid(args) -> int:
    spec = ExperimentSpec.load(args.config)
    axes = dict(parse_axis(a) for a in args.axis or [])
    rows = run_grid(spec, axes, args.out, parse_seeds(args.seeds), workers=args.workers)
    out = spec.resolve_out_dir(args.out)
    if args.select_best:
        best = select_best(rows, tune=args.tune, metric=args.tune_metric, maximize=args.maximize)
        if out:
            write_csv(os.path.join(out, spec.name, "best.csv"), ROW_COLUMNS, best)
        rows = best
    return _summarise(rows)


def cmd_table(args) -> int:
    rows = read_rows(args.rows)
    table = emit_table(rows, [g for g in args.group_by.split(",") if g], args.metric, args.out)
    sys.stdout.write(table.to_text())
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = ExperimentSpec.load(args.config)
    spec.build(spec.seeds[0])  # catches parameter combinations only the builders know about
    print(f"{args.config}: ok ({spec.name}, {spec.algorithm}, {spec.objective.kind})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment for each seed")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides config and $FEDSIM_OUT_DIR)")
    p.add_argument("--seeds", help="comma-separated seeds overriding the config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="run the Cartesian product of --axis values")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", action="append", help="name=v1,v2,... (repeatable); name=pow2 for 2^-10..2^0")
    p.add_argument("--out")
    p.add_argument("--seeds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--select-best", action="store_true", help="keep only the best --tune value per cell")
    p.add_argument("--tune", default="local_lr")
    p.add_argument("--tune-metric", default="rounds_to_target")
    p.add_argument("--maximize", action="store_true")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("table", help="group result rows into a summary table")
    p.add_argument("--rows", required=True)
    p.add_argument("--group-by", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--out", help="write <out>.csv and <out>.txt")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("validate", help="check a config file without running it")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
