"""Single runs, grids and step-size selection over experiment specs."""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import itertools
import math
import os
import statistics

from ..orchestrator import ExperimentResult, run_experiment
from .config import OBJECTIVE_DEFAULTS, ExperimentSpec

TRACE_COLUMNS = ["round", "suboptimality", "grad_norm_sq", "drift", "control_lag", "comm_bytes", "grad_evals", "accuracy"]

SPEC_COLUMNS = [
    "name",
    "algorithm",
    "num_clients",
    "sampled_clients",
    "local_steps",
    "rounds",
    "local_lr",
    "global_lr",
    "prox_mu",
    "control_init",
    "output_mode",
    "target_metric",
    "target_threshold",
    "objective_kind",
]
OBJECTIVE_COLUMNS = sorted({f"obj_{k}" for params in OBJECTIVE_DEFAULTS.values() for k in params})
RESULT_COLUMNS = [
    "seed",
    "rounds_run",
    "final_suboptimality",
    "final_grad_norm_sq",
    "final_accuracy",
    "final_drift",
    "final_control_lag",
    "total_comm_bytes",
    "total_grad_evals",
    "rounds_to_target",
    "diverged",
]
#: Column order of every summary / grid CSV.
ROW_COLUMNS = SPEC_COLUMNS + OBJECTIVE_COLUMNS + RESULT_COLUMNS


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def parse_value(text: str):
    """Inverse of :func:`format_value` for the scalar types rows contain."""
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def write_csv(path, columns, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: parse_value(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def spec_row(spec: ExperimentSpec) -> dict:
    row = {c: getattr(spec, c) for c in SPEC_COLUMNS if hasattr(spec, c)}
    row["target_metric"] = spec.target.metric if spec.target else None
    row["target_threshold"] = float(spec.target.threshold) if spec.target else None
    row["objective_kind"] = spec.objective.kind
    resolved = spec.objective.resolved()
    for col in OBJECTIVE_COLUMNS:
        row[col] = resolved.get(col[4:])
    return row


def result_row(spec: ExperimentSpec, seed: int, result: ExperimentResult) -> dict:
    final = result.final
    row = spec_row(spec)
    row.update(
        seed=seed,
        rounds_run=final.round,
        final_suboptimality=final.suboptimality,
        final_grad_norm_sq=final.grad_norm_sq,
        final_accuracy=final.accuracy,
        final_drift=final.drift,
        final_control_lag=final.control_lag,
        total_comm_bytes=sum(m.comm_bytes for m in result.trace),
        total_grad_evals=sum(m.grad_evals for m in result.trace),
        rounds_to_target=result.rounds_to_target,
        diverged=result.diverged,
    )
    return row


def execute(spec: ExperimentSpec, seed: int) -> ExperimentResult:
    federation, x0 = spec.build(seed)
    target = spec.target
    return run_experiment(
        spec.algorithm_config(),
        federation,
        spec.rounds,
        spec.plan(seed),
        spec.selector(seed),
        None if target is None else target.threshold,
        target_metric="suboptimality" if target is None else target.metric,
        stop_at_target=True if target is None else target.stop,
        x0=x0,
    )


def run_single(spec: ExperimentSpec, out_dir: str | None = None, seeds=None) -> list[dict]:
    """Run ``spec`` once per seed; one result row per seed.

    When an output directory is configured, per-seed traces go to
    ``<out>/<name>/trace_seed<seed>.csv`` and the rows to
    ``<out>/<name>/summary.csv``.
    """
    spec.validate()
    seeds = spec.seeds if seeds is None else list(seeds)
    out = spec.resolve_out_dir(out_dir)
    rows = []
    for seed in seeds:
        result = execute(spec, seed)
        rows.append(result_row(spec, seed, result))
        if out:
            trace = [dataclasses.asdict(m) for m in result.trace]
            write_csv(os.path.join(out, spec.name, f"trace_seed{seed}.csv"), TRACE_COLUMNS, trace)
    if out:
        write_csv(os.path.join(out, spec.name, "summary.csv"), ROW_COLUMNS, rows)
    return rows


def grid_cells(base: ExperimentSpec, axes: dict) -> list[ExperimentSpec]:
    """Cartesian product of ``axes``; the first axis varies slowest."""
    names = list(axes)
    cells = []
    for values in itertools.product(*(axes[n] for n in names)):
        spec = base
        for name, value in zip(names, values):
            spec = spec.with_value(name, value)
        label = ",".join(f"{n}={format_value(v)}" for n, v in zip(names, values))
        spec.name = f"{base.name}/{label}" if label else base.name
        cells.append(spec)
    return cells


def _run_cell(args):
    spec, out_dir, seeds = args
    return run_single(spec, out_dir, seeds)


def run_grid(base: ExperimentSpec, axes: dict, out_dir: str | None = None, seeds=None, workers: int = 1) -> list[dict]:
    """Run every grid cell; rows come back in cell order regardless of ``workers``."""
    cells = grid_cells(base, axes)
    out = base.resolve_out_dir(out_dir)
    jobs = [(cell, out, seeds) for cell in cells]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_run_cell, jobs))
    else:
        chunks = [_run_cell(job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]
    if out:
        write_csv(os.path.join(out, base.name, "grid.csv"), ROW_COLUMNS, rows)
    return rows


def _score(row, metric, maximize):
    value = None if row.get("diverged") else row.get(metric)
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return math.inf
    return -float(value) if maximize else float(value)


def select_best(rows, tune: str = "local_lr", metric: str = "rounds_to_target", maximize: bool = False) -> list[dict]:
    """Keep, for every cell, the rows of the ``tune`` value with the best
    median ``metric`` over seeds.

    Diverged seeds and missing values (target never reached) count as the
    worst possible score. Ties go to the value seen first.
    """
    ignore = {tune, "name", "seed"} | set(RESULT_COLUMNS)
    groups: dict = {}
    for row in rows:
        key = tuple((k, row.get(k)) for k in ROW_COLUMNS if k not in ignore)
        groups.setdefault(key, {}).setdefault(row.get(tune), []).append(row)
    best_rows = []
    for by_value in groups.values():
        scored = [
            (statistics.median(_score(r, metric, maximize) for r in members), j, value)
            for j, (value, members) in enumerate(by_value.items())
        ]
        _, _, best = min(scored)
        best_rows.extend(by_value[best])
    return best_rows
