from .config import ExperimentSpec, ObjectiveSpec, TargetSpec, default_lr_grid
from .runner import ROW_COLUMNS, TRACE_COLUMNS, read_rows, run_grid, run_single, select_best
from .table import Table, emit_table

__all__ = [
    "ExperimentSpec",
    "ObjectiveSpec",
    "ROW_COLUMNS",
    "TRACE_COLUMNS",
    "Table",
    "TargetSpec",
    "default_lr_grid",
    "emit_table",
    "read_rows",
    "run_grid",
    "run_single",
    "select_best",
]
