"""Experiment specs: JSON config files, validation and problem construction.

A config file looks like::

    {
      "name": "hetero-G10",
      "objective": {"kind": "quadratic_ensemble", "d": 10, "delta": 1.0, "G": 10.0},
      "algorithm": "scaffold2",
      "num_clients": 2, "sampled_clients": 2, "local_steps": 10, "rounds": 200,
      "local_lr": 0.125,
      "seeds": [0, 1, 2],
      "target": {"metric": "suboptimality", "threshold": 1e-6}
    }

Omitted fields take the defaults below; unknown fields are rejected.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import os
from typing import Any

import numpy as np

from ..algorithms import AlgorithmConfig, ControlInit, Variant
from ..errors import ConfigError, ParameterError
from ..objectives import (
    Federation,
    load_csv_dataset,
    make_identical_hessian_ensemble,
    make_lower_bound_clients,
    make_quadratic_ensemble,
    make_synthetic_classification,
    quadratic_federation,
    split_by_similarity,
)
from ..orchestrator import OutputMode, OutputSelector, SamplingPlan

OUT_DIR_ENV = "FEDSIM_OUT_DIR"

_QUAD_COMMON = {"sigma2": 0.0, "seed": 0, "init_scale": 1.0, "mu": 0.1, "beta": 1.0}

#: Parameter defaults per objective kind. ``None`` means "use the run seed".
OBJECTIVE_DEFAULTS: dict[str, dict[str, Any]] = {
    "quadratic_ensemble": {"d": 10, "delta": 1.0, "G": 1.0, "hetero_dims": 1, **_QUAD_COMMON},
    "identical_hessian": {"d": 10, "G": 1.0, **_QUAD_COMMON},
    "lower_bound_pair": {"mu": 1.0, "G": 1.0, "sigma2": 0.0, "x0": 1.0},
    "logistic": {
        "n": 2000,
        "d": 20,
        "classes": 10,
        "separation": 0.6,
        "noise": 1.0,
        "condition": 30.0,
        "data_seed": 0,
        "similarity": 0.0,
        "l2": 0.0,
        "batch_fraction": 0.2,
        "split_seed": None,
    },
    "csv": {"path": "", "similarity": 0.0, "l2": 0.0, "batch_fraction": 0.2, "split_seed": None},
}

_INT_PARAMS = {"d", "hetero_dims", "seed", "n", "classes", "data_seed", "split_seed"}
_STR_PARAMS = {"path"}

TARGET_METRICS = ("suboptimality", "grad_norm_sq", "accuracy", "drift", "control_lag")

ALIASES = {
    "K": "local_steps",
    "eta_l": "local_lr",
    "eta_g": "global_lr",
    "S": "sampled_clients",
    "N": "num_clients",
    "R": "rounds",
    "algo": "algorithm",
}


def default_lr_grid() -> list[float]:
    """Powers of two from 2**-10 to 1."""
    return [2.0**k for k in range(-10, 1)]


@dataclasses.dataclass
class ObjectiveSpec:
    kind: str = "quadratic_ensemble"
    params: dict = dataclasses.field(default_factory=dict)

    def resolved(self) -> dict:
        out = dict(OBJECTIVE_DEFAULTS[self.kind])
        out.update(self.params)
        return out


@dataclasses.dataclass
class TargetSpec:
    metric: str = "suboptimality"
    threshold: float = 1e-6
    stop: bool = True


@dataclasses.dataclass
class ExperimentSpec:
    name: str = "experiment"
    objective: ObjectiveSpec = dataclasses.field(default_factory=ObjectiveSpec)
    algorithm: str = "fedavg"
    num_clients: int = 2
    sampled_clients: int = 2
    local_steps: int = 1
    rounds: int = 100
    local_lr: float = 0.1
    global_lr: float = 1.0
    prox_mu: float = 1.0
    control_init: str = "zeros"
    seeds: list = dataclasses.field(default_factory=lambda: [0])
    target: TargetSpec | None = None
    output_mode: str = "last_iterate"
    out_dir: str | None = None

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentSpec":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = copy.deepcopy(raw)
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError("unknown field", key)
        obj = raw.pop("objective", {})
        if not isinstance(obj, dict):
            raise ConfigError("must be an object", "objective")
        obj = dict(obj)
        kind = obj.pop("kind", "quadratic_ensemble")
        params = obj.pop("params", {})
        if not isinstance(params, dict):
            raise ConfigError("must be an object", "objective.params")
        params = {**params, **obj}
        target = raw.pop("target", None)
        if target is not None:
            if not isinstance(target, dict):
                raise ConfigError("must be an object or null", "target")
            unknown = set(target) - {"metric", "threshold", "stop"}
            if unknown:
                raise ConfigError("unknown field", f"target.{sorted(unknown)[0]}")
            target = TargetSpec(**target)
        spec = cls(objective=ObjectiveSpec(kind, params), target=target, **raw)
        spec.validate()
        return spec

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ExperimentSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    # -- validation ----------------------------------------------------
    def validate(self) -> "ExperimentSpec":
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError("must be a non-empty string", "name")
        _validate_objective(self.objective)
        try:
            Variant(self.algorithm)
        except ValueError:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}", "algorithm") from None
        try:
            ControlInit(self.control_init)
        except ValueError:
            raise ConfigError(f"unknown control_init {self.control_init!r}", "control_init") from None
        try:
            OutputMode(self.output_mode)
        except ValueError:
            raise ConfigError(f"unknown output_mode {self.output_mode!r}", "output_mode") from None
        for field in ("num_clients", "sampled_clients", "local_steps", "rounds"):
            _require_int(getattr(self, field), field, minimum=1)
        if self.sampled_clients > self.num_clients:
            raise ConfigError("cannot exceed num_clients", "sampled_clients")
        if self.objective.kind == "lower_bound_pair" and self.num_clients != 2:
            raise ConfigError("lower_bound_pair has exactly 2 clients", "num_clients")
        for field in ("local_lr", "global_lr"):
            _require_number(getattr(self, field), field, positive=True)
        _require_number(self.prox_mu, "prox_mu")
        if self.prox_mu < 0:
            raise ConfigError("must be >= 0", "prox_mu")
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("must be a non-empty list", "seeds")
        for j, seed in enumerate(self.seeds):
            _require_int(seed, f"seeds[{j}]", minimum=0)
        if self.target is not None:
            if self.target.metric not in TARGET_METRICS:
                raise ConfigError(f"must be one of {TARGET_METRICS}", "target.metric")
            _require_number(self.target.threshold, "target.threshold")
            if not isinstance(self.target.stop, bool):
                raise ConfigError("must be true or false", "target.stop")
        if self.out_dir is not None and not isinstance(self.out_dir, str):
            raise ConfigError("must be a string or null", "out_dir")
        return self

    # -- construction --------------------------------------------------
    def algorithm_config(self) -> AlgorithmConfig:
        return AlgorithmConfig(
            local_lr=self.local_lr,
            global_lr=self.global_lr,
            local_steps=self.local_steps,
            variant=Variant(self.algorithm),
            prox_mu=self.prox_mu,
            control_init=ControlInit(self.control_init),
        )

    def build(self, seed: int) -> tuple[Federation, np.ndarray]:
        """The federation and starting point for one seed."""
        try:
            return build_problem(self.objective, self.num_clients, seed)
        except ParameterError as exc:
            raise ConfigError(str(exc), "objective") from exc

    def plan(self, seed: int) -> SamplingPlan:
        return SamplingPlan(self.num_clients, self.sampled_clients, seed)

    def selector(self, seed: int) -> OutputSelector:
        return OutputSelector(OutputMode(self.output_mode), seed=seed)

    def resolve_out_dir(self, override: str | None = None) -> str | None:
        return override or os.environ.get(OUT_DIR_ENV) or self.out_dir

    # -- grid support ----------------------------------------------------
    def with_value(self, axis: str, value) -> "ExperimentSpec":
        """A copy with one field (or objective parameter) replaced."""
        spec = copy.deepcopy(self)
        field = ALIASES.get(axis, axis)
        top = {f.name for f in dataclasses.fields(self)} - {"objective", "target"}
        if field in top:
            setattr(spec, field, value)
        elif field.startswith("objective."):
            spec.objective.params[field.split(".", 1)[1]] = value
        elif field in OBJECTIVE_DEFAULTS[self.objective.kind]:
            spec.objective.params[field] = value
        elif field == "target.threshold" and spec.target is not None:
            spec.target.threshold = value
        else:
            raise ConfigError("not a grid-able field", axis)
        try:
            spec.validate()
        except ConfigError as exc:
            raise ConfigError(str(exc), f"axis {axis}") from None
        return spec


def _require_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"must be an integer, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", path)


def _require_number(value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"must be a finite number, got {value!r}", path)
    if positive and value <= 0:
        raise ConfigError(f"must be positive, got {value}", path)


def _validate_objective(obj: ObjectiveSpec):
    if obj.kind not in OBJECTIVE_DEFAULTS:
        raise ConfigError(f"unknown kind {obj.kind!r}", "objective.kind")
    allowed = OBJECTIVE_DEFAULTS[obj.kind]
    for key, value in obj.params.items():
        path = f"objective.{key}"
        if key not in allowed:
            raise ConfigError(f"not a parameter of {obj.kind}", path)
        if key in _STR_PARAMS:
            if not isinstance(value, str):
                raise ConfigError("must be a string", path)
        elif key in _INT_PARAMS:
            if value is None and allowed[key] is None:
                continue
            _require_int(value, path, minimum=0)
        else:
            _require_number(value, path)
    p = obj.resolved()
    if obj.kind == "csv" and not p["path"]:
        raise ConfigError("csv objective needs a path", "objective.path")
    if "similarity" in p and not 0 <= p["similarity"] <= 100:
        raise ConfigError("must be in [0, 100]", "objective.similarity")
    if "batch_fraction" in p and not 0 < p["batch_fraction"] <= 1:
        raise ConfigError("must be in (0, 1]", "objective.batch_fraction")


def build_problem(obj: ObjectiveSpec, N: int, seed: int) -> tuple[Federation, np.ndarray]:
    p = obj.resolved()
    kind = obj.kind
    if kind == "lower_bound_pair":
        fed = quadratic_federation(make_lower_bound_clients(p["mu"], p["G"], p["sigma2"]))
        return fed, np.array([float(p["x0"])])
    if kind in ("quadratic_ensemble", "identical_hessian"):
        if kind == "quadratic_ensemble":
            clients = make_quadratic_ensemble(
                N,
                p["d"],
                p["delta"],
                p["G"],
                p["seed"],
                mu=p["mu"],
                beta=p["beta"],
                hetero_dims=p["hetero_dims"],
                sigma2=p["sigma2"],
            )
        else:
            clients = make_identical_hessian_ensemble(
                N, p["d"], p["G"], p["seed"], mu=p["mu"], beta=p["beta"], sigma2=p["sigma2"]
            )
        x0 = np.full(p["d"], p["init_scale"] / math.sqrt(p["d"]))
        return quadratic_federation(clients), x0
    if kind == "logistic":
        data = make_synthetic_classification(
            p["n"],
            p["d"],
            p["classes"],
            p["data_seed"],
            separation=p["separation"],
            noise=p["noise"],
            condition=p["condition"],
        )
    else:
        data = load_csv_dataset(p["path"])
    split_seed = seed if p["split_seed"] is None else p["split_seed"]
    clients = split_by_similarity(
        data, p["similarity"], N, split_seed, l2=p["l2"], batch_fraction=p["batch_fraction"]
    )
    return Federation(clients, eval_data=data), np.zeros(data.param_dim)

