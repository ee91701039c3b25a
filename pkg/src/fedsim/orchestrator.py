"""The round loop: sampling, local updates, aggregation and metrics."""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Sequence

import numpy as np

from .algorithms import (
    AlgorithmConfig,
    ClientState,
    ControlInit,
    LocalRunResult,
    ServerState,
    Variant,
    apply_control_update,
    control_pass,
    local_update,
    server_aggregate,
)
from .errors import DivergenceError, NumericError, ParameterError, UndefinedMetricError, UnsupportedError
from .numeric import Purpose, RngStream, as_vector
from .objectives.federation import Federation

BYTES_PER_FLOAT = 8


@dataclasses.dataclass(frozen=True)
class SamplingPlan:
    N: int
    S: int
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.S <= self.N:
            raise ParameterError(f"need 1 <= S <= N, got S={self.S}, N={self.N}")

    def sample(self, round: int) -> np.ndarray:
        """Sorted ids of the ``S`` clients taking part in ``round``."""
        if self.S == self.N:
            return np.arange(self.N)
        rng = RngStream(self.seed, round).generator(Purpose.SAMPLING)
        return np.sort(rng.choice(self.N, self.S, replace=False))


@dataclasses.dataclass
class RoundMetrics:
    round: int
    suboptimality: float
    grad_norm_sq: float
    drift: float
    control_lag: float
    comm_bytes: int
    grad_evals: int
    accuracy: float = float("nan")
    # Drift is averaged over the clients that actually ran this round.
    clients_evaluated: int = 0


class OutputMode(str, enum.Enum):
    LAST = "last_iterate"
    WEIGHTED = "weighted"


@dataclasses.dataclass(frozen=True)
class OutputSelector:
    """Which server iterate a run reports.

    ``weighted`` returns ``x^{r-1}`` for ``r = 1..R+1`` with probability
    proportional to ``(1 - mu * eta_tilde / 2) ** (1 - r)``.
    """

    mode: OutputMode = OutputMode.LAST
    mu: float = 0.0
    eta_tilde: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", OutputMode(self.mode))
        if self.mode is OutputMode.WEIGHTED and not 0 <= self.mu * self.eta_tilde / 2 < 1:
            raise ParameterError("weighted output needs 0 <= mu * eta_tilde / 2 < 1")

    def probabilities(self, num_iterates: int) -> np.ndarray:
        r = np.arange(1, num_iterates + 1)
        if self.mode is OutputMode.LAST:
            p = np.zeros(num_iterates)
            p[-1] = 1.0
            return p
        logw = (1 - r) * math.log1p(-self.mu * self.eta_tilde / 2)
        w = np.exp(logw - logw.max())
        return w / w.sum()

    def select(self, iterates: Sequence[np.ndarray]) -> np.ndarray:
        if self.mode is OutputMode.LAST:
            return iterates[-1]
        p = self.probabilities(len(iterates))
        rng = RngStream(self.seed, len(iterates)).generator(Purpose.INIT)
        return iterates[int(rng.choice(len(iterates), p=p))]


def compute_drift(results: Sequence[LocalRunResult]) -> float:
    if not results:
        raise UndefinedMetricError("drift is undefined without client results")
    return float(np.mean([r.drift for r in results]))


def compute_control_lag(clients: Sequence[ClientState], objectives, x_star) -> float:
    """``mean_i ||c_i - grad f_i(x*)||^2``."""
    if x_star is None:
        raise UnsupportedError("control lag needs a known optimum")
    total = 0.0
    for state, obj in zip(clients, objectives):
        diff = state.control - obj.gradient(x_star)
        total += float(diff @ diff)
    return total / len(clients)


def vectors_per_client(variant: Variant) -> int:
    """Model-sized vectors moved per sampled client per round (down + up)."""
    if variant in (Variant.SCAFFOLD_I, Variant.SCAFFOLD_II, Variant.SCAFFOLD_THEORY):
        return 4
    return 2


def init_state(federation: Federation, x0, cfg: AlgorithmConfig, seed: int = 0):
    """Server and client states before round 1."""
    x0 = as_vector(x0)
    if x0.shape != (federation.dim,):
        raise ParameterError(f"x0 has dim {x0.size}, clients have dim {federation.dim}")
    clients = []
    for i, obj in enumerate(federation.clients):
        if cfg.variant.uses_controls and cfg.control_init is ControlInit.WARM_START:
            control = control_pass(x0, obj, cfg, RngStream(seed, 0, i))
        else:
            control = np.zeros_like(x0)
        clients.append(ClientState(i, control))
    c = np.mean([s.control for s in clients], axis=0)
    return ServerState(x0, c, 0), clients


def _measure(federation: Federation, x, r, drift=0.0, lag=float("nan"), comm=0, evals=0, n_eval=0):
    g = federation.gradient(x)
    return RoundMetrics(
        round=r,
        suboptimality=federation.suboptimality(x),
        grad_norm_sq=float(g @ g),
        drift=drift,
        control_lag=lag,
        comm_bytes=comm,
        grad_evals=evals,
        accuracy=federation.accuracy(x),
        clients_evaluated=n_eval,
    )


def _control_lag(federation, cfg, clients):
    if not cfg.variant.uses_controls or federation.x_star is None:
        return float("nan")
    return compute_control_lag(clients, federation.clients, federation.x_star)


def run_round(
    server: ServerState,
    clients: list[ClientState],
    federation: Federation,
    cfg: AlgorithmConfig,
    plan: SamplingPlan,
    executor=None,
):
    """One communication round. Returns ``(server, clients, metrics)``.

    Unsampled client states are passed through untouched. With an
    ``executor`` the sampled clients run concurrently; reductions still
    happen in ascending id order.
    """
    r = server.round + 1
    x, c = server.x, server.control
    sampled = plan.sample(r)
    objs = federation.clients

    global_grad = client_grads = None
    extra_evals = 0
    if cfg.variant is Variant.SCAFFOLD_THEORY:
        client_grads = [obj.gradient(x) for obj in objs]
        global_grad = np.mean(client_grads, axis=0)
        extra_evals = len(objs) - len(sampled)

    def job(i):
        return local_update(
            x,
            c,
            clients[i],
            objs[i],
            cfg,
            RngStream(plan.seed, r, int(i)),
            global_grad,
            None if client_grads is None else client_grads[i],
        )

    if executor is None:
        results = [job(i) for i in sampled]
    else:
        results = list(executor.map(job, sampled))

    new_server = server_aggregate(server, results, sampled, plan.N, cfg)
    new_clients = list(clients)
    if cfg.variant.uses_controls:
        for i, res in zip(sampled, results):
            new_clients[i] = apply_control_update(clients[i], res)

    metrics = _measure(
        federation,
        new_server.x,
        r,
        drift=compute_drift(results),
        lag=_control_lag(federation, cfg, new_clients),
        comm=vectors_per_client(cfg.variant) * len(sampled) * federation.dim * BYTES_PER_FLOAT,
        evals=sum(res.grad_evals for res in results) + extra_evals,
        n_eval=len(sampled),
    )
    return new_server, new_clients, metrics


@dataclasses.dataclass
class ExperimentResult:
    trace: list[RoundMetrics]
    output: np.ndarray
    rounds_to_target: int | None
    diverged: bool = False
    server: ServerState | None = None
    clients: list[ClientState] | None = None
    error: str | None = None

    @property
    def final(self) -> RoundMetrics:
        return self.trace[-1]


def target_reached(metrics: RoundMetrics, metric: str, threshold: float) -> bool:
    """Suboptimality-like metrics must drop to the threshold, accuracy must rise to it."""
    value = getattr(metrics, metric)
    if value is None or math.isnan(value):
        return False
    if metric == "accuracy":
        return value >= threshold
    return value <= threshold


def run_experiment(
    cfg: AlgorithmConfig,
    federation: Federation,
    R: int,
    plan: SamplingPlan,
    selector: OutputSelector = OutputSelector(),
    target: float | None = None,
    *,
    target_metric: str = "suboptimality",
    x0=None,
    stop_at_target: bool = True,
    executor=None,
    keep_iterates: bool | None = None,
) -> ExperimentResult:
    """Run up to ``R`` rounds from ``x0`` (zeros by default).

    Divergence does not raise: the trace is cut at the last finite round and
    the result is flagged ``diverged``.
    """
    if R < 1:
        raise ParameterError("R must be >= 1")
    if plan.N != federation.N:
        raise ParameterError(f"plan has N={plan.N} but federation has {federation.N} clients")
    if target_metric not in {f.name for f in dataclasses.fields(RoundMetrics)}:
        raise ParameterError(f"unknown target metric {target_metric!r}")
    x0 = np.zeros(federation.dim) if x0 is None else x0
    server, clients = init_state(federation, x0, cfg, plan.seed)
    if keep_iterates is None:
        keep_iterates = selector.mode is not OutputMode.LAST

    trace = [_measure(federation, server.x, 0, lag=_control_lag(federation, cfg, clients))]
    iterates = [server.x] if keep_iterates else []
    hit = 0 if target is not None and target_reached(trace[0], target_metric, target) else None
    diverged, error = False, None

    if hit is None or not stop_at_target:
        for _ in range(R):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    server, clients, metrics = run_round(server, clients, federation, cfg, plan, executor)
                if not math.isfinite(metrics.grad_norm_sq):
                    raise DivergenceError("global gradient overflowed", round=metrics.round)
            except (DivergenceError, NumericError) as exc:
                diverged, error = True, str(exc)
                break
            trace.append(metrics)
            if keep_iterates:
                iterates.append(server.x)
            if hit is None and target is not None and target_reached(metrics, target_metric, target):
                hit = metrics.round
                if stop_at_target:
                    break

    if keep_iterates:
        output = selector.select(iterates)
    else:
        output = server.x
    return ExperimentResult(trace, output, hit, diverged, server, clients, error)
