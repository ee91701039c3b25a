"""Client-side local updates and the server aggregation step.

Every local routine starts from the server model ``x`` and returns a
:class:`LocalRunResult`; the server folds a round's results together with
:func:`server_aggregate`. Routines are pure given their inputs and stream,
so clients of one round can run in any order or in parallel.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .errors import DivergenceError, ParameterError, ProtocolError
from .numeric import ClientObjective, RngStream


class Variant(str, enum.Enum):
    FEDAVG = "fedavg"
    SCAFFOLD_I = "scaffold1"
    SCAFFOLD_II = "scaffold2"
    SCAFFOLD_THEORY = "scaffold_theory"
    FEDPROX = "fedprox"
    SGD = "sgd"

    @property
    def uses_controls(self) -> bool:
        return self in (Variant.SCAFFOLD_I, Variant.SCAFFOLD_II)


class ControlInit(str, enum.Enum):
    ZEROS = "zeros"
    WARM_START = "warm_start"


@dataclasses.dataclass(frozen=True)
class AlgorithmConfig:
    local_lr: float
    global_lr: float = 1.0
    local_steps: int = 1
    variant: Variant = Variant.FEDAVG
    prox_mu: float = 1.0
    control_init: ControlInit = ControlInit.ZEROS
    # Diagnostic switch: keep every control variate at its initial value.
    freeze_controls: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "control_init", ControlInit(self.control_init))
        if not (self.local_lr > 0 and math.isfinite(self.local_lr)):
            raise ParameterError(f"local_lr must be positive and finite, got {self.local_lr}")
        if not (self.global_lr > 0 and math.isfinite(self.global_lr)):
            raise ParameterError(f"global_lr must be positive and finite, got {self.global_lr}")
        if int(self.local_steps) != self.local_steps or self.local_steps < 1:
            raise ParameterError(f"local_steps must be a positive integer, got {self.local_steps}")
        if self.prox_mu < 0:
            raise ParameterError("prox_mu must be >= 0")
        if not math.isfinite(self.effective_lr):
            raise ParameterError("effective step-size overflows")

    @property
    def effective_lr(self) -> float:
        return self.local_steps * self.local_lr * self.global_lr


def theory_preset(beta: float, mu: float, K: int, N: int, S: int, variant=Variant.SCAFFOLD_II) -> AlgorithmConfig:
    """Step sizes satisfying the strongly convex SCAFFOLD rate conditions."""
    eta_g = math.sqrt(S)
    eta_l = min(1.0 / (81.0 * beta * K * eta_g), S / (15.0 * mu * N * K * eta_g))
    return AlgorithmConfig(local_lr=eta_l, global_lr=eta_g, local_steps=K, variant=variant)


@dataclasses.dataclass
class ClientState:
    id: int
    control: np.ndarray


@dataclasses.dataclass
class ServerState:
    x: np.ndarray
    control: np.ndarray
    round: int = 0


@dataclasses.dataclass
class LocalRunResult:
    delta_y: np.ndarray
    delta_c: np.ndarray
    drift: float  # sum_k ||y_k - x||^2 / K
    grad_evals: int
    # Mean of the K local stochastic gradients (before any correction).
    mean_gradient: np.ndarray | None = None


def _diverged(vec) -> bool:
    return not np.isfinite(vec).all()


def _local_loop(x, obj, cfg, stream, correction=None, prox_mu=0.0):
    """K steps of ``y -= lr * (g(y) [+ correction] [+ prox_mu (y - x)])``."""
    K, lr = cfg.local_steps, cfg.local_lr
    y = x.copy()
    drift = 0.0
    grad_sum = np.zeros_like(x)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            g = obj.sample_gradient(y, stream.at(step=k))
            if _diverged(g):
                raise DivergenceError("non-finite local gradient", stream.round, stream.client, k)
            grad_sum += g
            if correction is not None:
                g = g + correction
            if prox_mu:
                g = g + prox_mu * (y - x)
            y = y - lr * g
            if _diverged(y):
                raise DivergenceError("local iterate diverged", stream.round, stream.client, k)
            diff = y - x
            drift += float(diff @ diff)
    return y, drift / K, grad_sum / K


def _result(x, y, drift, evals, mean_grad, delta_c=None):
    return LocalRunResult(
        delta_y=y - x,
        delta_c=np.zeros_like(x) if delta_c is None else delta_c,
        drift=drift,
        grad_evals=evals,
        mean_gradient=mean_grad,
    )


def _require(cfg, *variants):
    if cfg.variant not in variants:
        raise ParameterError(f"{cfg.variant.value} config passed to a {variants[0].value} update")


def fedavg_local(x, obj: ClientObjective, cfg: AlgorithmConfig, stream: RngStream) -> LocalRunResult:
    _require(cfg, Variant.FEDAVG)
    y, drift, mean_grad = _local_loop(x, obj, cfg, stream)
    return _result(x, y, drift, cfg.local_steps, mean_grad)


def fedprox_local(x, obj: ClientObjective, cfg: AlgorithmConfig, stream: RngStream) -> LocalRunResult:
    _require(cfg, Variant.FEDPROX)
    y, drift, mean_grad = _local_loop(x, obj, cfg, stream, prox_mu=cfg.prox_mu)
    return _result(x, y, drift, cfg.local_steps, mean_grad)


def sgd_local(x, obj: ClientObjective, cfg: AlgorithmConfig, stream: RngStream) -> LocalRunResult:
    """One large-batch step: the K local samples are spent on a single
    gradient at ``x`` (the whole local dataset when the client has one)."""
    _require(cfg, Variant.SGD)
    streams = [stream.at(step=k) for k in range(cfg.local_steps)]
    with np.errstate(over="ignore", invalid="ignore"):
        g = obj.full_batch_gradient(x, streams)
        y = x - cfg.local_lr * g
    if _diverged(y):
        raise DivergenceError("large-batch step diverged", stream.round, stream.client, 0)
    diff = y - x
    return _result(x, y, float(diff @ diff), cfg.local_steps, g)


def control_pass(x, obj: ClientObjective, cfg: AlgorithmConfig, stream: RngStream) -> np.ndarray:
    """Extra pass at the server model used by option I and warm starts.

    Uses stream steps ``K .. 2K-1`` so it never reuses a local-step draw.
    """
    K = cfg.local_steps
    return obj.full_batch_gradient(x, [stream.at(step=K + k) for k in range(K)])


def scaffold_local(
    x, c, state: ClientState, obj: ClientObjective, cfg: AlgorithmConfig, stream: RngStream
) -> LocalRunResult:
    """Drift-corrected local steps followed by the control-variate update.

    The returned ``delta_c`` is ``c_i+ - c_i``; the caller applies it to
    ``state`` (see :func:`apply_control_update`).
    """
    _require(cfg, Variant.SCAFFOLD_I, Variant.SCAFFOLD_II)
    y, drift, mean_grad = _local_loop(x, obj, cfg, stream, correction=c - state.control)
    evals = cfg.local_steps
    if cfg.freeze_controls:
        return _result(x, y, drift, evals, mean_grad)
    if cfg.variant is Variant.SCAFFOLD_I:
        c_new = control_pass(x, obj, cfg, stream)
        evals += cfg.local_steps
    else:
        scale = cfg.local_steps * cfg.local_lr
        if scale == 0:
            raise ParameterError("option II needs K * local_lr > 0")
        c_new = state.control - c + (x - y) / scale
    if _diverged(c_new):
        raise DivergenceError("control variate diverged", stream.round, stream.client)
    return _result(x, y, drift, evals, mean_grad, c_new - state.control)


def scaffold_theory_local(
    x, obj: ClientObjective, global_grad, client_grad, cfg: AlgorithmConfig, stream: RngStream
) -> LocalRunResult:
    """Local steps corrected by exact gradients taken at the round's start:
    ``y -= lr * (g_i(y) + grad f(x) - grad f_i(x))``."""
    _require(cfg, Variant.SCAFFOLD_THEORY)
    y, drift, mean_grad = _local_loop(x, obj, cfg, stream, correction=global_grad - client_grad)
    return _result(x, y, drift, cfg.local_steps + 1, mean_grad)


def local_update(x, c, state, obj, cfg, stream, global_grad=None, client_grad=None) -> LocalRunResult:
    v = cfg.variant
    if v is Variant.FEDAVG:
        return fedavg_local(x, obj, cfg, stream)
    if v is Variant.FEDPROX:
        return fedprox_local(x, obj, cfg, stream)
    if v is Variant.SGD:
        return sgd_local(x, obj, cfg, stream)
    if v is Variant.SCAFFOLD_THEORY:
        return scaffold_theory_local(x, obj, global_grad, client_grad, cfg, stream)
    return scaffold_local(x, c, state, obj, cfg, stream)


def apply_control_update(state: ClientState, result: LocalRunResult) -> ClientState:
    return ClientState(state.id, state.control + result.delta_c)


def server_aggregate(server: ServerState, results, sampled, N: int, cfg: AlgorithmConfig) -> ServerState:
    """``x += eta_g/S * sum dy_i`` and ``c += 1/N * sum dc_i``, summed in
    ascending client id."""
    results = list(results)
    sampled = [int(i) for i in sampled]
    if not results:
        raise ProtocolError("no client results to aggregate")
    if len(results) != len(sampled):
        raise ProtocolError("one result per sampled client expected")
    if len(set(sampled)) != len(sampled):
        raise ProtocolError(f"duplicate client ids in {sampled}")
    if any(not 0 <= i < N for i in sampled):
        raise ProtocolError(f"client id out of range in {sampled}")
    order = np.argsort(sampled, kind="stable")
    dy = np.zeros_like(server.x)
    dc = np.zeros_like(server.control)
    for j in order:
        dy += results[j].delta_y
        dc += results[j].delta_c
    x = server.x + (cfg.global_lr / len(results)) * dy
    c = server.control + dc / N
    if _diverged(x) or _diverged(c):
        raise DivergenceError("server model diverged", round=server.round + 1)
    return ServerState(x, c, server.round + 1)
