"""Single-process simulator for federated optimisation with control variates."""

from .algorithms import (
    AlgorithmConfig,
    ClientState,
    ControlInit,
    LocalRunResult,
    ServerState,
    Variant,
    fedavg_local,
    fedprox_local,
    scaffold_local,
    scaffold_theory_local,
    server_aggregate,
    sgd_local,
    theory_preset,
)
from .numeric import GradientSample, RngStream, axpy, noisy_gradient
from .orchestrator import (
    ExperimentResult,
    OutputSelector,
    RoundMetrics,
    SamplingPlan,
    compute_control_lag,
    compute_drift,
    init_state,
    run_experiment,
    run_round,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig",
    "ClientState",
    "ControlInit",
    "ExperimentResult",
    "GradientSample",
    "LocalRunResult",
    "OutputSelector",
    "RngStream",
    "RoundMetrics",
    "SamplingPlan",
    "ServerState",
    "Variant",
    "axpy",
    "compute_control_lag",
    "compute_drift",
    "fedavg_local",
    "fedprox_local",
    "init_state",
    "noisy_gradient",
    "run_experiment",
    "run_round",
    "scaffold_local",
    "scaffold_theory_local",
    "server_aggregate",
    "sgd_local",
    "theory_preset",
]
