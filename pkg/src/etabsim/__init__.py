"""Adaptive event-triggered backstepping simulation library.

Implements an adaptive backstepping controller for strict-feedback
nonlinear systems with fast time-varying parameters, an event-triggered
actuation path with a guaranteed minimum inter-event time, a forward-mode
automatic differentiation core used to build the control cascade, and a
fixed-step closed-loop simulator with Lyapunov diagnostics.
"""

__version__ = "0.1.0"

from .controller import (
    CascadeOutput,
    Estimates,
    coordinate_transform,
    damping_v,
    estimate_derivatives,
    evaluate_cascade,
    final_control,
    hadamard_W,
    omega_big_and_bar,
    regressor_omega,
    soft_sign_gap,
    tuning_tau_delta,
    tuning_tau_theta,
    virtual_control,
)
from .errors import (
    ConfigError,
    DomainError,
    EtabsimError,
    FactorizationError,
    NumericBlowupError,
    TruthSignalError,
    UsageError,
)
from .model import (
    SYSTEM_REGISTRY,
    GainConfig,
    SystemSpec,
    TruthSignals,
    builtin_demo,
    builtin_synthetic,
    register_system,
)
from .sim import (
    AnalysisConstants,
    Controller1Params,
    LyapunovDiagnostics,
    RunResult,
    SimConfig,
    Trace,
    analysis_constants,
    lyapunov_diagnostics,
    run,
)
from .trigger import EventLog, TriggerState, ZenoStats, maybe_fire, zeno_stats

__all__ = [
    "__version__",
    "CascadeOutput",
    "Estimates",
    "coordinate_transform",
    "damping_v",
    "estimate_derivatives",
    "evaluate_cascade",
    "final_control",
    "hadamard_W",
    "omega_big_and_bar",
    "regressor_omega",
    "soft_sign_gap",
    "tuning_tau_delta",
    "tuning_tau_theta",
    "virtual_control",
    "ConfigError",
    "DomainError",
    "EtabsimError",
    "FactorizationError",
    "NumericBlowupError",
    "TruthSignalError",
    "UsageError",
    "SYSTEM_REGISTRY",
    "GainConfig",
    "SystemSpec",
    "TruthSignals",
    "builtin_demo",
    "builtin_synthetic",
    "register_system",
    "AnalysisConstants",
    "Controller1Params",
    "LyapunovDiagnostics",
    "RunResult",
    "SimConfig",
    "Trace",
    "analysis_constants",
    "lyapunov_diagnostics",
    "run",
    "EventLog",
    "TriggerState",
    "ZenoStats",
    "maybe_fire",
    "zeno_stats",
]
