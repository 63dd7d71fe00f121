"""Event-triggering mechanism: hold, fire, log, and Zeno statistics.

The actuator applies u(t) = u_e(t_k) on [t_k, t_{k+1}); the next event
fires when |u_e(t) - u(t)| >= gamma_u. The very first call fires
unconditionally (t_1 = 0) to initialize the held value. Detection is
discrete: the rule is checked once per integrator step at the step start,
so an event can land up to one step late, bounding the threshold overshoot
by max|du_e/dt| * h.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .errors import ConfigError, UsageError


@dataclass
class TriggerState:
    """Single-run mutable trigger state."""

    k: int = 0
    t_k: float = 0.0
    u_held: float = 0.0
    u_e_last: float = 0.0
    _t_prev: Optional[float] = None
    started: bool = False


@dataclass
class EventLog:
    """Sequence of fired events (t_k, u_e(t_k))."""

    events: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def count(self):
        return len(self.events)


@dataclass(frozen=True)
class ZenoStats:
    """Inter-event interval summary plus an empirical slew bound."""

    count: int
    min_interval: Optional[float]
    mean_interval: Optional[float]
    mu_hat: Optional[float]


def maybe_fire(state: TriggerState, log: EventLog, t: float, u_e: float,
               gamma_u: float) -> Tuple[float, bool]:
    """Apply the hold/fire rule at time t; returns (applied input, fired)."""
    if gamma_u <= 0.0:
        raise ConfigError(f"gamma_u = {gamma_u} must be positive")
    if state._t_prev is not None and t < state._t_prev:
        raise UsageError(f"time ran backwards: {t} < {state._t_prev}")
    state._t_prev = t
    state.u_e_last = u_e
    fired = (not state.started) or abs(u_e - state.u_held) >= gamma_u
    if fired:
        state.started = True
        state.k += 1
        state.t_k = t
        state.u_held = u_e
        log.events.append((t, u_e))
    return state.u_held, fired


def zeno_stats(log: EventLog, trace_t=None, trace_u_e=None) -> ZenoStats:
    """Interval statistics; mu_hat is max |du_e/dt| finite-differenced
    over the supplied trace samples (None when no trace is given)."""
    mu_hat = None
    if trace_t is not None and len(trace_t) >= 2:
        mu = 0.0
        for i in range(1, len(trace_t)):
            dt = trace_t[i] - trace_t[i - 1]
            if dt > 0.0:
                mu = max(mu, abs(trace_u_e[i] - trace_u_e[i - 1]) / dt)
        mu_hat = mu
    if log.count < 2:
        return ZenoStats(count=log.count, min_interval=None,
                         mean_interval=None, mu_hat=mu_hat)
    ts = [t for t, _ in log.events]
    gaps = [b - a for a, b in zip(ts, ts[1:])]
    return ZenoStats(count=log.count,
                     min_interval=min(gaps),
                     mean_interval=sum(gaps) / len(gaps),
                     mu_hat=mu_hat)
