import numpy as np
import pytest

from etabsim import EventLog, TriggerState, UsageError, maybe_fire, zeno_stats


def _fresh():
    return TriggerState(), EventLog()


def test_first_call_always_fires():
    st, log = _fresh()
    u, fired = maybe_fire(st, log, 0.0, 3.2, gamma_u=0.1)
    assert fired and u == 3.2
    assert log.count == 1
    assert log.events[0] == (0.0, 3.2)


def test_holds_below_threshold_and_fires_at_threshold():
    st, log = _fresh()
    maybe_fire(st, log, 0.0, 1.0, gamma_u=0.5)
    u, fired = maybe_fire(st, log, 0.1, 1.49, gamma_u=0.5)
    assert not fired and u == 1.0
    u, fired = maybe_fire(st, log, 0.2, 1.5, gamma_u=0.5)
    assert fired and u == 1.5
    assert log.count == 2


def test_fires_on_negative_excursion():
    st, log = _fresh()
    maybe_fire(st, log, 0.0, 0.0, gamma_u=0.2)
    u, fired = maybe_fire(st, log, 0.1, -0.3, gamma_u=0.2)
    assert fired and u == -0.3


def test_time_regression_rejected():
    st, log = _fresh()
    maybe_fire(st, log, 1.0, 0.0, gamma_u=0.1)
    with pytest.raises(UsageError):
        maybe_fire(st, log, 0.5, 0.0, gamma_u=0.1)


def test_zeno_stats_intervals():
    log = EventLog()
    log.events.extend([(0.0, 0.0), (0.5, 1.0), (0.75, 2.0), (1.75, 3.0)])
    zs = zeno_stats(log)
    assert zs.count == 4
    assert zs.min_interval == pytest.approx(0.25)
    assert zs.mean_interval == pytest.approx((0.5 + 0.25 + 1.0) / 3.0)


def test_zeno_stats_single_event():
    log = EventLog()
    log.events.append((0.0, 1.0))
    zs = zeno_stats(log)
    assert zs.count == 1
    assert zs.min_interval is None
    assert zs.mean_interval is None


def test_zeno_stats_mu_hat_from_trace():
    log = EventLog()
    log.events.append((0.0, 0.0))
    t = np.linspace(0.0, 1.0, 11)
    u_e = 3.0 * t
    zs = zeno_stats(log, t, u_e)
    assert zs.mu_hat == pytest.approx(3.0)
