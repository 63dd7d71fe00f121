import math

import numpy as np
import pytest

from etabsim import (ConfigError, Controller1Params, DomainError,
                     NumericBlowupError, SimConfig, TruthSignals,
                     TruthSignalError, analysis_constants, builtin_demo,
                     lyapunov_diagnostics, run)
from etabsim.sim import baseline_controller, controller1, rk4_step

DEMO = builtin_demo()


def test_rk4_zero_field_is_identity():
    s = np.array([1.0, -2.0])
    out = rk4_step(lambda t, x, u: np.zeros(2), 0.0, s, 0.1, None)
    assert np.array_equal(out, s)


def test_rk4_exponential_decay():
    out = rk4_step(lambda t, x, u: -x, 0.0, np.array([1.0]), 0.1, None)
    assert out[0] == pytest.approx(math.exp(-0.1), abs=1e-7)


def test_rk4_fourth_order_convergence():
    def integrate(h):
        s = np.array([1.0])
        t = 0.0
        while t < 1.0 - 1e-12:
            s = rk4_step(lambda tt, x, u: -x * math.sin(tt + 1.0), t, s, h, None)
            t += h
        return s[0]

    exact = math.exp(math.cos(2.0) - math.cos(1.0))
    e1 = abs(integrate(0.02) - exact)
    e2 = abs(integrate(0.01) - exact)
    assert 10.0 < e1 / e2 < 22.0


def test_rk4_rejects_nonfinite():
    with pytest.raises(NumericBlowupError):
        rk4_step(lambda t, x, u: x * float("nan"), 0.0, np.array([1.0]),
                 0.1, None)


def test_origin_is_equilibrium():
    spec, truth, gains = DEMO
    res = run(spec, truth, gains, SimConfig(T=0.05, x0=(0.0, 0.0),
                                            diagnostics=False))
    assert np.max(np.abs(res.trace.x)) == 0.0
    assert np.max(np.abs(res.trace.u)) == 0.0
    assert res.events.count == 1
    assert res.events.events[0][0] == 0.0


def test_doubling_gamma_u_reduces_events():
    spec, truth, gains = builtin_demo()
    import dataclasses
    res1 = run(spec, truth, gains, SimConfig(T=2.0, diagnostics=False))
    gains2 = dataclasses.replace(gains, gamma_u=2.0 * gains.gamma_u)
    res2 = run(spec, truth, gains2, SimConfig(T=2.0, diagnostics=False))
    assert res2.events.count < res1.events.count


def test_guard_aborts():
    spec, truth, gains = DEMO
    with pytest.raises(NumericBlowupError):
        run(spec, truth, gains, SimConfig(T=1.0, guard=1.0, diagnostics=False))


def test_truth_sign_violation_aborts():
    spec, truth, gains = DEMO
    bad = TruthSignals(theta=truth.theta, b=lambda t, x: -1.0)
    with pytest.raises(TruthSignalError):
        run(spec, bad, gains, SimConfig(T=0.01, diagnostics=False))


def test_truth_bound_violation_aborts():
    spec, truth, gains = DEMO
    bad = TruthSignals(theta=truth.theta, b=lambda t, x: 10.0)
    with pytest.raises(TruthSignalError):
        run(spec, bad, gains, SimConfig(T=0.01, diagnostics=False))


def test_simconfig_validation():
    with pytest.raises(ConfigError):
        SimConfig(T=-1.0)
    with pytest.raises(ConfigError):
        SimConfig(h=0.0)
    with pytest.raises(ConfigError):
        SimConfig(controller="nonsense")
    with pytest.raises(ConfigError):
        SimConfig(demo_delta_law="other")
    with pytest.raises(ConfigError):
        SimConfig(decimation=0)


def test_x0_length_checked():
    spec, truth, gains = DEMO
    with pytest.raises(ConfigError):
        run(spec, truth, gains, SimConfig(T=0.01, x0=(1.0, 2.0, 3.0)))


def test_baseline_transcription_hand_value():
    spec, truth, gains = DEMO
    b = 2.0
    u, dth = baseline_controller([1.0, -4.0], [0.0], gains, b)
    # independent transcription: alpha1=-0.65, z2=-3.35, a1x=-0.65
    z1, z2, a1x = 1.0, -3.35, -0.65
    omega2 = -a1x * 1.0
    dth_ref = 0.01 * (z1 * 1.0 + z2 * omega2)
    u_ref = (-0.05 * z2 - z1 + a1x * (-4.0 + 0.0) + (-1.0) * dth_ref) / b
    assert dth[0] == pytest.approx(dth_ref, rel=1e-12)
    assert u == pytest.approx(u_ref, rel=1e-12)


def test_baseline_zero_state():
    spec, truth, gains = DEMO
    u, dth = baseline_controller([0.0, 0.0], [0.0], gains, 2.0)
    assert u == 0.0 and dth[0] == 0.0


def test_division_guard():
    spec, truth, gains = DEMO
    with pytest.raises(DomainError):
        baseline_controller([1.0, 1.0], [0.0], gains, 1e-12)
    with pytest.raises(DomainError):
        controller1([1.0, 1.0], [0.0], Controller1Params(), gains, 0.0)


def test_controller1_zero_state_and_leakage():
    spec, truth, gains = DEMO
    p = Controller1Params()
    u_e, dth = controller1([0.0, 0.0], [0.0], p, gains, 2.0)
    assert u_e == 0.0 and dth[0] == 0.0
    # with z = 0 the update reduces to pure leakage -Gamma sigma theta_hat
    _, dth = controller1([0.0, 0.0], [3.0], p, gains, 2.0)
    assert dth[0] == pytest.approx(-0.01 * p.sigma_leak * 3.0, rel=1e-12)


def test_controller1_leakage_matches_closed_form():
    spec, truth, gains = DEMO
    p = Controller1Params()
    rate = 0.01 * p.sigma_leak
    th = 1.0
    h = 0.01
    for i in range(200):
        k1 = controller1([0.0, 0.0], [th], p, gains, 2.0)[1][0]
        k2 = controller1([0.0, 0.0], [th + 0.5 * h * k1], p, gains, 2.0)[1][0]
        k3 = controller1([0.0, 0.0], [th + 0.5 * h * k2], p, gains, 2.0)[1][0]
        k4 = controller1([0.0, 0.0], [th + h * k3], p, gains, 2.0)[1][0]
        th += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    assert th == pytest.approx(math.exp(-rate * 2.0), rel=1e-10)


def test_controller1_tanh_saturation():
    spec, truth, gains = DEMO
    p = Controller1Params()
    # huge z2 drives the compensation to -m_bar / b exactly (plus the rest)
    u_small, _ = controller1([0.0, 1e6], [0.0], p, gains, 1.0)
    u_ref, _ = controller1([0.0, 1e6], [0.0],
                           Controller1Params(m_bar=p.m_bar, eps=1e-9,
                                             sigma_leak=p.sigma_leak),
                           gains, 1.0)
    assert u_small == pytest.approx(u_ref, rel=1e-9)


def test_comparison_requires_second_order():
    from etabsim import builtin_synthetic
    spec, truth, gains = builtin_synthetic()
    with pytest.raises(ConfigError):
        run(spec, truth, gains, SimConfig(T=0.01, x0=(0.1, 0.0, 0.0),
                                          controller="baseline"))


def test_trace_csv_column_order(tmp_path):
    spec, truth, gains = DEMO
    res = run(spec, truth, gains, SimConfig(T=0.01, diagnostics=True))
    path = tmp_path / "trace.csv"
    res.trace.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == ("t,x1,x2,z1,z2,u,u_e,theta_hat_1,rho_hat,delta_hat,"
                      "event,V,Vz,rhs")


def test_analysis_constants_constant_truth():
    spec, truth, gains = DEMO
    const = TruthSignals(theta=lambda t, x: (1.5,), b=lambda t, x: 2.0)
    res = run(spec, const, gains, SimConfig(T=0.2, diagnostics=False))
    consts = analysis_constants(res.trace, const, spec)
    assert consts.ell_theta[0] == pytest.approx(1.5, rel=1e-9)
    assert consts.delta_theta == pytest.approx(0.0, abs=1e-9)
    assert consts.ell_b == pytest.approx(2.0)


def test_lyapunov_diagnostics_on_short_run():
    spec, truth, gains = DEMO
    res = run(spec, truth, gains, SimConfig(T=0.5))
    d = res.diagnostics
    assert np.all(np.isfinite(d.V))
    assert np.all(d.Vz >= 0.0)
    assert d.V.shape == res.trace.t.shape
    assert math.isfinite(d.max_violation)
