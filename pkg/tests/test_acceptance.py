"""End-to-end acceptance tests, one per criterion."""

import math
import time

import numpy as np
import pytest

from etabsim import Estimates, builtin_demo, builtin_synthetic, evaluate_cascade
from etabsim.cli import main
from etabsim.verify import (sweep_closed_form_equivalence, sweep_derivatives,
                            sweep_factorization, sweep_soft_sign)

SEED = 20260824


def test_criterion_01_soft_sign_lemma_sweep():
    t0 = time.perf_counter()
    name, ok, detail = sweep_soft_sign(SEED, count=100_000)
    elapsed = time.perf_counter() - t0
    assert ok, detail
    assert elapsed < 1.0, f"sweep took {elapsed:.2f} s"


def test_criterion_02_cascade_partials_vs_finite_differences():
    t0 = time.perf_counter()
    name, ok, detail = sweep_derivatives(SEED, points=100)
    elapsed = time.perf_counter() - t0
    assert ok, detail
    assert elapsed < 10.0, f"sweep took {elapsed:.2f} s"


def test_criterion_03_factorization_residuals_and_w2_equivalence():
    name, ok, detail = sweep_factorization(SEED, points=100)
    assert ok, detail
    name, ok, detail = sweep_closed_form_equivalence(SEED, points=100)
    assert ok, detail


def test_criterion_04_printed_scheme_equivalence():
    spec, _, gains = builtin_demo()
    k1, k2 = gains.k
    G = gains.Gamma[0, 0]
    eps = gains.eps_omega
    dg = 1.0  # the unscaled delta_hat update law
    rng = np.random.default_rng(SEED)
    for _ in range(100):
        t = float(rng.uniform(0.0, 10.0))
        x1, x2 = rng.uniform(-2.0, 2.0, size=2)
        th = float(rng.normal())
        rho = float(rng.uniform(0.1, 1.0))
        dh = float(rng.uniform(0.0, 2.0))

        # straight-line transcription of the second-order scheme
        w1 = x1 * x1
        z1 = x1
        v1 = -0.5 * dh * (w1 + 2.0) * x1 - x1 / (2.0 * eps)
        alpha1 = -k1 * x1 - w1 * th + v1
        z2 = x2 - alpha1
        a1x = -k1 - 2.0 * x1 * th - 0.5 * dh * (3.0 * w1 + 2.0) - 1.0 / (2.0 * eps)
        a1th = -w1
        a1d = -0.5 * (w1 + 2.0) * x1
        W2 = -a1x * x1
        sigma = math.exp(-gains.xi * t)
        slot1 = (1.0
                 - a1x * (-k1 - 0.5 * dh * (w1 + 2.0) - 1.0 / (2.0 * eps))
                 - a1th * G * w1
                 - 0.5 * dg * a1d * (w1 + 2.0) * x1)
        slot2 = (-a1x + a1x * a1th * G * w1
                 - 0.5 * dg * a1d * (W2 * W2 + 1.0) * z2
                 + spec.b_bar * gains.gamma_u / math.sqrt(z2 * z2 + sigma * sigma))
        ob_sq = slot1 * slot1 + slot2 * slot2
        K = k2 + 0.5 * (dh * W2 * W2 + dh + eps * ob_sq + 1.0 / eps)
        u_e = rho * (-K * z2)
        dth = G * (z1 * w1 + z2 * (-a1x * w1))
        drho = gains.gamma_rho * K * z2 * z2
        ddh = dg * (0.5 * (w1 + 2.0) * z1 * z1 + 0.5 * (W2 * W2 + 1.0) * z2 * z2)

        out = evaluate_cascade(spec, gains, t, [x1, x2],
                               Estimates(theta_hat=np.array([th]),
                                         rho_hat=rho, delta_hat=dh),
                               delta_gain=dg)
        tol = 1e-10
        assert out.alpha[0] == pytest.approx(alpha1, rel=tol, abs=tol)
        assert out.z[1] == pytest.approx(z2, rel=tol, abs=tol)
        assert out.Omega_bar[0] == pytest.approx(slot1, rel=tol, abs=tol)
        assert out.Omega_bar[1] == pytest.approx(slot2, rel=tol, abs=tol)
        assert out.K_gain == pytest.approx(K, rel=tol, abs=tol)
        assert out.u_e == pytest.approx(u_e, rel=tol, abs=tol)
        assert out.dtheta_hat[0] == pytest.approx(dth, rel=tol, abs=tol)
        assert out.drho_hat == pytest.approx(drho, rel=tol, abs=tol)
        assert out.ddelta_hat == pytest.approx(ddh, rel=tol, abs=tol)


def test_criterion_05_demo_closed_loop(demo_run, golden):
    result, wall, spec, truth, gains, simcfg = demo_run
    assert wall < 60.0, f"run took {wall:.1f} s"
    tr = result.trace
    for col in (tr.x, tr.z, tr.u, tr.u_e, tr.theta_hat, tr.rho_hat,
                tr.delta_hat, tr.V):
        assert np.all(np.isfinite(col))
        assert np.max(np.abs(col)) < simcfg.guard
    t = tr.t
    sup_early = np.max(np.abs(tr.x[t <= 5.0]))
    sup_late = np.max(np.abs(tr.x[t >= 15.0]))
    assert sup_late <= 0.1 * sup_early
    dth = np.abs(np.gradient(tr.theta_hat[:, 0], t))
    assert np.max(dth[t >= 15.0]) < 1e-3
    # golden regression: event count and final estimates
    assert result.events.count == golden["events"]
    assert result.final_state == pytest.approx(golden["final_state"],
                                               rel=1e-9, abs=1e-12)


def test_criterion_06_trigger_and_zeno(demo_run, golden):
    result, _, spec, truth, gains, simcfg = demo_run
    tr = result.trace
    mu_hat = result.zeno.mu_hat
    assert np.max(np.abs(tr.u_e - tr.u)) <= gains.gamma_u + mu_hat * simcfg.h
    # u is piecewise constant between events
    event_times = np.array([t for t, _ in result.events.events])
    changed = np.nonzero(np.diff(tr.u) != 0.0)[0]
    for i in changed:
        lo, hi = tr.t[i], tr.t[i + 1]
        assert np.any((event_times > lo) & (event_times <= hi)), (lo, hi)
    steps = golden["step_count"]
    reduction = 1.0 - result.events.count / steps
    assert reduction >= golden["reduction_threshold"]
    assert result.zeno.min_interval >= gains.gamma_u / mu_hat - simcfg.h


def test_criterion_07_lyapunov_bound(demo_run):
    result, _, spec, truth, gains, simcfg = demo_run
    d = result.diagnostics
    tr = result.trace
    t = tr.t
    # truth-signal sign discontinuities: sgn(sin t) and sgn(x1 x2)
    flips = []
    for series in (np.sin(t), tr.x[:, 0] * tr.x[:, 1]):
        s = np.sign(series)
        idx = np.nonzero(s[:-1] * s[1:] < 0.0)[0]
        for i in idx:
            a, b = series[i], series[i + 1]
            flips.append(t[i] + (t[i + 1] - t[i]) * a / (a - b))
    flips = np.array(flips) if flips else np.empty(0)
    keep = np.ones(len(t), dtype=bool)
    for tf in flips:
        keep &= np.abs(t - tf) > simcfg.h
    tol = 1e-3 * (1.0 + np.abs(d.Vdot))
    ok = d.Vdot <= d.rhs + tol
    frac = np.mean(ok[keep])
    assert frac >= 0.999, f"bound held at {100 * frac:.3f}% of samples"
    assert np.all(d.V <= d.V[0] + spec.b_bar * gains.gamma_u / gains.xi)


def test_criterion_08_estimate_monotonicity(demo_run):
    result, _, *_ = demo_run
    tr = result.trace
    assert np.min(np.diff(tr.delta_hat)) >= -1e-10
    assert np.min(np.diff(tr.rho_hat)) >= -1e-10


def test_criterion_09_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text("[system]\nname = demo\n\n[sim]\nT = 2.0\nh = 1e-4\n")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        outs.append((out / "trace.csv").read_bytes())
    assert outs[0] == outs[1]


def test_criterion_10_comparison(tmp_path):
    cfg = tmp_path / "cmp.cfg"
    cfg.write_text("[system]\nname = demo\n\n[sim]\nT = 20\nh = 1e-4\n")
    out = tmp_path / "cmp"
    assert main(["compare", str(cfg), "--out", str(out)]) == 0
    lines = (out / "comparison_summary.txt").read_text().splitlines()
    assert len(lines) == 4  # header + exactly 3 data rows
    vals = {}
    for line in lines[1:]:
        parts = line.split()
        vals[parts[0]] = float(parts[3])
    assert set(vals) == {"proposed", "baseline", "controller1"}
    assert vals["proposed"] < vals["baseline"]
    assert vals["proposed"] < vals["controller1"]
