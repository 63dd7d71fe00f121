"""Seeded invariant sweeps, runnable from the CLI.

Each sweep returns (name, passed, detail). They cover the soft-sign bound,
exact-derivative cross-checks against central finite differences, the
factorization residuals, the closed-form/generic equivalence on the
second-order example, and estimate monotonicity on a short closed loop.
"""

from __future__ import annotations

import math

import numpy as np

from . import controller as ctl
from .controller import Estimates, evaluate_cascade, soft_sign_gap
from .model import builtin_demo, builtin_synthetic
from .sim import SimConfig, run


def _random_estimates(rng, q, delta_scale=1.0):
    return Estimates(theta_hat=rng.normal(size=q),
                     rho_hat=float(rng.uniform(0.1, 1.0)),
                     delta_hat=float(rng.uniform(0.0, delta_scale)))


def sweep_soft_sign(seed, count=100_000):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1e3, 1e3, size=count)
    sig = rng.uniform(0.0, 1e3, size=count)
    worst_low, worst_high = 0.0, 0.0
    for si, gi in zip(s, sig):
        gap = soft_sign_gap(float(si), float(gi))
        worst_low = min(worst_low, gap)
        worst_high = max(worst_high, gap - gi)
    ok = worst_low >= -1e-12 and worst_high <= 1e-12
    return ("soft-sign bound", ok,
            f"min gap {worst_low:.2e}, max gap-sigma {worst_high:.2e}")


def _fd_partials(f, p, step=1e-6):
    out = []
    for i in range(len(p)):
        hi = list(p)
        lo = list(p)
        hi[i] += step
        lo[i] -= step
        out.append((f(hi) - f(lo)) / (2.0 * step))
    return out


def sweep_derivatives(seed, points=100):
    """Virtual-law partials vs central finite differences, orders 2 and 3."""
    from . import diff
    worst = 0.0
    for builder, span in ((builtin_demo, 1.5), (builtin_synthetic, 0.8)):
        spec, _, gains = builder()
        rng = np.random.default_rng(seed)
        for _ in range(points):
            for i in range(1, spec.n):
                fn = ctl._alpha_fn(spec, gains, gains.gamma_delta, i)
                p = list(rng.uniform(-span, span, size=i + spec.q)) \
                    + [float(rng.uniform(0.0, span))]
                exact = diff.grad(fn, p)
                approx = _fd_partials(fn, p)
                for e, a in zip(exact, approx):
                    rel = abs(e - a) / (1.0 + abs(e))
                    worst = max(worst, rel)
    ok = worst < 1e-6
    return ("exact derivatives vs finite differences", ok,
            f"max relative error {worst:.2e}")


def sweep_factorization(seed, points=100):
    """Residuals of omega = W^T z and Omega = Omega_bar^T z at random points."""
    detail = []
    ok = True
    for builder, span, pts in ((builtin_demo, 2.0, points),
                               (builtin_synthetic, 0.7, max(10, points // 5))):
        spec, _, gains = builder()
        rng = np.random.default_rng(seed)
        for _ in range(pts):
            x = rng.uniform(-span, span, size=spec.n)
            est = _random_estimates(rng, spec.q)
            t = float(rng.uniform(0.0, 10.0))
            try:
                evaluate_cascade(spec, gains, t, x, est, check=True)
            except Exception as exc:  # noqa: BLE001 - report any failure
                ok = False
                detail.append(f"{spec.name}: {exc}")
                break
    return ("factorization residuals", ok,
            "; ".join(detail) if detail else "all residual checks passed")


def sweep_closed_form_equivalence(seed, points=100):
    """Demo closed forms vs quadrature factorization of the same quantities."""
    spec_cf, _, gains = builtin_demo(closed_forms=True)
    spec_ray, _, _ = builtin_demo(closed_forms=False)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(points):
        x = rng.uniform(-2.0, 2.0, size=2)
        est = _random_estimates(rng, 1)
        z, _ = ctl.coordinate_transform(spec_cf, gains, x, est)
        W_cf = ctl.hadamard_W(spec_cf, gains, 2, z, est)
        W_ray = ctl.hadamard_W(spec_ray, gains, 2, z, est)
        worst = max(worst, float(np.max(np.abs(W_cf - W_ray))))
    ok = worst < 1e-8
    return ("closed-form vs quadrature factor W2", ok,
            f"max componentwise difference {worst:.2e}")


def sweep_monotonicity(seed):
    """delta_hat and rho_hat never decrease along a short closed loop."""
    spec, truth, gains = builtin_demo()
    res = run(spec, truth, gains, SimConfig(T=0.5, h=1e-4, decimation=10,
                                            diagnostics=False))
    d_dh = np.diff(res.trace.delta_hat)
    d_rho = np.diff(res.trace.rho_hat)
    ok = bool(np.all(d_dh >= -1e-10) and np.all(d_rho >= -1e-10))
    return ("estimate monotonicity", ok,
            f"min delta_hat step {d_dh.min():.2e}, min rho_hat step {d_rho.min():.2e}")


ALL_SWEEPS = (sweep_soft_sign, sweep_derivatives, sweep_factorization,
              sweep_closed_form_equivalence, sweep_monotonicity)


def run_all(seed=12345):
    """Run every sweep; returns list of (name, ok, detail)."""
    results = []
    for sweep in ALL_SWEEPS:
        try:
            results.append(sweep(seed))
        except Exception as exc:  # noqa: BLE001 - a crash is a failure
            results.append((sweep.__name__, False, f"crashed: {exc}"))
    return results
