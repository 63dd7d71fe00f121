"""The adaptive event-triggered backstepping control law.

One evaluation maps (t, x, estimates) to the commanded input u_e plus every
intermediate quantity of the recursion: transformed coordinates z_i,
virtual controls alpha_i, regressors omega_i and their factors W_i, tuning
functions, damping terms, the Omega aggregate and its factor Omega_bar,
the feedback gain K, and the estimate time-derivatives.

The recursion for a system of order n:

  z_1 = x_1,  z_i = x_i - alpha_{i-1}
  omega_i = phi_i - sum_{l<i} (d alpha_{i-1}/d x_l) phi_l,  omega_i = W_i^T z_i
  tau_theta_i = tau_theta_{i-1} + omega_i z_i
  tau_delta_i = tau_delta_{i-1} + (1/2)(|W_i|_F^2 + n+1-i) z_i^2
  alpha_i = -k_i z_i - omega_i^T theta_hat + v_i - z_{i-1}
            + sum_{l<i} (d alpha_{i-1}/d x_l) x_{l+1}
            + (d alpha_{i-1}/d theta_hat) Gamma tau_theta_i
            + sum_{l=2}^{i-1} (d alpha_{l-1}/d theta_hat) Gamma omega_i z_l

with damping v_i that dominates the time-varying parameter residual via
its estimated radius delta_hat. The final step folds the remaining cross
terms into Omega, factors it as Omega_bar^T z, and sets

  u_bar = -K z_n,   u_e = rho_hat u_bar,
  K = k_n + (1/2)(delta_hat |W_n|_F^2 + delta_hat
                  + eps_omega |Omega_bar|^2 + 1/eps_omega).

``delta_gain`` is the gain of the delta_hat update law; it also scales the
update-compensation terms inside v_i and Omega so that the adaptation is
exactly cancelled in the closed-loop energy balance. Passing 1.0 selects
the unscaled update-law variant (see sim.SimConfig.demo_delta_law).

All partial derivatives are exact (forward-mode duals); no finite
differences anywhere in the control path.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import diff
from .diff import Dual, dexp, dsqrt, jet, value
from .errors import ConfigError, EtabsimError, FactorizationError, NumericBlowupError
from .model import GainConfig, SystemSpec

_W_TOL = 1e-8
_TWO_PATH_TOL = 1e-12


@dataclass(frozen=True)
class Estimates:
    """The three adapted quantities."""

    theta_hat: np.ndarray
    rho_hat: float
    delta_hat: float

    def __post_init__(self):
        object.__setattr__(self, "theta_hat",
                           np.atleast_1d(np.asarray(self.theta_hat, dtype=float)))
        object.__setattr__(self, "rho_hat", float(self.rho_hat))
        object.__setattr__(self, "delta_hat", float(self.delta_hat))


@dataclass(frozen=True)
class CascadeOutput:
    """Everything produced by one controller evaluation."""

    z: np.ndarray
    alpha: np.ndarray
    omega: list
    W: list
    tau_theta: np.ndarray
    tau_delta: float
    v: np.ndarray
    Omega: float
    Omega_bar: np.ndarray
    kappa: float
    K_gain: float
    u_bar: float
    u_e: float
    dtheta_hat: np.ndarray
    drho_hat: float
    ddelta_hat: float
    sigma: float


def soft_sign_gap(s: float, sigma: float) -> float:
    """Gap |s| - s^2 / sqrt(s^2 + sigma^2), which lies in [0, sigma]."""
    if sigma < 0.0:
        raise ConfigError(f"sigma = {sigma} must be nonnegative")
    den = math.sqrt(s * s + sigma * sigma)
    if den == 0.0:
        # both squares underflowed; the gap is zero to working precision
        return 0.0
    return abs(s) - s * s / den


def tuning_tau_theta(omega: Sequence, z: Sequence, upto: int):
    """Partial sum sum_{j<=upto} omega_j z_j (vector of length q)."""
    if not (1 <= upto <= len(z)):
        raise ConfigError(f"upto = {upto} out of range 1..{len(z)}")
    q = len(omega[0])
    acc = [0.0] * q
    for j in range(upto):
        for r in range(q):
            acc[r] = acc[r] + omega[j][r] * z[j]
    return acc


def tuning_tau_delta(W: Sequence, z: Sequence, n: int, upto: int):
    """Partial sum sum_{j<=upto} (1/2)(|W_j|_F^2 + n+1-j) z_j^2."""
    if not (1 <= upto <= len(z)):
        raise ConfigError(f"upto = {upto} out of range 1..{len(z)}")
    acc = 0.0
    for j in range(1, upto + 1):
        acc = acc + 0.5 * (_fro2(W[j - 1]) + (n + 1 - j)) * z[j - 1] * z[j - 1]
    return acc


def _fro2(rows):
    """Squared Frobenius norm of a matrix stored as rows of entries."""
    acc = 0.0
    for row in rows:
        for e in row:
            acc = acc + e * e
    return acc


def _dot(a, b):
    acc = 0.0
    for x, y in zip(a, b):
        acc = acc + x * y
    return acc


def _mat_vec(rows, v):
    return [_dot(r, v) for r in rows]


# ---------------------------------------------------------------------------
# the recursion


class _Chain:
    """Scratch state for one pass through steps 1..i of the recursion."""

    __slots__ = ("z", "alpha", "omega", "W", "tau_theta", "tau_delta", "v",
                 "partials")

    def __init__(self):
        self.z = []
        self.alpha = []
        self.omega = []
        self.W = []
        self.tau_theta = None
        self.tau_delta = 0.0
        self.v = []
        # partials[j] for j >= 2 holds (dx, dth, ddh) of alpha_{j-1},
        # evaluated at the current point; index 0 and 1 are None
        self.partials = [None, None]


def _alpha_fn(spec, gains, dg, j):
    """alpha_j as a pure function of (x_1..x_j, theta_hat, delta_hat)."""
    q = spec.q

    def f(args):
        xs = args[:j]
        th = args[j:j + q]
        dh = args[j + q]
        ch = _run_chain(spec, gains, dg, j, xs, th, dh, check=False)
        return ch.alpha[j - 1]

    return f


def _omega_fn_of_z(spec, gains, dg, j, th, dh):
    """omega_j as a function of the transformed prefix z_1..z_j.

    Uses the explicit inverse transform x_1 = z_1, x_l = z_l + alpha_{l-1};
    the triangular structure makes the inverse closed-form.
    """

    def g(zbar):
        xs = [zbar[0]]
        for l in range(2, j + 1):
            ch = _run_chain(spec, gains, dg, l - 1, xs, th, dh, check=False)
            xs.append(zbar[l - 1] + ch.alpha[l - 2])
        return _omega_value(spec, gains, dg, j, xs, th, dh)

    return g


def _omega_value(spec, gains, dg, j, xs, th, dh):
    phi_j = list(spec.phi[j - 1](list(xs[:j])))
    if j == 1:
        return phi_j
    p = list(xs[:j - 1]) + list(th) + [dh]
    _, grad_a = jet(_alpha_fn(spec, gains, dg, j - 1), p)
    out = phi_j
    for l in range(1, j):
        phi_l = list(spec.phi[l - 1](list(xs[:l])))
        dax = grad_a[l - 1]
        out = [o - dax * pl for o, pl in zip(out, phi_l)]
    return out


@functools.lru_cache(maxsize=8)
def _leggauss_cached(nodes):
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    return tuple(xs.tolist()), tuple(ws.tolist())


def _ray_factor(gfun, zlist, nodes=16):
    """Quadrature factor M with g(z) = M z; dual-safe (no numpy inside)."""
    m = len(zlist)
    g0 = gfun([0.0] * m)
    r = len(g0)
    n0 = math.sqrt(sum(value(c) ** 2 for c in g0))
    if n0 > 1e-10:
        raise FactorizationError(
            f"factorization requires g(0)=0, got |g(0)| = {n0:.3e}", residual=n0)
    xs, ws = _leggauss_cached(nodes)
    M = [[0.0] * m for _ in range(r)]
    for xq, wq in zip(xs, ws):
        s = 0.5 * (xq + 1.0)
        w = 0.5 * wq
        rows = diff.jacobian(gfun, [s * c for c in zlist])
        for a in range(r):
            Ma = M[a]
            row = rows[a]
            for b in range(m):
                Ma[b] = Ma[b] + w * row[b]
    return M


def _alpha_fn_of_z(spec, gains, dg, l, th, dh):
    """alpha_l as a function of the transformed prefix z_1..z_l."""

    def g(zbar):
        xs = [zbar[0]]
        for m in range(2, l + 1):
            sub = _run_chain(spec, gains, dg, m - 1, xs, th, dh, check=False)
            xs.append(zbar[m - 1] + sub.alpha[m - 2])
        sub = _run_chain(spec, gains, dg, l, xs, th, dh, check=False)
        return [sub.alpha[l - 1]]

    return g


def _assemble_omega_bar(spec, gains, dg, ch, th, dh, dax, dath, dad,
                        Wn_sq, soft_gain):
    """Factor Omega termwise as Omega_bar with Omega = Omega_bar^T z.

    Every summand of Omega is linear in some z_m with coefficients built
    from quantities the recursion already produced; only the virtual laws
    alpha_l (which enter through x_{l+1} = z_{l+1} + alpha_l) need their
    own ray factorization. This avoids factorizing Omega as a whole, which
    would nest one quadrature inside another. Factors are not unique; the
    residual check accepts any exact one.
    """
    n = spec.n
    q = spec.q
    z = ch.z
    zn = z[n - 1]
    Gr = gains._Gamma_rows
    Wn = ch.W[n - 1]
    slots = [0.0] * n
    slots[n - 2] = slots[n - 2] + 1.0
    # omega_n^T theta_hat
    for l in range(n):
        slots[l] = slots[l] + _dot(Wn[l], th)
    # - sum_l (d alpha_{n-1}/d x_l) x_{l+1}, with x_{l+1} = z_{l+1} + alpha_l
    for l in range(1, n):
        slots[l] = slots[l] - dax[l - 1]
        cf = _ray_factor(_alpha_fn_of_z(spec, gains, dg, l, th, dh), z[:l])
        for m in range(l):
            slots[m] = slots[m] - dax[l - 1] * cf[0][m]
    # - Psi_theta
    for l in range(n):
        Cl = [0.0] * q
        for j in range(l + 1, n + 1):
            Wj = ch.W[j - 1]
            zj = z[j - 1]
            for r in range(q):
                Cl[r] = Cl[r] + zj * Wj[l][r]
        slots[l] = slots[l] - _dot(dath, _mat_vec(Gr, Cl))
    Gw = _mat_vec(Gr, ch.omega[n - 1])
    for j in range(2, n):
        slots[j - 1] = slots[j - 1] - _dot(ch.partials[j][1], Gw)
    # - Psi_delta
    for j in range(1, n + 1):
        wsq_j = _fro2(ch.W[j - 1])
        slots[j - 1] = slots[j - 1] - dg * dad * 0.5 * (wsq_j + (n + 1 - j)) * z[j - 1]
    for j in range(2, n):
        slots[j - 1] = slots[j - 1] - dg * 0.5 * (Wn_sq + 1.0) * zn * ch.partials[j][2]
    slots[n - 1] = slots[n - 1] + soft_gain
    return slots


def _chain_W(spec, gains, dg, j, ch, th, dh, check):
    """The factor W_j with omega_j = W_j^T (z_1..z_j)."""
    zb = ch.z[:j]
    cf = spec.closed_form_W[j - 1] if spec.closed_form_W else None
    if cf is not None:
        W = [list(row) for row in cf(zb, th, dh, gains, dg)]
    else:
        M = _ray_factor(_omega_fn_of_z(spec, gains, dg, j, th, dh), zb)
        # M is q x j; W_j is j x q
        W = [[M[r][l] for r in range(spec.q)] for l in range(j)]
    if check:
        resid = 0.0
        norm = 0.0
        for r in range(spec.q):
            recon = sum(value(W[l][r]) * value(zb[l]) for l in range(j))
            resid += (recon - value(ch.omega[j - 1][r])) ** 2
            norm += value(ch.omega[j - 1][r]) ** 2
        resid = math.sqrt(resid)
        tol = _W_TOL * (1.0 + math.sqrt(norm))
        if resid > tol:
            raise FactorizationError(
                f"|omega_{j} - W^T z| = {resid:.3e} exceeds {tol:.3e}",
                residual=resid)
    return W


def _run_chain(spec, gains, dg, i, xs, th, dh, check=True):
    """Run the recursion through step i (alpha computed for steps < n)."""
    n = spec.n
    ch = _Chain()
    Gr = gains._Gamma_rows
    inv2e = 0.5 / gains.eps_omega
    for j in range(1, i + 1):
        # transformed coordinate
        if j == 1:
            zj = xs[0]
        else:
            zj = xs[j - 1] - ch.alpha[j - 2]
        ch.z.append(zj)
        # partials of the previous virtual law
        if j >= 2:
            p = list(xs[:j - 1]) + list(th) + [dh]
            _, ga = jet(_alpha_fn(spec, gains, dg, j - 1), p)
            pj = (ga[:j - 1], ga[j - 1:j - 1 + spec.q], ga[j - 1 + spec.q])
            ch.partials.append(pj)
        # regressor omega_j
        phi_j = list(spec.phi[j - 1](list(xs[:j])))
        if j == 1:
            omega_j = phi_j
        else:
            dax = ch.partials[j][0]
            omega_j = phi_j
            for l in range(1, j):
                phi_l = list(spec.phi[l - 1](list(xs[:l])))
                omega_j = [o - dax[l - 1] * pl for o, pl in zip(omega_j, phi_l)]
        ch.omega.append(omega_j)
        # Hadamard factor and tuning functions
        W_j = _chain_W(spec, gains, dg, j, ch, th, dh, check)
        ch.W.append(W_j)
        wsq = _fro2(W_j)
        if ch.tau_theta is None:
            ch.tau_theta = [o * zj for o in omega_j]
        else:
            ch.tau_theta = [acc + o * zj
                            for acc, o in zip(ch.tau_theta, omega_j)]
        ch.tau_delta = ch.tau_delta + 0.5 * (wsq + (n + 1 - j)) * zj * zj
        # damping
        vj = -0.5 * dh * (wsq + (n + 1 - j)) * zj - inv2e * zj
        if 1 < j < n:
            vj = vj + dg * ch.partials[j][2] * ch.tau_delta
            cross = 0.0
            for l in range(2, j):
                cross = cross + ch.partials[l][2] * ch.z[l - 1]
            if j > 2:
                vj = vj + dg * 0.5 * (wsq + (n + 1 - j) + 1.0 / gains.eps_omega) * zj * cross
        ch.v.append(vj)
        # virtual control (steps below the final one only)
        if j < n:
            aj = -gains.k[j - 1] * zj - _dot(omega_j, th) + vj
            if j >= 2:
                aj = aj - ch.z[j - 2]
                dax, dath, _ = ch.partials[j]
                for l in range(1, j):
                    aj = aj + dax[l - 1] * xs[l]
                aj = aj + _dot(dath, _mat_vec(Gr, ch.tau_theta))
                Gw = _mat_vec(Gr, omega_j)
                for l in range(2, j):
                    aj = aj + _dot(ch.partials[l][1], Gw) * ch.z[l - 1]
            ch.alpha.append(aj)
    return ch


# ---------------------------------------------------------------------------
# public operations


class _RawCascade:
    """Lightweight cascade result used inside the integration loop."""

    __slots__ = ("z", "alpha", "omega", "W", "tau_theta", "tau_delta", "v",
                 "Omega", "Omega_bar", "kappa", "K_gain", "u_bar", "u_e",
                 "dtheta_hat", "drho_hat", "ddelta_hat", "sigma")


def _evaluate_fast2(spec, gains, t, xs, th, rho, dh, dg):
    """Closed-form evaluation for second-order systems, no dual arithmetic.

    Valid only when both W and Omega_bar closed forms are registered; the
    dual-based path with check=True verifies the same quantities and is
    exercised on every logged sample of a simulation run.
    """
    q = spec.q
    z1 = xs[0]
    phi1 = list(spec.phi[0]([z1]))
    W1 = spec.closed_form_W[0]((z1,), th, dh, gains, dg)
    w1sq = _fro2(W1)
    inv2e = 0.5 / gains.eps_omega
    v1 = -0.5 * dh * (w1sq + 2.0) * z1 - inv2e * z1
    alpha1 = -gains.k[0] * z1 - _dot(phi1, th) + v1
    z2 = xs[1] - alpha1
    if not (math.isfinite(z2) and math.isfinite(alpha1)):
        raise NumericBlowupError(
            f"non-finite cascade state at t = {t}", t=t, state=xs)
    z = [z1, z2]
    W2 = spec.closed_form_W[1](z, th, dh, gains, dg)
    w2sq = _fro2(W2)
    omega2 = [W2[0][r] * z1 + W2[1][r] * z2 for r in range(q)]
    tau_theta = [phi1[r] * z1 + omega2[r] * z2 for r in range(q)]
    tau_delta = (0.5 * (w1sq + 2.0) * z1 * z1
                 + 0.5 * (w2sq + 1.0) * z2 * z2)
    v2 = -0.5 * dh * (w2sq + 1.0) * z2 - inv2e * z2
    sigma = math.exp(-gains.xi * t)
    Omega_bar = list(spec.closed_form_Omega_bar(
        xs, z, th, dh, gains, dg, sigma, spec.b_bar))
    ob_sq = _dot(Omega_bar, Omega_bar)
    kappa = -0.5 * gains.eps_omega * ob_sq
    K = gains.k[1] + 0.5 * (dh * w2sq + dh + gains.eps_omega * ob_sq
                            + 1.0 / gains.eps_omega)
    u_bar = -K * z2
    Gr = gains._Gamma_rows
    out = _RawCascade()
    out.z = z
    out.alpha = [alpha1]
    out.omega = [phi1, omega2]
    out.W = [W1, W2]
    out.tau_theta = tau_theta
    out.tau_delta = tau_delta
    out.v = [v1, v2]
    out.Omega = _dot(Omega_bar, z)
    out.Omega_bar = Omega_bar
    out.kappa = kappa
    out.K_gain = K
    out.u_bar = u_bar
    out.u_e = rho * u_bar
    out.dtheta_hat = _mat_vec(Gr, tau_theta)
    out.drho_hat = gains.gamma_rho * spec.control_direction * K * z2 * z2
    out.ddelta_hat = dg * tau_delta
    out.sigma = sigma
    return out


def _evaluate_raw(spec, gains, t, xs, th, rho, dh, dg, check):
    n = spec.n
    if (not check and n == 2 and spec.closed_form_W
            and spec.closed_form_Omega_bar is not None):
        return _evaluate_fast2(spec, gains, t, xs, th, rho, dh, dg)
    ch = _run_chain(spec, gains, dg, n, xs, th, dh, check=check)
    z = ch.z
    zn = z[n - 1]
    if not (math.isfinite(zn) and math.isfinite(ch.alpha[n - 2])):
        raise NumericBlowupError(
            f"non-finite cascade state at t = {t}", t=t, state=xs)
    dax, dath, dad = ch.partials[n]
    Gr = gains._Gamma_rows
    omega_n = ch.omega[n - 1]
    Wn_sq = _fro2(ch.W[n - 1])
    sigma = dexp(-gains.xi * t)
    # update-law compensation aggregates
    psi_theta = _dot(dath, _mat_vec(Gr, ch.tau_theta))
    Gw = _mat_vec(Gr, omega_n)
    for j in range(2, n):
        psi_theta = psi_theta + _dot(ch.partials[j][1], Gw) * z[j - 1]
    cross = 0.0
    for j in range(2, n):
        cross = cross + ch.partials[j][2] * z[j - 1]
    psi_delta = dg * dad * ch.tau_delta + dg * 0.5 * (Wn_sq + 1.0) * zn * cross
    soft_gain = spec.b_bar * gains.gamma_u / dsqrt(zn * zn + sigma * sigma)
    Omega = (z[n - 2] + _dot(omega_n, th)
             - sum(dax[l - 1] * xs[l] for l in range(1, n))
             - psi_delta - psi_theta + soft_gain * zn)
    if spec.closed_form_Omega_bar is not None:
        Omega_bar = list(spec.closed_form_Omega_bar(
            xs, z, th, dh, gains, dg, sigma, spec.b_bar))
    else:
        Omega_bar = _assemble_omega_bar(spec, gains, dg, ch, th, dh,
                                        dax, dath, dad, Wn_sq, soft_gain)
    if check:
        recon = _dot(Omega_bar, z)
        resid = abs(value(recon) - value(Omega))
        tol = _W_TOL * (1.0 + abs(value(Omega)))
        if resid > tol:
            raise FactorizationError(
                f"|Omega - Omega_bar^T z| = {resid:.3e} exceeds {tol:.3e}",
                residual=resid)
    ob_sq = _dot(Omega_bar, Omega_bar)
    kappa = -0.5 * gains.eps_omega * ob_sq
    K = gains.k[n - 1] + 0.5 * (dh * Wn_sq + dh + gains.eps_omega * ob_sq
                                + 1.0 / gains.eps_omega)
    u_bar = -K * zn
    u_e = rho * u_bar
    if check:
        two_path = -gains.k[n - 1] * zn + ch.v[n - 1] + kappa * zn
        if abs(value(two_path) - value(u_bar)) > _TWO_PATH_TOL * (1.0 + abs(value(u_bar))):
            raise EtabsimError(
                f"control-law assembly mismatch: {value(two_path)!r} vs {value(u_bar)!r}")
        if value(K) <= 0.0:
            raise EtabsimError(f"feedback gain K = {value(K)} must be positive")
    out = _RawCascade()
    out.z = z
    out.alpha = ch.alpha
    out.omega = ch.omega
    out.W = ch.W
    out.tau_theta = ch.tau_theta
    out.tau_delta = ch.tau_delta
    out.v = ch.v
    out.Omega = Omega
    out.Omega_bar = Omega_bar
    out.kappa = kappa
    out.K_gain = K
    out.u_bar = u_bar
    out.u_e = u_e
    out.dtheta_hat = _mat_vec(Gr, ch.tau_theta)
    out.drho_hat = gains.gamma_rho * spec.control_direction * K * zn * zn
    out.ddelta_hat = dg * ch.tau_delta
    out.sigma = sigma
    return out


def evaluate_cascade(spec: SystemSpec, gains: GainConfig, t: float,
                     x: Sequence[float], est: Estimates,
                     delta_gain: Optional[float] = None,
                     check: bool = True) -> CascadeOutput:
    """Evaluate the full control law at one point."""
    dg = gains.gamma_delta if delta_gain is None else float(delta_gain)
    xs = [float(c) for c in x]
    th = [float(c) for c in est.theta_hat]
    raw = _evaluate_raw(spec, gains, float(t), xs, th, float(est.rho_hat),
                        float(est.delta_hat), dg, check)
    return CascadeOutput(
        z=np.array([value(c) for c in raw.z]),
        alpha=np.array([value(c) for c in raw.alpha]),
        omega=[[value(c) for c in om] for om in raw.omega],
        W=[[[value(c) for c in row] for row in Wj] for Wj in raw.W],
        tau_theta=np.array([value(c) for c in raw.tau_theta]),
        tau_delta=value(raw.tau_delta),
        v=np.array([value(c) for c in raw.v]),
        Omega=value(raw.Omega),
        Omega_bar=np.array([value(c) for c in raw.Omega_bar]),
        kappa=value(raw.kappa),
        K_gain=value(raw.K_gain),
        u_bar=value(raw.u_bar),
        u_e=value(raw.u_e),
        dtheta_hat=np.array([value(c) for c in raw.dtheta_hat]),
        drho_hat=value(raw.drho_hat),
        ddelta_hat=value(raw.ddelta_hat),
        sigma=value(raw.sigma),
    )


def coordinate_transform(spec, gains, x, est, delta_gain=None):
    """Transformed coordinates z and virtual controls alpha at a state."""
    dg = gains.gamma_delta if delta_gain is None else float(delta_gain)
    xs = [float(c) for c in x]
    th = [float(c) for c in est.theta_hat]
    ch = _run_chain(spec, gains, dg, spec.n - 1, xs, th, float(est.delta_hat),
                    check=False)
    z = list(ch.z) + [xs[spec.n - 1] - ch.alpha[spec.n - 2]]
    return np.array([value(c) for c in z]), np.array([value(c) for c in ch.alpha])


def virtual_control(spec, gains, i, x, est, delta_gain=None):
    """The i-th virtual control alpha_i (1 <= i <= n-1)."""
    if not (1 <= i <= spec.n - 1):
        raise ConfigError(f"virtual control index {i} out of range 1..{spec.n - 1}")
    dg = gains.gamma_delta if delta_gain is None else float(delta_gain)
    ch = _run_chain(spec, gains, dg, i,
                    [float(c) for c in x[:i]],
                    [float(c) for c in est.theta_hat],
                    float(est.delta_hat), check=False)
    return value(ch.alpha[i - 1])


def regressor_omega(spec, gains, i, x, est, delta_gain=None):
    """The recursion's regressor omega_i at a state."""
    dg = gains.gamma_delta if delta_gain is None else float(delta_gain)
    om = _omega_value(spec, gains, dg, i,
                      [float(c) for c in x[:i]],
                      [float(c) for c in est.theta_hat],
                      float(est.delta_hat))
    return np.array([value(c) for c in om])


def hadamard_W(spec, gains, i, z_prefix, est, delta_gain=None):
    """The factor W_i with omega_i = W_i^T (z_1..z_i), as an i x q array.

    Uses the registered closed form when available, else the ray-Jacobian
    quadrature; either way the factorization residual is verified.
    """
    dg = gains.gamma_delta if delta_gain is None else float(delta_gain)
    th = [float(c) for c in est.theta_hat]
    dh = float(est.delta_hat)
    zb = [float(c) for c in z_prefix]
    cf = spec.closed_form_W[i - 1] if spec.closed_form_W else None
    if cf is not None:
        W = [list(row) for row in cf(zb, th, dh, gains, dg)]
    else:
        M = _ray_factor(_omega_fn_of_z(spec, gains, dg, i, th, dh), zb)
        W = [[M[r][l] for r in range(spec.q)] for l in range(i)]
    # residual check against omega_i at the reconstructed state
    xs = [zb[0]]
    for l in range(2, i + 1):
        sub = _run_chain(spec, gains, dg, l - 1, xs, th, dh, check=False)
        xs.append(zb[l - 1] + sub.alpha[l - 2])
    om = _omega_value(spec, gains, dg, i, xs, th, dh)
    for r in range(spec.q):
        recon = sum(value(W[l][r]) * zb[l] for l in range(i))
        if abs(recon - value(om[r])) > _W_TOL * (1.0 + abs(value(om[r]))):
            raise FactorizationError(
                f"|omega_{i} - W^T z| residual check failed in component {r}")
    return np.array([[value(c) for c in row] for row in W])


def damping_v(spec, gains, i, x, est, delta_gain=None):
    """The damping term v_i at a state."""
    dg = gains.gamma_delta if delta_gain is None else float(delta_gain)
    ch = _run_chain(spec, gains, dg, i,
                    [float(c) for c in x[:i]],
                    [float(c) for c in est.theta_hat],
                    float(est.delta_hat), check=False)
    return value(ch.v[i - 1])


def omega_big_and_bar(spec, gains, t, x, est, delta_gain=None):
    """The aggregate Omega and its factor Omega_bar at a point."""
    out = evaluate_cascade(spec, gains, t, x, est, delta_gain=delta_gain)
    return out.Omega, out.Omega_bar


def final_control(gains, z_n, W_n, Omega_bar, est):
    """Final-step quantities (kappa, K, u_bar, u_e) from assembled pieces.

    Also verifies that the expanded and grouped forms of u_bar agree:
    -K z_n == -k_n z_n + v_n + kappa z_n.
    """
    n = len(gains.k)
    wsq = _fro2(W_n)
    ob_sq = _dot(Omega_bar, Omega_bar)
    dh = est.delta_hat
    kappa = -0.5 * gains.eps_omega * ob_sq
    K = gains.k[n - 1] + 0.5 * (dh * wsq + dh + gains.eps_omega * ob_sq
                                + 1.0 / gains.eps_omega)
    if K <= 0.0:
        raise EtabsimError(f"feedback gain K = {K} must be positive")
    u_bar = -K * z_n
    v_n = -0.5 * dh * (wsq + 1.0) * z_n - 0.5 / gains.eps_omega * z_n
    alt = -gains.k[n - 1] * z_n + v_n + kappa * z_n
    if abs(alt - u_bar) > _TWO_PATH_TOL * (1.0 + abs(u_bar)):
        raise EtabsimError(
            f"control-law assembly mismatch: {alt!r} vs {u_bar!r}")
    return kappa, K, u_bar, est.rho_hat * u_bar


def estimate_derivatives(omega, z, W, K_gain, gains, direction,
                         delta_gain=None):
    """Update-law right-hand sides (dtheta_hat, drho_hat, ddelta_hat)."""
    n = len(z)
    dg = gains.gamma_delta if delta_gain is None else float(delta_gain)
    tau_th = tuning_tau_theta(omega, z, n)
    tau_d = tuning_tau_delta(W, z, n, n)
    dtheta = np.asarray(_mat_vec(gains._Gamma_rows, tau_th), dtype=float)
    drho = gains.gamma_rho * direction * K_gain * z[n - 1] * z[n - 1]
    return dtheta, float(drho), float(dg * tau_d)
