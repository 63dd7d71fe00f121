"""Strict-feedback plant description, truth signals, and gain validation.

The plant is x_i' = x_{i+1} + phi_i(x_1..x_i)^T theta(t),  i < n,
             x_n' = b(t) u + phi_n(x)^T theta(t),
with theta(t) in R^q and scalar b(t) of known sign and known magnitude
bound b_bar. theta and b are simulation-side ground truth only; the
controller never sees them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diff import dsqrt
from .errors import ConfigError, NumericBlowupError


def sgn(s: float) -> float:
    """Signum with sgn(0) = 0 (used only inside truth signals)."""
    if s > 0.0:
        return 1.0
    if s < 0.0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class SystemSpec:
    """Plant structure visible to the controller.

    phi[i] maps the first i+1 state components to a length-q sequence and
    must vanish at the origin (checked numerically on construction). The
    optional closed forms short-circuit the numerical factorizations:
    closed_form_W[i](z_prefix, theta_hat, delta_hat, gains, delta_gain)
    returns the (i+1) x q factor with omega_{i+1} = W^T z_prefix, and
    closed_form_Omega_bar(x, z, theta_hat, delta_hat, gains, delta_gain,
    sigma) returns the length-n vector with Omega = Omega_bar^T z.
    """

    n: int
    q: int
    phi: Sequence[Callable]
    control_direction: int
    b_bar: float
    closed_form_W: Optional[Sequence[Optional[Callable]]] = None
    closed_form_Omega_bar: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"system order n = {self.n} must be >= 2")
        if self.q < 1:
            raise ConfigError(f"parameter dimension q = {self.q} must be >= 1")
        if len(self.phi) != self.n:
            raise ConfigError(f"expected {self.n} regressor maps, got {len(self.phi)}")
        if self.control_direction not in (+1, -1):
            raise ConfigError(
                f"control_direction must be +1 or -1, got {self.control_direction}")
        if not (self.b_bar > 0.0):
            raise ConfigError(f"b_bar = {self.b_bar} must be positive")
        if self.closed_form_W is not None and len(self.closed_form_W) != self.n:
            raise ConfigError("closed_form_W must have one entry per order (None allowed)")
        for i in range(1, self.n + 1):
            p0 = np.asarray(eval_phi(self, i, [0.0] * i), dtype=float)
            if p0.shape != (self.q,):
                raise ConfigError(
                    f"phi_{i} returned shape {p0.shape}, expected ({self.q},)")
            if np.any(np.abs(p0) > 1e-12):
                raise ConfigError(f"phi_{i}(0) = {p0} must vanish at the origin")


@dataclass(frozen=True)
class TruthSignals:
    """Ground-truth parameter signals theta(t, x) and b(t, x).

    They take the state as well as time because the built-in example's
    parameters depend on states (e.g. sin(x1 x2)). Sign and magnitude of b
    are asserted against the SystemSpec bounds during simulation, never here.
    """

    theta: Callable
    b: Callable


@dataclass(frozen=True)
class GainConfig:
    """Validated controller gains and initial estimates."""

    k: Sequence[float]
    Gamma: np.ndarray
    gamma_rho: float
    gamma_delta: float
    eps_omega: float
    xi: float
    gamma_u: float
    theta_hat0: np.ndarray
    rho_hat0: float
    delta_hat0: float
    # plain nested tuples of Gamma for dual-safe arithmetic in the cascade
    _Gamma_rows: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = tuple(float(v) for v in self.k)
        object.__setattr__(self, "k", k)
        if any(v <= 0.0 for v in k):
            raise ConfigError(f"all gains k must be positive, got {k}")
        G = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        if G.shape[0] != G.shape[1]:
            raise ConfigError(f"Gamma must be square, got shape {G.shape}")
        if not np.allclose(G, G.T, atol=1e-12):
            raise ConfigError("Gamma must be symmetric")
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise ConfigError("Gamma must be positive definite") from None
        object.__setattr__(self, "Gamma", G)
        th0 = np.atleast_1d(np.asarray(self.theta_hat0, dtype=float))
        if th0.shape != (G.shape[0],):
            raise ConfigError(
                f"theta_hat0 has shape {th0.shape}, Gamma is {G.shape}")
        object.__setattr__(self, "theta_hat0", th0)
        for name in ("gamma_rho", "gamma_delta", "eps_omega", "xi", "gamma_u"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if v <= 0.0:
                raise ConfigError(f"{name} = {v} must be positive")
        object.__setattr__(self, "rho_hat0", float(self.rho_hat0))
        dh0 = float(self.delta_hat0)
        if dh0 < 0.0:
            raise ConfigError(f"delta_hat0 = {dh0} must be nonnegative")
        object.__setattr__(self, "delta_hat0", dh0)
        object.__setattr__(self, "_Gamma_rows",
                           tuple(tuple(float(v) for v in row) for row in G))

    def validate_direction(self, control_direction: int):
        """Check the rho_hat(0) sign rule against the plant's direction."""
        r0 = self.rho_hat0
        if control_direction > 0 and r0 < 0.0:
            raise ConfigError(
                f"rho_hat0 = {r0} must be >= 0 for positive control direction")
        if control_direction < 0 and r0 >= 0.0:
            raise ConfigError(
                f"rho_hat0 = {r0} must be < 0 for negative control direction")


def eval_phi(spec: SystemSpec, i: int, x_prefix: Sequence):
    """Evaluate the i-th regressor on the first i state components."""
    if not (1 <= i <= spec.n):
        raise ConfigError(f"regressor index {i} out of range 1..{spec.n}")
    if len(x_prefix) != i:
        raise ConfigError(
            f"regressor {i} expects {i} state components, got {len(x_prefix)}")
    out = spec.phi[i - 1](list(x_prefix))
    return list(out)


def plant_derivative(spec: SystemSpec, truth: TruthSignals, t: float,
                     x: Sequence[float], u: float) -> np.ndarray:
    """Right-hand side of the plant ODE at (t, x) under input u."""
    x = np.asarray(x, dtype=float)
    th = np.atleast_1d(np.asarray(truth.theta(t, x), dtype=float))
    b = float(truth.b(t, x))
    dx = np.empty(spec.n)
    for i in range(1, spec.n + 1):
        phi_i = np.asarray(eval_phi(spec, i, x[:i]), dtype=float)
        drift = float(phi_i @ th)
        dx[i - 1] = (x[i] + drift) if i < spec.n else (b * u + drift)
    if not np.all(np.isfinite(dx)):
        raise NumericBlowupError(
            f"non-finite plant derivative at t = {t}", t=t, state=x)
    return dx


# ---------------------------------------------------------------------------
# built-in systems


def _demo_a1x(x1, th1, dh, gains):
    # d alpha_1 / d x1 for the n=2 example (alpha_1 as in _demo_alpha1)
    return (-gains.k[0] - 2.0 * x1 * th1
            - 0.5 * dh * (3.0 * x1 * x1 + 2.0)
            - 0.5 / gains.eps_omega)


def _demo_W1(z_prefix, theta_hat, delta_hat, gains, delta_gain):
    # omega_1 = x1^2 = W1^T z1 with W1 = x1 (and x1 = z1)
    return ((z_prefix[0],),)


def _demo_W2(z_prefix, theta_hat, delta_hat, gains, delta_gain):
    x1 = z_prefix[0]
    a1x = _demo_a1x(x1, theta_hat[0], delta_hat, gains)
    return ((-a1x * x1,), (0.0,))


def _demo_Omega_bar(x, z, theta_hat, delta_hat, gains, delta_gain, sigma, b_bar):
    x1, z2 = x[0], z[1]
    th1 = theta_hat[0]
    w1 = x1 * x1
    G = gains._Gamma_rows[0][0]
    a1x = _demo_a1x(x1, th1, delta_hat, gains)
    a1th = -w1
    a1d = -0.5 * (w1 + 2.0) * x1
    inv2e = 0.5 / gains.eps_omega
    W2sq = (a1x * x1) ** 2
    slot1 = (1.0
             - a1x * (-gains.k[0] - 0.5 * delta_hat * (w1 + 2.0) - inv2e)
             - a1th * G * w1
             - 0.5 * delta_gain * a1d * (w1 + 2.0) * x1)
    slot2 = (-a1x
             + a1x * a1th * G * w1
             - 0.5 * delta_gain * a1d * (W2sq + 1.0) * z2
             + b_bar * gains.gamma_u / dsqrt(z2 * z2 + sigma * sigma))
    return (slot1, slot2)


def builtin_demo(xi: float = 0.1, closed_forms: bool = True,
                 gamma_u: float = 0.1):
    """The second-order worked example with fast time-varying parameters.

    theta(t,x) = 2 + 0.8 sin 2t + sin(x1 x2) + 0.2 sin(x1 t) + sgn(sin t),
    b(t,x)     = 2 + 0.1 cos x1 + 0.5 sin x2 + 0.5 sgn(x1 x2),  b_bar = 3.1.

    The default xi = 0.1 keeps the soft-sign gain well conditioned over a
    20 s horizon; with xi = 1 the event trigger chatters once sigma(t)
    decays (the soft-sign slot of Omega_bar grows like 1/sigma and is
    squared inside the feedback gain). Pass closed_forms=False to exercise
    the quadrature factorization path instead of the printed closed forms.
    """

    def phi1(xp):
        return (xp[0] * xp[0],)

    def phi2(xp):
        return (0.0,)

    def theta(t, x):
        return (2.0 + 0.8 * math.sin(2.0 * t)
                + math.sin(x[0] * x[1])
                + 0.2 * math.sin(x[0] * t)
                + sgn(math.sin(t)),)

    def b(t, x):
        return (2.0 + 0.1 * math.cos(x[0]) + 0.5 * math.sin(x[1])
                + 0.5 * sgn(x[0] * x[1]))

    gains = GainConfig(
        k=(0.65, 0.05),
        Gamma=np.array([[0.01]]),
        gamma_rho=0.01,
        gamma_delta=0.01,
        eps_omega=5.0,
        xi=xi,
        gamma_u=gamma_u,
        theta_hat0=np.array([0.0]),
        rho_hat0=0.4,
        delta_hat0=0.0,
    )
    spec = SystemSpec(
        n=2, q=1,
        phi=(phi1, phi2),
        control_direction=+1,
        b_bar=3.1,
        closed_form_W=(_demo_W1, _demo_W2) if closed_forms else None,
        closed_form_Omega_bar=_demo_Omega_bar if closed_forms else None,
        name="demo",
    )
    truth = TruthSignals(theta=theta, b=b)
    return spec, truth, gains


def _syn_A(z1, th, dh, gains):
    # alpha_1 = z1 * A for the third-order synthetic system below
    w1sq = z1 * z1 + 0.25 * z1 ** 4
    return (-gains.k[0] - z1 * th[0] - 0.5 * z1 * z1 * th[1]
            - 0.5 * dh * (w1sq + 3.0) - 0.5 / gains.eps_omega)


def _syn_a1x(z1, th, dh, gains):
    # d alpha_1 / d x1 = A + z1 dA/dz1
    dA = -th[0] - z1 * th[1] - 0.5 * dh * (2.0 * z1 + z1 ** 3)
    return _syn_A(z1, th, dh, gains) + z1 * dA


def _syn_W1(z_prefix, theta_hat, delta_hat, gains, delta_gain):
    z1 = z_prefix[0]
    return ((z1, 0.5 * z1 * z1),)


def _syn_W2(z_prefix, theta_hat, delta_hat, gains, delta_gain):
    z1, z2 = z_prefix
    A = _syn_A(z1, theta_hat, delta_hat, gains)
    a1x = _syn_a1x(z1, theta_hat, delta_hat, gains)
    return ((z1 * A - a1x * z1, z1 * A * A - 0.5 * a1x * z1 * z1),
            (z1, z2 + 2.0 * z1 * A))


def builtin_synthetic(xi: float = 0.5):
    """A third-order, two-parameter polynomial system.

    Used by the verification sweeps to exercise the full-depth recursion
    (nested exact derivatives). Closed-form factors are supplied for W_1
    and W_2 so the virtual-law evaluations stay cheap; W_3 and Omega_bar
    have no closed form and always go through the ray quadrature.
    """

    def phi1(xp):
        x1 = xp[0]
        return (x1 * x1, 0.5 * x1 ** 3)

    def phi2(xp):
        x1, x2 = xp[0], xp[1]
        return (x1 * x2, x2 * x2)

    def phi3(xp):
        x1, x2, x3 = xp
        return (x1 * x3, x2 + x3 * x3)

    def theta(t, x):
        return (1.0 + 0.5 * math.sin(t), 0.5 * math.cos(2.0 * t))

    def b(t, x):
        return 2.0 + 0.3 * math.sin(t + x[0])

    gains = GainConfig(
        k=(1.0, 1.0, 1.0),
        Gamma=np.array([[0.05, 0.0], [0.0, 0.05]]),
        gamma_rho=0.05,
        gamma_delta=0.05,
        eps_omega=2.0,
        xi=xi,
        gamma_u=0.2,
        theta_hat0=np.zeros(2),
        rho_hat0=0.5,
        delta_hat0=0.0,
    )
    spec = SystemSpec(
        n=3, q=2,
        phi=(phi1, phi2, phi3),
        control_direction=+1,
        b_bar=2.5,
        closed_form_W=(_syn_W1, _syn_W2, None),
        name="synthetic3",
    )
    truth = TruthSignals(theta=theta, b=b)
    return spec, truth, gains


SYSTEM_REGISTRY = {
    "demo": builtin_demo,
    "synthetic3": builtin_synthetic,
}


def register_system(name: str, constructor: Callable):
    """Register a programmatic system constructor for CLI lookup."""
    SYSTEM_REGISTRY[name] = constructor
