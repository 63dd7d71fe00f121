import math

import numpy as np
import pytest

from etabsim import (ConfigError, GainConfig, SystemSpec, builtin_demo,
                     builtin_synthetic)
from etabsim.model import SYSTEM_REGISTRY, eval_phi, register_system, sgn


def test_sgn_convention():
    assert sgn(2.5) == 1.0
    assert sgn(-0.1) == -1.0
    assert sgn(0.0) == 0.0


def test_builtin_demo_truth_values():
    spec, truth, gains = builtin_demo()
    # b(0, 0) = 2 + 0.1 + 0 + 0
    assert truth.b(0.0, (0.0, 0.0)) == pytest.approx(2.1)
    th = truth.theta(0.0, (1.0, -4.0))
    assert th[0] == pytest.approx(2.0 + math.sin(-4.0))
    assert spec.b_bar == 3.1
    assert spec.n == 2 and spec.q == 1
    assert gains.k == (0.65, 0.05)
    assert gains.rho_hat0 == 0.4


def test_demo_b_within_declared_bound_on_grid():
    spec, truth, _ = builtin_demo()
    for t in np.linspace(0.0, 20.0, 41):
        for x1 in np.linspace(-5, 5, 11):
            for x2 in np.linspace(-5, 5, 11):
                b = truth.b(t, (x1, x2))
                assert 0.0 < b <= spec.b_bar


def test_eval_phi_prefix():
    spec, _, _ = builtin_demo()
    assert list(eval_phi(spec, 1, [3.0])) == [9.0]
    assert list(eval_phi(spec, 2, [3.0, 1.0])) == [0.0]


def test_system_spec_rejects_nonvanishing_regressor():
    with pytest.raises(ConfigError):
        SystemSpec(n=2, q=1,
                   phi=(lambda xp: (xp[0] + 1.0,), lambda xp: (0.0,)),
                   control_direction=+1, b_bar=1.0)


def test_system_spec_rejects_bad_order_and_direction():
    with pytest.raises(ConfigError):
        SystemSpec(n=1, q=1, phi=(lambda xp: (xp[0],),),
                   control_direction=+1, b_bar=1.0)
    with pytest.raises(ConfigError):
        SystemSpec(n=2, q=1,
                   phi=(lambda xp: (xp[0],), lambda xp: (0.0,)),
                   control_direction=0, b_bar=1.0)


def _gain_kwargs(**over):
    kw = dict(k=(1.0, 1.0), Gamma=np.eye(1), gamma_rho=0.1, gamma_delta=0.1,
              eps_omega=1.0, xi=0.5, gamma_u=0.1,
              theta_hat0=np.zeros(1), rho_hat0=0.5, delta_hat0=0.0)
    kw.update(over)
    return kw


def test_gain_config_rejects_nonpositive_gains():
    with pytest.raises(ConfigError):
        GainConfig(**_gain_kwargs(k=(-1.0, 1.0)))
    with pytest.raises(ConfigError):
        GainConfig(**_gain_kwargs(gamma_u=0.0))
    with pytest.raises(ConfigError):
        GainConfig(**_gain_kwargs(xi=-0.1))
    with pytest.raises(ConfigError):
        GainConfig(**_gain_kwargs(delta_hat0=-0.5))


def test_gain_config_rejects_bad_gamma():
    with pytest.raises(ConfigError):
        GainConfig(**_gain_kwargs(Gamma=np.array([[0.0]])))
    with pytest.raises(ConfigError):
        GainConfig(**_gain_kwargs(Gamma=np.array([[1.0, 0.5], [0.0, 1.0]]),
                                  theta_hat0=np.zeros(2)))


def test_gain_config_direction_rule():
    g = GainConfig(**_gain_kwargs(rho_hat0=0.0))
    g.validate_direction(+1)
    with pytest.raises(ConfigError):
        g.validate_direction(-1)
    g2 = GainConfig(**_gain_kwargs(rho_hat0=-0.3))
    g2.validate_direction(-1)
    with pytest.raises(ConfigError):
        g2.validate_direction(+1)


def test_builtin_synthetic_shape():
    spec, truth, gains = builtin_synthetic()
    assert spec.n == 3 and spec.q == 2
    assert len(truth.theta(0.0, (0.0, 0.0, 0.0))) == 2
    assert abs(truth.b(1.0, (0.2, 0.0, 0.0))) <= spec.b_bar


def test_registry_contains_builtins_and_accepts_custom():
    assert set(SYSTEM_REGISTRY) >= {"demo", "synthetic3"}
    register_system("demo_copy", builtin_demo)
    try:
        assert SYSTEM_REGISTRY["demo_copy"] is builtin_demo
    finally:
        del SYSTEM_REGISTRY["demo_copy"]
