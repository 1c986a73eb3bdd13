import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pricelab.demand_env import (
    ConfigurationError,
    DemandEnvironment,
    EnvConfig,
    SyntheticCdf,
    TabulatedCdf,
    UtilityModel,
    build_cdf,
    build_env,
    bump,
    bump_deriv,
    smoothstep9,
    uniform_noise_env,
)


def test_smoothstep_and_bump_values():
    assert smoothstep9(0.0) == 0.0 and smoothstep9(1.0) == 1.0
    assert smoothstep9(0.5) == pytest.approx(0.5, abs=1e-12)
    assert smoothstep9(-0.2) == 0.0
    assert bump(0.0) == pytest.approx(math.exp(-1), abs=1e-12)
    assert bump(1.0) == 0.0 and bump(-1.0) == 0.0
    assert bump_deriv(0.0) == 0.0


@given(st.floats(0.0, 1.0))
def test_smoothstep_odd_symmetry(t):
    assert smoothstep9(t) + smoothstep9(1 - t) == pytest.approx(1.0, abs=1e-12)


def test_amplitude_at_defaults():
    assert SyntheticCdf().amplitude == pytest.approx(5 / 2025, rel=1e-12)


def test_no_bumps_is_baseline():
    cdf = build_cdf(SyntheticCdf(n_bumps=0))
    t = (cdf.grid + 0.25) / 0.5
    assert np.array_equal(cdf.F, np.clip(smoothstep9(t), 0.0, 1.0))


@pytest.mark.parametrize("beta", [2.0, 2.5, 3.0])
def test_cdf_construction(beta):
    cfg = SyntheticCdf(beta=beta)
    cdf = build_cdf(cfg)
    assert cdf.cdf(cfg.u_min) == 0.0 and cdf.cdf(cfg.u_max) == 1.0
    assert np.all(np.diff(cdf.F) >= 0)
    mass = np.sum(0.5 * (cdf.f[1:] + cdf.f[:-1]) * np.diff(cdf.grid))
    assert abs(mass - 1.0) < 0.02


def test_bump_locality():
    cfg = SyntheticCdf()
    cdf = build_cdf(cfg)
    base = smoothstep9((cdf.grid - cfg.u_min) / (cfg.u_max - cfg.u_min))
    near = np.zeros(cdf.grid.size, dtype=bool)
    for c in cfg.bump_centers:
        near |= np.abs(cdf.grid - c) <= cfg.half_width
    assert np.array_equal(cdf.F[~near], np.clip(base, 0.0, 1.0)[~near])


def test_bad_configs():
    with pytest.raises(ConfigurationError):
        SyntheticCdf(u_min=0.3, u_max=0.2)
    with pytest.raises(ConfigurationError):
        SyntheticCdf(centers=(0.24,) * 10)
    with pytest.raises(ConfigurationError):
        build_cdf(SyntheticCdf(rho=5000.0))
    with pytest.raises(ConfigurationError):
        UtilityModel("quadratic")


def test_purchase_probability_examples():
    env = uniform_noise_env()
    x = np.array([[0.5]])
    assert env.purchase_prob(x, 0.4)[0] == pytest.approx(2 / 3)
    assert env.purchase_prob(x, 0.5 + 0.3)[0] == 0.0
    assert env.purchase_prob(x, 0.5 - 0.3)[0] == 1.0


def test_oracle_closed_forms():
    env = uniform_noise_env()
    assert env.oracle_price([0.5]) == pytest.approx(0.4, abs=1e-6)
    for x in np.linspace(0.35, 0.65, 7):
        assert env.oracle_price([x]) == pytest.approx((0.3 + x) / 2, abs=1e-6)
    g = np.linspace(0, 1, 4096)
    unit = DemandEnvironment(UtilityModel("linear", (0.0,)), TabulatedCdf(g, g, np.ones_like(g)))
    assert unit.oracle_price([0.5]) == pytest.approx(0.5, abs=1e-6)
    # demand saturated: every price is bought, so charge the top of the range
    sat = uniform_noise_env(theta=5.0)
    assert sat.oracle_price([0.5]) == pytest.approx(1.0)


def test_oracle_routes_agree_on_random_configs():
    r = np.random.default_rng(7)
    checked = 0
    while checked < 1000:
        beta = float(r.uniform(2.0, 3.0))
        cfg = EnvConfig(beta=beta, n_bumps=int(r.integers(0, 11)), rho=float(r.uniform(0.0, 5.0)),
                        half_width=float(r.uniform(1 / 60, 1 / 30)))
        try:
            env = build_env(cfg)
        except ConfigurationError:
            continue
        x = float(r.uniform(0.35, 0.65))
        p_grid = env.oracle_price([x], check=False)
        p_phi = env.phi_inverse_price(x)
        assert abs(p_grid - p_phi) < 1e-3, (cfg, x)
        checked += 1


@given(st.integers(0, 2**32 - 1))
def test_regret_nonnegative_and_zero_at_oracle(seed):
    env = build_env(EnvConfig())
    r = np.random.default_rng(seed)
    X = env.draw_contexts(64, r)
    _, reg = env.step_batch(X, r.uniform(0, 1, 64), r)
    assert np.all(reg >= -1e-9)
    _, reg = env.step_batch(X, env.oracle_prices(X), r)
    assert np.all(np.abs(reg) < 1e-9)
    rec = env.step(X[0], float(env.oracle_price(X[0])), r)
    assert abs(rec.regret_inc) < 1e-9 and rec.y in (0, 1)


def test_step_determinism():
    env = build_env(EnvConfig())
    runs = []
    for _ in range(2):
        r = np.random.default_rng(3)
        runs.append([env.step(env.draw_contexts(1, r)[0], 0.45, r, t) for t in range(20)])
    for a, b in zip(*runs):
        assert a.y == b.y and a.regret_inc == b.regret_inc and np.array_equal(a.x, b.x)
    with pytest.raises(ValueError):
        env.step([0.5], 1.5, np.random.default_rng(0))


@given(st.floats(-2, 2), st.floats(-1, 2))
def test_purchase_probability_in_unit_interval(x, p):
    env = build_env(EnvConfig())
    q = env.purchase_prob(np.array([[x]]), p)[0]
    assert 0.0 <= q <= 1.0


def test_utility_variants():
    X = np.array([[0.2, 0.5], [1.0, 0.0]])
    assert np.allclose(UtilityModel("linear", (1.0, 2.0))(X), [1.2, 1.0])
    add = UtilityModel("additive", (1.0, 1.0))(X)
    assert np.allclose(add, (0.6 * X + 0.4 * smoothstep9(X)).sum(axis=1))
