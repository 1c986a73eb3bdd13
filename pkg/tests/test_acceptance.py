"""Headline acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (also printed in the terminal summary)
before asserting.  The regret-exponent sweeps and the policy comparison run the
full desk-scale simulations and take several minutes on one core.

    pytest tests/test_acceptance.py -v
"""

import math
from functools import lru_cache

import numpy as np

from pricelab.analytics import cluster_bootstrap, difference_summary, loglog_slope, theory_exponent
from pricelab.calibrate import (
    ProductDataset,
    build_semireal_env,
    calibrate_product,
    fit_ridge_logistic,
    is_usable,
    load_products_csv,
    screen_products,
)
from pricelab.demand_env import ConfigurationError, EnvConfig, SyntheticCdf, build_cdf, build_env
from pricelab.lpr import estimate_cdf_and_density
from pricelab.sim_harness import RegretCurve, TrialConfig, run_sweep, sweep_trials
from pricelab.transform import (
    SmoothingConfig,
    TransformEstimate,
    perturb,
    pool_adjacent_violators,
    post_smooth,
    project_transform,
)

from conftest import weighted_ls_oracle
from test_calibrate import FIXTURE, dense_minimiser, make_ds
from test_transform import test_range_coverage_on_seeded_fits as coverage_on_seeded_fits
from test_utility_est import support_screening_rate

LINES: list[str] = []

HORIZONS = (2000, 4000, 8000, 16000, 32000)
N_TRIALS = 50
TOL = 0.08


def verdict(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


@lru_cache(maxsize=None)
def slope_report(beta: float, known: bool):
    trials = sweep_trials(EnvConfig(), "ilpr", (beta,), HORIZONS, N_TRIALS, seed=0, params={"known_utility": known})
    res = run_sweep(trials)
    bad = [r for r in res if not isinstance(r, RegretCurve)]
    assert not bad, bad[:1]
    mat = np.array([r.cumulative_regret[-1] for r in res]).reshape(len(HORIZONS), N_TRIALS).T
    return cluster_bootstrap(mat, np.array(HORIZONS), 2000, 0, beta, known)


def exponent_check(name, known):
    parts, ok = [], True
    for beta in (2.0, 2.5):
        r = slope_report(beta, known)
        good = abs(r.slope_hat - r.theory) <= TOL
        ok &= good
        parts.append(f"beta={beta:g} slope={r.slope_hat:.3f} CI=[{r.ci_lo:.3f},{r.ci_hi:.3f}] "
                     f"target={r.theory:.3f}+/-{TOL} {'ok' if good else 'off'}")
    verdict(name, ok, "; ".join(parts))


def test_known_utility_exponent():
    exponent_check("known-utility regret exponent", True)


def test_unknown_utility_exponent():
    exponent_check("unknown-utility regret exponent", False)


def test_policy_comparison_ordering():
    T = 20000
    finals = {}
    for pol in ("ilpr", "dip", "kernel"):
        params = tuple(sorted({"beta": 2.0, "known_utility": False}.items()))
        trials = [TrialConfig(EnvConfig(beta=2.0), pol, params, T, (T,), 0, i) for i in range(N_TRIALS)]
        finals[pol] = np.array([r.cumulative_regret[-1] for r in run_sweep(trials)])
    parts, ok = [f"ilpr mean={finals['ilpr'].mean():.1f}"], True
    for other in ("dip", "kernel"):
        d = difference_summary(finals["ilpr"], finals[other])
        ok &= d["margin_over_2se"]
        parts.append(f"{other} mean={d['mean_b']:.1f} diff={d['diff']:.1f} 2se={2 * d['se']:.1f}")
    verdict("policy comparison ordering", ok, ", ".join(parts))


def test_lpr_polynomial_exactness():
    worst = 0.0
    for q in (1, 2, 3):
        for seed in range(5):
            r = np.random.default_rng(seed)
            u = r.uniform(-0.3, 0.3, 400)
            F0 = np.polynomial.Polynomial(np.concatenate([[0.5], r.uniform(-0.5, 0.5, q)]))
            y = 1 - F0(u)
            grid = np.linspace(-0.25, 0.25, 31)
            h = 0.08
            c = estimate_cdf_and_density(u, y, grid, h, q, -1.0, 1.0, density_floor=-np.inf)
            for g, fv, dv in zip(grid, c.f_values, c.deriv_values):
                level, slope = weighted_ls_oracle(u, y, g, h, q)
                worst = max(worst, abs(fv - (1 - level)), abs(dv + slope), abs(fv - F0(g)),
                            abs(dv - F0.deriv()(g)))
    verdict("LPR polynomial exactness", worst < 1e-8, f"max error {worst:.2e} (tol 1e-8)")


def test_oracle_consistency():
    r = np.random.default_rng(7)
    worst, checked = 0.0, 0
    while checked < 1000:
        cfg = EnvConfig(beta=float(r.uniform(2.0, 3.0)), n_bumps=int(r.integers(0, 11)),
                        rho=float(r.uniform(0.0, 5.0)), half_width=float(r.uniform(1 / 60, 1 / 30)))
        try:
            env = build_env(cfg)
        except ConfigurationError:
            continue
        x = float(r.uniform(0.35, 0.65))
        worst = max(worst, abs(env.oracle_price([x], check=False) - env.phi_inverse_price(x)))
        checked += 1
    verdict("oracle consistency", worst < 1e-3, f"max |phi-inverse - grid search| {worst:.2e} over 1000 configs")


def test_transform_pipeline_properties():
    grid = np.linspace(0.0, 1.0, 101)
    r = np.random.default_rng(0)
    aff = 0.0
    for _ in range(50):
        a, b, delta = r.uniform(-3, 3), r.uniform(-3, 3), r.uniform(0.02, 0.3)
        aff = max(aff, np.max(np.abs(post_smooth(grid, a + b * grid, delta) - (a + b * grid))))
    slope_err, inv_err, pav_ok = 0.0, 0.0, True
    for seed in range(50):
        rs = np.random.default_rng(seed)
        c1 = rs.uniform(0.1, 3.0)
        t = project_transform(perturb(grid, np.cumsum(rs.normal(size=101)) * 0.05, 0.0, 1.0, rs.uniform(0, 0.4), c1))
        for d in (0.05, 0.5, 2.0):
            slope_err = max(slope_err, abs((t(t.v1) - t(t.v1 - d)) / d - c1 / 2),
                            abs((t(t.v2 + d) - t(t.v2)) / d - c1 / 2))
        z, _ = t.inverse(t(t.grid))
        inv_err = max(inv_err, np.max(np.abs(z - t.grid)))
        mono = np.sort(rs.normal(size=40))
        pav_ok &= np.array_equal(pool_adjacent_violators(mono), mono)
    try:
        coverage_on_seeded_fits()
        coverage = True
    except AssertionError:
        coverage = False
    ok = aff < 1e-6 and slope_err < 1e-9 and inv_err < 1e-8 and pav_ok and coverage
    verdict("transform pipeline properties", ok,
            f"affine {aff:.1e}, arm slope {slope_err:.1e}, inverse {inv_err:.1e}, PAV idempotent {pav_ok}, "
            f"coverage on 100 fits {coverage}")


def test_synthetic_cdf_construction():
    ok, parts = True, []
    for beta in (2.0, 2.5, 3.0):
        cfg = SyntheticCdf(beta=beta)
        c = build_cdf(cfg)
        mass = float(np.sum(0.5 * (c.f[1:] + c.f[:-1]) * np.diff(c.grid)))
        good = (c.cdf(cfg.u_min) == 0.0 and c.cdf(cfg.u_max) == 1.0 and bool(np.all(np.diff(c.F) >= 0))
                and abs(mass - 1) < 0.02)
        ok &= good
        parts.append(f"beta={beta:g} mass={mass:.4f}")
    amp = SyntheticCdf().amplitude
    ok &= abs(amp - 5 / 2025) < 1e-15
    verdict("synthetic CDF construction", ok, ", ".join(parts) + f", amplitude={amp:.6g} (5/2025)")


def test_lasso_support_screening():
    hits = support_screening_rate()
    verdict("lasso support screening", hits >= 95, f"support within truth in {hits}/100 replications")


def test_bootstrap_analytics():
    H = np.array(HORIZONS, dtype=float)
    err = abs(loglog_slope(H, 3 * H ** 0.6) - 0.6)
    same = cluster_bootstrap(np.tile(2 * H ** 0.7, (10, 1)), H, 500, 0, 2.0)
    degenerate = same.ci_lo == same.ci_hi
    trials = sweep_trials(EnvConfig(), "ilpr", (2.0,), (500, 1000), 4, seed=11)
    serial, par = run_sweep(trials, 1), run_sweep(trials, 4)
    runs_equal = all(np.array_equal(a.cumulative_regret, b.cumulative_regret) for a, b in zip(serial, par))
    mat = np.array([r.cumulative_regret[-1] for r in serial]).reshape(2, 4).T
    boots_equal = cluster_bootstrap(mat, np.array([500, 1000]), 300, 5, 2.0) == \
        cluster_bootstrap(mat, np.array([500, 1000]), 300, 5, 2.0)
    ok = err < 1e-10 and degenerate and runs_equal and boots_equal
    verdict("bootstrap and analytics", ok, f"power-law slope error {err:.1e}, degenerate CI {degenerate}, "
                                           f"serial == parallel {runs_equal}, bootstrap repeatable {boots_equal}")


def test_semireal_pipeline():
    thresholds = (not is_usable(make_ds(300, 150)) and is_usable(make_ds(301, 150))
                  and not is_usable(make_ds(400, 20)) and is_usable(make_ds(400, 21))
                  and not is_usable(make_ds(400, 380)) and is_usable(make_ds(400, 379)))
    kept = [d.product_id for d in screen_products(load_products_csv(FIXTURE))]
    thresholds &= kept == ["P01", "P02", "P03", "P04"]

    ds = screen_products(load_products_csv(FIXTURE))[0]
    env = build_semireal_env(calibrate_product(ds))
    r = np.random.default_rng(0)
    X = env.draw_contexts(500, r)
    _, reg = env.step_batch(X, env.oracle_prices(X), r)
    oracle_regret = float(np.max(np.abs(reg)))

    # small slice of the fixture, standardised, against an independent Newton reference
    sub = ProductDataset(ds.product_id, ds.date[:40], ds.price[:40], ds.units_ordered[:40], ds.weekday[:40],
                         ds.competitor_max_price[:40], ds.competitor_min_price[:40], ds.stock_level[:40])
    Xf = sub.features()[:, 6:]
    Z = (Xf - Xf.mean(0)) / Xf.std(0)
    fit = fit_ridge_logistic(Z, sub.price - sub.price.mean(), sub.purchases, ridge=1.0, tol=1e-12)
    ref = dense_minimiser(Z, sub.price - sub.price.mean(), sub.purchases, 1.0)
    newton_err = float(max(np.max(np.abs(fit.theta - ref[:-1])), abs(fit.intercept - ref[-1])))
    ok = thresholds and oracle_regret < 1e-9 and newton_err < 1e-6
    verdict("semi-real pipeline", ok, f"screening exact {thresholds}, oracle regret {oracle_regret:.1e}, "
                                      f"ridge-logistic vs Newton {newton_err:.1e}")
