import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pricelab.calibrate import (
    ProductDataset,
    build_semireal_env,
    calibrate_product,
    fit_monotone_cdf,
    fit_ridge_logistic,
    gaussian_smooth,
    is_usable,
    isotonic_cdf,
    load_model,
    load_products_csv,
    logistic_objective,
    save_model,
    screen_products,
)

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "fixtures", "products.csv")


def make_ds(n, n_buy, pid="X"):
    units = np.zeros(n, dtype=int)
    units[:n_buy] = 1
    return ProductDataset(pid, np.array(["d"] * n), np.full(n, 10.0), units, np.arange(n) % 7,
                          np.full(n, 12.0), np.full(n, 8.0), np.full(n, 50.0))


def test_screening_thresholds():
    assert not is_usable(make_ds(299, 150))
    assert not is_usable(make_ds(300, 150))
    assert is_usable(make_ds(301, 150))
    assert is_usable(make_ds(400, 200))
    assert not is_usable(make_ds(400, 384))  # 0.96 purchase fraction
    assert not is_usable(make_ds(400, 20))  # exactly 0.05


def test_screening_idempotent_and_order_free():
    ds = load_products_csv(FIXTURE)
    kept = screen_products(ds)
    assert [d.product_id for d in kept] == ["P01", "P02", "P03", "P04"]
    assert [d.product_id for d in screen_products(kept)] == ["P01", "P02", "P03", "P04"]
    assert sorted(d.product_id for d in screen_products(ds[::-1])) == ["P01", "P02", "P03", "P04"]


def test_symmetric_features_give_zero_slope():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    p = np.array([1.0, 1.0, 2.0, 2.0])
    d = np.array([1.0, 1.0, 0.0, 0.0])
    fit = fit_ridge_logistic(X, p, d, ridge=0.5)
    assert abs(fit.theta[0]) < 1e-8


def test_large_ridge_shrinks_to_zero():
    r = np.random.default_rng(0)
    X = r.normal(size=(100, 3))
    p = r.uniform(0, 2, 100)
    d = (r.uniform(size=100) < 0.5).astype(float)
    norms = [np.linalg.norm(fit_ridge_logistic(X, p, d, ridge=lam).theta) for lam in (1.0, 1e3, 1e6)]
    assert norms[0] > norms[1] > norms[2] and norms[2] < 1e-4


def dense_minimiser(X, p, d, ridge):
    """Independent reference: Newton steps on the objective with numerically differentiated derivatives."""
    k = X.shape[1]
    f = lambda w: logistic_objective(w[:k], w[k], X, p, d, ridge)
    w = np.zeros(k + 1)
    eps = 1e-5
    for _ in range(100):
        g = np.array([(f(w + eps * e) - f(w - eps * e)) / (2 * eps) for e in np.eye(k + 1)])
        H = np.array([[(f(w + eps * (a + b)) - f(w + eps * (a - b)) - f(w - eps * (a - b)) + f(w - eps * (a + b)))
                       / (4 * eps * eps) for b in np.eye(k + 1)] for a in np.eye(k + 1)])
        step = np.linalg.solve(H, g)
        w = w - step
        if np.linalg.norm(step) < 1e-12:
            break
    return w


def test_six_point_instance_matches_reference():
    X = np.array([[0.5, 1.0], [1.5, -0.5], [-1.0, 0.3], [0.2, 0.2], [1.0, 1.0], [-0.4, -1.2]])
    p = np.array([1.0, 0.5, 1.5, 0.8, 1.2, 0.3])
    d = np.array([1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    fit = fit_ridge_logistic(X, p, d, ridge=1.0, tol=1e-12)
    ref = dense_minimiser(X, p, d, 1.0)
    assert np.allclose(fit.theta, ref[:2], atol=1e-6)
    assert fit.intercept == pytest.approx(ref[2], abs=1e-6)
    assert np.all(np.diff(fit.objective_trace) <= 1e-12)


def test_isotonic_example():
    keys, F = isotonic_cdf([0.0, 1.0, 2.0], [0.9, 0.2, 0.8])
    assert np.allclose(1 - F, [0.9, 0.5, 0.5])
    assert np.array_equal(keys, [0.0, 1.0, 2.0])


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(0.5, 6.0))
def test_smoothed_cdf_is_monotone_with_unit_ends(seed, sigma):
    r = np.random.default_rng(seed)
    u = r.normal(size=200)
    d = (r.uniform(size=200) < 1 / (1 + np.exp(u))).astype(float)
    cdf = fit_monotone_cdf(u, d, sigma=sigma, grid_n=201)
    assert cdf.F[0] == 0.0 and cdf.F[-1] == 1.0
    assert np.all(np.diff(cdf.F) >= 0)
    assert np.all(np.diff(gaussian_smooth(np.sort(r.uniform(size=50)), sigma)) >= -1e-12)


def test_semireal_pipeline(tmp_path):
    ds = screen_products(load_products_csv(FIXTURE))[0]
    model = calibrate_product(ds)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.theta, model.theta) and np.array_equal(back.F, model.F)
    assert back.price_bounds == model.price_bounds
    env = build_semireal_env(back)
    r = np.random.default_rng(0)
    X = env.draw_contexts(200, r)
    P = env.oracle_prices(X)
    assert np.all((P >= model.price_bounds[0]) & (P <= model.price_bounds[1]))
    _, reg = env.step_batch(X, P, r)
    assert np.max(np.abs(reg)) < 1e-9
    _, reg = env.step_batch(X, r.uniform(*model.price_bounds, 200), r)
    assert np.all(reg >= -1e-9)
