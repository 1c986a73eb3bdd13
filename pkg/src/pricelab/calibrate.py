"""Semi-real calibration: per-product sales records -> single-index demand environment.

Model: ``P(D = 1 | x, p) = 1 - F(p - m(x))`` with ``m(x) = theta @ x + c0``.
``m`` comes from a ridge logistic fit with the price coefficient pinned to -1;
``F`` is an isotonic fit of ``1 - D`` on the residual ``u = p - m_hat(x)``,
smoothed with a Gaussian kernel.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .demand_env import ContextDist, DemandEnvironment, TabulatedCdf, UtilityModel
from .transform import pool_adjacent_violators

CSV_FIELDS = ("product_id", "date", "price", "units_ordered", "weekday", "competitor_max_price",
              "competitor_min_price", "stock_level")
FEATURE_NAMES = ("wd1", "wd2", "wd3", "wd4", "wd5", "wd6", "competitor_max_price", "competitor_min_price",
                 "stock_level")
MIN_OBS = 300
FRACTION_BOUNDS = (0.05, 0.95)


class ConvergenceError(RuntimeError):
    pass


class DataError(ValueError):
    pass


@dataclass
class ProductDataset:
    product_id: str
    date: np.ndarray
    price: np.ndarray
    units_ordered: np.ndarray
    weekday: np.ndarray
    competitor_max_price: np.ndarray
    competitor_min_price: np.ndarray
    stock_level: np.ndarray

    def __post_init__(self):
        n = len(self.price)
        if n == 0:
            raise DataError(f"product {self.product_id}: no rows")
        for name in CSV_FIELDS[1:]:
            if len(getattr(self, name)) != n:
                raise DataError(f"product {self.product_id}: column {name} has wrong length")
        if np.any(self.price <= 0):
            raise DataError(f"product {self.product_id}: prices must be positive")
        if np.any(self.units_ordered < 0):
            raise DataError(f"product {self.product_id}: negative units")
        if np.any((self.weekday < 0) | (self.weekday > 6)):
            raise DataError(f"product {self.product_id}: weekday outside 0..6")

    @property
    def n(self) -> int:
        return len(self.price)

    @property
    def purchases(self) -> np.ndarray:
        return (self.units_ordered > 0).astype(float)

    @property
    def purchase_fraction(self) -> float:
        return float(self.purchases.mean())

    def features(self) -> np.ndarray:
        """Six weekday dummies (Monday = 0 is the baseline), competitor prices and stock."""
        wd = np.stack([(self.weekday == k).astype(float) for k in range(1, 7)], axis=1)
        return np.column_stack([wd, self.competitor_max_price, self.competitor_min_price, self.stock_level])


def _from_rows(pid: str, rows: list[dict]) -> ProductDataset:
    col = {k: [r[k] for r in rows] for k in CSV_FIELDS[1:]}
    return ProductDataset(
        pid, np.array(col["date"], dtype=str), np.array(col["price"], dtype=float),
        np.array(col["units_ordered"], dtype=float).astype(int), np.array(col["weekday"], dtype=float).astype(int),
        np.array(col["competitor_max_price"], dtype=float), np.array(col["competitor_min_price"], dtype=float),
        np.array(col["stock_level"], dtype=float),
    )


def load_products_csv(path) -> list[ProductDataset]:
    """Read a long-format CSV keyed by product_id, or a directory of per-product CSVs."""
    if os.path.isdir(path):
        out = []
        for name in sorted(os.listdir(path)):
            if name.endswith(".csv"):
                out.extend(load_products_csv(os.path.join(path, name)))
        return out
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        groups: dict[str, list[dict]] = {}
        for r in reader:
            groups.setdefault(r["product_id"], []).append(r)
    return [_from_rows(pid, rows) for pid, rows in groups.items()]


def is_usable(ds: ProductDataset, min_obs: int = MIN_OBS, bounds=FRACTION_BOUNDS) -> bool:
    frac = ds.purchase_fraction
    return ds.n > min_obs and bounds[0] < frac < bounds[1]


def screen_products(datasets, min_obs: int = MIN_OBS, bounds=FRACTION_BOUNDS) -> list[ProductDataset]:
    """Keep products with more than ``min_obs`` rows and a purchase fraction strictly inside ``bounds``."""
    return [d for d in datasets if is_usable(d, min_obs, bounds)]


# ------------------------------------------------------------------ ridge logistic


@dataclass
class LogisticFit:
    theta: np.ndarray
    intercept: float
    n_iter: int
    objective_trace: list = field(default_factory=list)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_objective(theta, c0, X, p, d, ridge: float) -> float:
    """Penalised negative log-likelihood of ``P(D=1) = sigmoid(X theta - p + c0)``."""
    eta = X @ theta + c0 - p
    # log(1 + e^eta) - d * eta, computed stably
    nll = np.logaddexp(0.0, eta) - d * eta
    return float(nll.sum() + 0.5 * ridge * theta @ theta)


def fit_ridge_logistic(features, prices, purchases, ridge: float = 1.0, tol: float = 1e-8,
                       max_iter: int = 200) -> LogisticFit:
    """Damped Newton for the ridge logistic single-index model; the intercept is unpenalised."""
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    X = np.atleast_2d(np.asarray(features, dtype=float))
    p = np.asarray(prices, dtype=float)
    d = np.asarray(purchases, dtype=float)
    n, k = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    pen = np.full(k + 1, ridge)
    pen[-1] = 0.0
    w = np.zeros(k + 1)
    # start the intercept at the pooled purchase log-odds so the curvature is not flat
    dbar = min(max(d.mean(), 1e-3), 1 - 1e-3)
    w[k] = p.mean() + math.log(dbar / (1 - dbar))
    obj = logistic_objective(w[:k], w[k], X, p, d, ridge)
    trace = [obj]
    for it in range(max_iter):
        mu = _sigmoid(A @ w - p)
        grad = A.T @ (mu - d) + pen * w
        if np.linalg.norm(grad) < tol:
            return LogisticFit(w[:k].copy(), float(w[k]), it, trace)
        H = A.T @ (A * (mu * (1 - mu))[:, None]) + np.diag(pen)
        try:
            step = np.linalg.solve(H + 1e-12 * np.eye(k + 1), grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while True:
            cand = w - t * step
            new = logistic_objective(cand[:k], cand[k], X, p, d, ridge)
            if new <= obj + 1e-4 * t * (grad @ -step) or t < 1e-12:
                break
            t *= 0.5
        if new > obj:
            # numerical floor: no further decrease is possible
            if np.linalg.norm(grad) < 1e-6:
                return LogisticFit(w[:k].copy(), float(w[k]), it, trace)
            raise ConvergenceError("line search failed to decrease the objective")
        w, obj = cand, new
        trace.append(obj)
    raise ConvergenceError(f"ridge logistic did not converge in {max_iter} iterations")


# ------------------------------------------------------------------ monotone CDF


def isotonic_cdf(u, purchases) -> tuple[np.ndarray, np.ndarray]:
    """Nondecreasing least-squares fit of ``1 - D`` on sorted ``u`` (ties pooled), clamped to [0, 1]."""
    u = np.asarray(u, dtype=float)
    d = np.asarray(purchases, dtype=float)
    if u.size == 0:
        raise DataError("empty input")
    order = np.argsort(u, kind="stable")
    us, ds = u[order], d[order]
    keys, start, counts = np.unique(us, return_index=True, return_counts=True)
    means = np.add.reduceat(1.0 - ds, start) / counts
    fit = pool_adjacent_violators(means, counts.astype(float))
    return keys, np.clip(fit, 0.0, 1.0)


def gaussian_smooth(values, sigma: float) -> np.ndarray:
    """Convolve with a Gaussian of ``sigma`` grid steps, holding the end values beyond the grid."""
    values = np.asarray(values, dtype=float)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = int(math.ceil(4 * sigma))
    k = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    k /= k.sum()
    padded = np.concatenate([np.full(r, values[0]), values, np.full(r, values[-1])])
    return np.convolve(padded, k, mode="valid")


@dataclass(frozen=True)
class MonotoneCdf:
    grid: np.ndarray
    F: np.ndarray
    sigma: float

    def tabulated(self) -> TabulatedCdf:
        return TabulatedCdf(self.grid, self.F, np.maximum(np.gradient(self.F, self.grid), 0.0))


def fit_monotone_cdf(u, purchases, sigma: float = 2.0, grid_n: int = 401, pad: float = 0.1) -> MonotoneCdf:
    """Isotonic CDF on a uniform grid padded by ``pad`` of the residual range, then Gaussian smoothing.

    ``sigma`` is in grid steps; the result is rescaled so it runs from exactly 0 to 1.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    keys, fit = isotonic_cdf(u, purchases)
    lo, hi = float(keys[0]), float(keys[-1])
    width = hi - lo if hi > lo else 1.0
    grid = np.linspace(lo - pad * width, hi + pad * width, grid_n)
    F = np.interp(grid, keys, fit)
    F[0], F[-1] = 0.0, 1.0
    F = np.maximum.accumulate(F)
    S = gaussian_smooth(F, sigma)
    S = (S - S[0]) / (S[-1] - S[0]) if S[-1] > S[0] else np.linspace(0.0, 1.0, grid_n)
    S = np.maximum.accumulate(np.clip(S, 0.0, 1.0))
    S[0], S[-1] = 0.0, 1.0
    return MonotoneCdf(grid, S, float(sigma))


# ------------------------------------------------------------------ calibrated model


@dataclass
class CalibratedModel:
    product_id: str
    theta: np.ndarray
    intercept: float
    grid: np.ndarray
    F: np.ndarray
    smoothing_sigma: float
    price_bounds: tuple[float, float]
    covariate_pool: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    ridge: float = 1.0

    def to_json(self) -> dict:
        return {
            "product_id": self.product_id,
            "theta": [float(v) for v in self.theta],
            "intercept": float(self.intercept),
            "feature_names": list(self.feature_names),
            "grid": [float(v) for v in self.grid],
            "F": [float(v) for v in self.F],
            "smoothing_sigma": float(self.smoothing_sigma),
            "price_bounds": [float(v) for v in self.price_bounds],
            "covariate_pool": [[float(v) for v in row] for row in self.covariate_pool],
            "ridge": float(self.ridge),
        }

    @classmethod
    def from_json(cls, d: dict) -> "CalibratedModel":
        return cls(
            str(d["product_id"]), np.asarray(d["theta"], dtype=float), float(d["intercept"]),
            np.asarray(d["grid"], dtype=float), np.asarray(d["F"], dtype=float), float(d["smoothing_sigma"]),
            tuple(float(v) for v in d["price_bounds"]), np.asarray(d["covariate_pool"], dtype=float),
            tuple(d.get("feature_names", FEATURE_NAMES)), float(d.get("ridge", 1.0)),
        )


def save_model(model: CalibratedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> CalibratedModel:
    with open(path) as fh:
        return CalibratedModel.from_json(json.load(fh))


def calibrate_product(ds: ProductDataset, ridge: float = 1.0, sigma: float = 2.0,
                      grid_n: int = 401) -> CalibratedModel:
    """Fit ``m`` on standardised features, map back to raw units, then fit ``F`` on the residuals."""
    X = ds.features()
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    fit = fit_ridge_logistic(Z, ds.price, ds.purchases, ridge)
    theta = fit.theta / sd
    c0 = fit.intercept - float(theta @ mu)
    u = ds.price - (X @ theta + c0)
    cdf = fit_monotone_cdf(u, ds.purchases, sigma, grid_n)
    bounds = (float(ds.price.min()), float(ds.price.max()))
    return CalibratedModel(ds.product_id, theta, c0, cdf.grid, cdf.F, sigma, bounds, X, FEATURE_NAMES, ridge)


def build_semireal_env(model: CalibratedModel, seed: int = 0) -> DemandEnvironment:
    util = UtilityModel("linear", tuple(float(v) for v in model.theta), float(model.intercept))
    pool = np.atleast_2d(np.asarray(model.covariate_pool, dtype=float))
    ctx = ContextDist("empirical_pool", dim=pool.shape[1], pool=pool)
    grid = np.asarray(model.grid, dtype=float)
    F = np.asarray(model.F, dtype=float)
    cdf = TabulatedCdf(grid, F, np.maximum(np.gradient(F, grid), 0.0))
    return DemandEnvironment(util, cdf, model.price_bounds, ctx, seed)
