"""Ground-truth demand environments.

Purchase probability is ``1 - F(p - m(x))``.  ``F`` is either the synthetic
smooth-plus-bumps CDF or a calibrated CDF tabulated on a grid; either way it is
evaluated by linear interpolation on a dense grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

DENSE_GRID = 4096
SEARCH_GRID = 2048


class ConfigurationError(ValueError):
    pass


def smoothstep9(t):
    """Degree-9 smoothstep: 0 below 0, 1 above 1, zero derivatives to order 4 at both ends."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    out = tc**5 * (126.0 + tc * (-420.0 + tc * (540.0 + tc * (-315.0 + 70.0 * tc))))
    out = np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, out))
    return float(out) if out.ndim == 0 else out


def smoothstep9_deriv(t):
    t = np.asarray(t, dtype=float)
    out = np.where((t > 0) & (t < 1), 630.0 * t**4 * (1.0 - t) ** 4, 0.0)
    return float(out) if out.ndim == 0 else out


def bump(s):
    """Standard C-infinity bump ``exp(-1 / (1 - s^2))`` on ``|s| < 1``."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    denom = np.where(inside, 1.0 - s * s, 1.0)
    out = np.where(inside, np.exp(-1.0 / denom), 0.0)
    return float(out) if out.ndim == 0 else out


def bump_deriv(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    denom = np.where(inside, 1.0 - s * s, 1.0)
    out = np.where(inside, np.exp(-1.0 / denom) * (-2.0 * s / denom**2), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SyntheticCdf:
    """Smoothstep baseline on ``[u_min, u_max]`` plus ``n_bumps`` alternating bumps.

    ``centers`` default to equally spaced points in ``[-0.2, 0.2]`` and ``signs``
    to ``+1, -1, +1, ...``.
    """

    u_min: float = -0.25
    u_max: float = 0.25
    support_lo: float = -0.3
    support_hi: float = 0.3
    n_bumps: int = 10
    centers: tuple[float, ...] | None = None
    half_width: float = 1.0 / 45.0
    rho: float = 5.0
    beta: float = 2.0
    signs: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.u_min < self.u_max:
            raise ConfigurationError("u_min must be below u_max")
        if not self.support_lo <= self.u_min or not self.u_max <= self.support_hi:
            raise ConfigurationError("support must contain [u_min, u_max]")
        if self.n_bumps < 0 or self.half_width <= 0:
            raise ConfigurationError("need n_bumps >= 0 and half_width > 0")
        c = self.bump_centers
        if len(c) != self.n_bumps or len(self.bump_signs) != self.n_bumps:
            raise ConfigurationError("centers/signs length must equal n_bumps")
        if self.n_bumps and (
            min(c) < self.u_min + self.half_width - 1e-12 or max(c) > self.u_max - self.half_width + 1e-12
        ):
            raise ConfigurationError("bump supports must lie inside [u_min, u_max]")

    @property
    def bump_centers(self) -> tuple[float, ...]:
        if self.centers is not None:
            return tuple(self.centers)
        if self.n_bumps == 1:
            return (0.0,)
        return tuple(np.linspace(-0.2, 0.2, self.n_bumps).tolist())

    @property
    def bump_signs(self) -> tuple[int, ...]:
        if self.signs is not None:
            return tuple(self.signs)
        return tuple((-1) ** k for k in range(self.n_bumps))

    @property
    def amplitude(self) -> float:
        return self.rho * self.half_width**self.beta


class TabulatedCdf:
    """CDF and density tabulated on an increasing grid; linear interpolation between nodes."""

    def __init__(self, grid, F, f):
        self.grid = np.asarray(grid, dtype=float)
        self.F = np.asarray(F, dtype=float)
        self.f = np.asarray(f, dtype=float)
        self.support_lo = float(self.grid[0])
        self.support_hi = float(self.grid[-1])

    def cdf(self, u):
        return np.interp(u, self.grid, self.F, left=0.0, right=1.0)

    def pdf(self, u):
        return np.interp(u, self.grid, self.f, left=0.0, right=0.0)

    def phi(self, u):
        u = np.asarray(u, dtype=float)
        d = self.pdf(u)
        surv = 1.0 - self.cdf(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(d > 0, u - surv / np.where(d > 0, d, 1.0), np.where(surv > 0, -np.inf, u))
        return out


def build_cdf(cfg: SyntheticCdf, n_grid: int = DENSE_GRID) -> TabulatedCdf:
    grid = np.linspace(cfg.support_lo, cfg.support_hi, n_grid)
    # tabulate u_min / u_max exactly so F hits 0 and 1 there
    grid = np.union1d(grid, [cfg.u_min, cfg.u_max])
    width = cfg.u_max - cfg.u_min
    t = (grid - cfg.u_min) / width
    F = smoothstep9(t)
    f = smoothstep9_deriv(t) / width
    A = cfg.amplitude
    h = cfg.half_width
    for c, sgn in zip(cfg.bump_centers, cfg.bump_signs):
        s = (grid - c) / h
        F = F + sgn * A * bump(s)
        f = f + sgn * A / h * bump_deriv(s)
    F = np.clip(F, 0.0, 1.0)
    f = np.maximum(f, 0.0)
    if np.any(np.diff(F) < -1e-12):
        bad = grid[1:][np.diff(F) < -1e-12][0]
        raise ConfigurationError(f"bump amplitude breaks monotonicity of F near u={bad:.4f}")
    return TabulatedCdf(grid, F, f)


# --------------------------------------------------------------------------- utilities


@dataclass(frozen=True)
class UtilityModel:
    """Mean utility: ``linear`` / ``sparse_linear`` evaluate ``theta @ x + intercept``;
    ``additive`` sums monotone components ``w_j (0.6 x_j + 0.4 smoothstep9(x_j))``."""

    variant: str = "linear"
    theta: tuple[float, ...] = (1.0,)
    intercept: float = 0.0
    support: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.variant not in {"linear", "sparse_linear", "additive"}:
            raise ConfigurationError(f"unknown utility variant {self.variant!r}")

    @property
    def dim(self) -> int:
        return len(self.theta)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        th = np.asarray(self.theta, dtype=float)
        if self.variant == "additive":
            comp = 0.6 * X + 0.4 * smoothstep9(X)
            return comp @ th + self.intercept
        return X @ th + self.intercept


@dataclass(frozen=True)
class ContextDist:
    kind: str = "uniform_interval"
    x_min: float = 0.35
    x_max: float = 0.65
    dim: int = 1
    pool: np.ndarray | None = field(default=None, compare=False, hash=False)

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind in ("uniform_interval", "uniform_box"):
            return rng.uniform(self.x_min, self.x_max, size=(k, self.dim))
        if self.kind == "empirical_pool":
            idx = rng.integers(0, self.pool.shape[0], size=k)
            return self.pool[idx]
        raise ConfigurationError(f"unknown context distribution {self.kind!r}")

    def corners(self) -> np.ndarray:
        if self.kind == "empirical_pool":
            return self.pool
        if self.dim <= 12:
            grid = np.array(np.meshgrid(*[[self.x_min, self.x_max]] * self.dim)).reshape(self.dim, -1).T
            return grid
        return np.vstack([np.full(self.dim, self.x_min), np.full(self.dim, self.x_max)])


@dataclass(frozen=True)
class OutcomeRecord:
    t: int
    x: np.ndarray
    p: float
    y: int
    regret_inc: float


class DemandEnvironment:
    def __init__(self, utility, cdf: TabulatedCdf, price_range=(0.0, 1.0), contexts: ContextDist | None = None,
                 seed: int = 0, smooth: bool = True):
        p_min, p_max = price_range
        if not p_min < p_max:
            raise ConfigurationError("p_min must be below p_max")
        self.utility = utility
        self.cdf = cdf
        self.p_min = float(p_min)
        self.p_max = float(p_max)
        self.contexts = contexts or ContextDist()
        self.seed = seed
        self.smooth = smooth
        self._table = None

    @property
    def price_range(self) -> tuple[float, float]:
        return self.p_min, self.p_max

    def m(self, X) -> np.ndarray:
        return self.utility(X)

    def purchase_prob(self, X, p) -> np.ndarray:
        return 1.0 - self.cdf.cdf(np.asarray(p, dtype=float) - self.m(X))

    def revenue(self, X, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return p * self.purchase_prob(X, p)

    # ----------------------------------------------------------------- oracle

    def _revenue_m(self, m, p):
        return p * (1.0 - self.cdf.cdf(p - m))

    def _grid_argmax(self, m: np.ndarray) -> np.ndarray:
        """Grid search on SEARCH_GRID prices, then golden-section refinement within one cell."""
        prices = np.linspace(self.p_min, self.p_max, SEARCH_GRID)
        step = prices[1] - prices[0]
        best = np.empty(m.size)
        for chunk in range(0, m.size, 256):
            mm = m[chunk:chunk + 256, None]
            rev = self._revenue_m(mm, prices[None, :])
            best[chunk:chunk + 256] = prices[np.argmax(rev, axis=1)]
        lo = np.maximum(best - step, self.p_min)
        hi = np.minimum(best + step, self.p_max)
        gr = (math.sqrt(5) - 1) / 2
        for _ in range(60):
            a = hi - gr * (hi - lo)
            b = lo + gr * (hi - lo)
            left_better = self._revenue_m(m, a) >= self._revenue_m(m, b)
            hi = np.where(left_better, b, hi)
            lo = np.where(left_better, lo, a)
        cand = 0.5 * (lo + hi)
        # keep the grid point if refinement did not improve on it
        return np.where(self._revenue_m(m, cand) >= self._revenue_m(m, best), cand, best)

    def phi_inverse_price(self, m_value: float) -> float:
        """Optimal price from first-order-condition roots ``phi(u) = -m`` (plus interval endpoints)."""
        g = self.cdf.grid
        phi = self.cdf.phi(g)
        resid = phi + m_value
        finite = np.isfinite(resid)
        cands = [self.p_min, self.p_max]
        sign = np.sign(resid)
        idx = np.flatnonzero(finite[:-1] & finite[1:] & (sign[:-1] * sign[1:] <= 0) & (sign[:-1] != sign[1:]))
        for i in idx:
            r0, r1 = resid[i], resid[i + 1]
            u = g[i] if r1 == r0 else g[i] - r0 * (g[i + 1] - g[i]) / (r1 - r0)
            p = m_value + u
            if self.p_min <= p <= self.p_max:
                cands.append(p)
        cands = np.asarray(cands)
        return float(cands[np.argmax(self._revenue_m(m_value, cands))])

    def oracle_price(self, x, check: bool = True) -> float:
        m_value = float(self.m(np.atleast_2d(x))[0])
        p_grid = float(self._grid_argmax(np.array([m_value]))[0])
        if check and self.smooth:
            p_phi = self.phi_inverse_price(m_value)
            if abs(p_phi - p_grid) > 1e-3:
                raise AssertionError(f"oracle routes disagree at m={m_value}: {p_phi} vs {p_grid}")
        return p_grid

    def _oracle_table(self):
        if self._table is None:
            mv = self.m(self.contexts.corners())
            lo, hi = float(mv.min()), float(mv.max())
            pad = 1e-6 + 1e-3 * (hi - lo)
            ms = np.linspace(lo - pad, hi + pad, SEARCH_GRID)
            ps = self._grid_argmax(ms)
            self._table = (ms, ps, self._revenue_m(ms, ps))
        return self._table

    def oracle_prices(self, X) -> np.ndarray:
        return self._oracle_lookup(self.m(X))[0]

    def optimal_revenue(self, X) -> np.ndarray:
        return self._oracle_lookup(self.m(X))[1]

    def _oracle_lookup(self, m):
        ms, ps, _ = self._oracle_table()
        out_p = np.interp(m, ms, ps)
        outside = (m < ms[0]) | (m > ms[-1])
        if outside.any():
            out_p[outside] = self._grid_argmax(m[outside])
        # score the optimum at the exact m: the interpolated price and its two table
        # neighbours; interpolating revenue itself overshoots because V(m) is convex
        j = np.clip(np.searchsorted(ms, m), 1, ms.size - 1)
        out_r = np.maximum.reduce([self._revenue_m(m, out_p), self._revenue_m(m, ps[j - 1]),
                                   self._revenue_m(m, ps[j])])
        out_r[outside] = self._revenue_m(m[outside], out_p[outside])
        return out_p, out_r

    # ------------------------------------------------------------------ stepping

    def draw_contexts(self, k: int, rng: np.random.Generator) -> np.ndarray:
        return self.contexts.sample(k, rng)

    def step_batch(self, X, p, rng: np.random.Generator):
        """Draw purchases and per-step regret for a batch of (context, price)."""
        p = np.asarray(p, dtype=float)
        m = self.m(X)
        prob = 1.0 - self.cdf.cdf(p - m)
        y = (rng.random(p.shape) < prob).astype(np.int8)
        _, r_star = self._oracle_lookup(m)
        regret = np.maximum(r_star - p * prob, 0.0)
        return y, regret

    def step(self, x, p: float, rng: np.random.Generator, t: int = 0) -> OutcomeRecord:
        if not self.p_min - 1e-12 <= p <= self.p_max + 1e-12:
            raise ValueError(f"price {p} outside [{self.p_min}, {self.p_max}]")
        X = np.atleast_2d(x)
        y, reg = self.step_batch(X, np.array([p]), rng)
        return OutcomeRecord(t, X[0], float(p), int(y[0]), float(reg[0]))


def purchase_prob(env: DemandEnvironment, x, p):
    return env.purchase_prob(np.atleast_2d(x), p)


def oracle_price(env: DemandEnvironment, x) -> float:
    return env.oracle_price(x)


# ------------------------------------------------------------------ configuration


@dataclass(frozen=True)
class EnvConfig:
    """Serializable description of an environment."""

    kind: str = "synthetic"
    beta: float = 2.0
    n_bumps: int = 10
    rho: float = 5.0
    half_width: float = 1.0 / 45.0
    u_min: float = -0.25
    u_max: float = 0.25
    support_lo: float = -0.3
    support_hi: float = 0.3
    utility: str = "linear"
    theta: tuple[float, ...] = (1.0,)
    intercept: float = 0.0
    context: str = "uniform_interval"
    x_min: float = 0.35
    x_max: float = 0.65
    p_min: float = 0.0
    p_max: float = 1.0
    model_path: str = ""


def synthetic_cdf_from(cfg: EnvConfig) -> SyntheticCdf:
    return SyntheticCdf(
        u_min=cfg.u_min, u_max=cfg.u_max, support_lo=cfg.support_lo, support_hi=cfg.support_hi,
        n_bumps=cfg.n_bumps, half_width=cfg.half_width, rho=cfg.rho, beta=cfg.beta,
    )


@lru_cache(maxsize=32)
def _cached_cdf(cdf_cfg: SyntheticCdf) -> TabulatedCdf:
    return build_cdf(cdf_cfg)


def build_env(cfg: EnvConfig, seed: int = 0) -> DemandEnvironment:
    if cfg.kind == "semireal":
        from .calibrate import build_semireal_env, load_model

        return build_semireal_env(load_model(cfg.model_path), seed)
    if cfg.kind != "synthetic":
        raise ConfigurationError(f"unknown environment kind {cfg.kind!r}")
    cdf = _cached_cdf(synthetic_cdf_from(cfg))
    support = None
    if cfg.utility == "sparse_linear":
        support = tuple(int(i) for i in np.flatnonzero(np.asarray(cfg.theta)))
    util = UtilityModel(cfg.utility, tuple(cfg.theta), cfg.intercept, support)
    kind = "uniform_interval" if len(cfg.theta) == 1 and cfg.context == "uniform_interval" else "uniform_box"
    ctx = ContextDist(kind, cfg.x_min, cfg.x_max, len(cfg.theta))
    return DemandEnvironment(util, cdf, (cfg.p_min, cfg.p_max), ctx, seed)


@lru_cache(maxsize=16)
def cached_env(cfg: EnvConfig) -> DemandEnvironment:
    """Shared environment per configuration; the oracle table is built once."""
    return build_env(cfg)


def uniform_noise_env(lo: float = -0.3, hi: float = 0.3, theta: float = 1.0, x_range=(0.35, 0.65),
                      price_range=(0.0, 1.0), n_grid: int = DENSE_GRID) -> DemandEnvironment:
    """Linear utility ``m(x) = theta x`` with noise uniform on ``[lo, hi]``; optimal prices have closed forms."""
    grid = np.linspace(lo, hi, n_grid)
    cdf = TabulatedCdf(grid, (grid - lo) / (hi - lo), np.full(n_grid, 1.0 / (hi - lo)))
    util = UtilityModel("linear", (float(theta),))
    return DemandEnvironment(util, cdf, price_range, ContextDist("uniform_interval", x_range[0], x_range[1], 1))
