"""Estimated pricing transform ``phi(u) = u - (1 - F(u)) / F'(u)`` and its inverse.

Pipeline for one refit: plug-in transform from a CurveEstimate, kernel
post-smoothing with a location-dependent bandwidth, boundary perturbation
(linear arms of slope ``c1 / 2`` outside the interior knots), isotonic
projection, then piecewise-linear inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .lpr import CurveEstimate, epanechnikov

STRICT_STEP = 1e-9


class ZeroDensityError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    c_delta: float = 2.5
    c_v: float = 3.0
    kappa: float = 0.0
    beta: float = 2.0
    v_clip: tuple[float, float] = (0.0, 0.01)
    delta_clip_fraction: float = 0.10
    delta_includes_eps_m: bool = False

    def __post_init__(self):
        if self.c_delta <= 0 or self.c_v <= 0:
            raise ValueError("c_delta and c_v must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.beta < 2:
            raise ValueError("beta must be >= 2")
        lo, hi = self.v_clip
        if not 0 <= lo <= hi < 0.5:
            raise ValueError("v_clip must satisfy 0 <= lo <= hi < 0.5")
        if self.delta_clip_fraction <= 0:
            raise ValueError("delta_clip_fraction must be positive")


def _rate(n: int, beta: float) -> float:
    return n ** (-(beta - 1.0) / (2.0 * beta + 1.0))


def phi_true(u: float, F: Callable, Fprime: Callable) -> float:
    d = Fprime(u)
    if d <= 0:
        raise ZeroDensityError(f"density vanishes at u={u}")
    return u - (1.0 - F(u)) / d


def phi_initial(curve: CurveEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in transform on the curve's grid."""
    g = curve.grid
    return g, g - (1.0 - curve.f_values) / curve.deriv_values


def variable_bandwidth(
    u: float, z_lo: float, z_hi: float, n: int, T: int, cfg: SmoothingConfig, eps_m: float = 0.0
) -> float:
    """Post-smoothing bandwidth at ``u``, clamped to a fraction of the design range."""
    if not z_lo < u < z_hi:
        raise ValueError(f"u={u} outside open interval ({z_lo}, {z_hi})")
    return float(bandwidth_profile(np.array([u]), z_lo, z_hi, n, T, cfg, eps_m)[0])


def bandwidth_profile(grid, z_lo, z_hi, n, T, cfg: SmoothingConfig, eps_m: float = 0.0) -> np.ndarray:
    """Vectorised bandwidth over a grid; endpoints take the clamp value when kappa > 0."""
    grid = np.asarray(grid, dtype=float)
    width = z_hi - z_lo
    cap = cfg.delta_clip_fraction * width
    base = cfg.c_delta * _rate(max(n, 2), cfg.beta) * math.sqrt(math.log(max(T, 2)))
    if cfg.kappa == 0:
        raw = np.full(grid.shape, base)
    else:
        alpha = np.minimum(grid - z_lo, z_hi - grid) / width
        with np.errstate(divide="ignore"):
            raw = np.where(alpha > 0, base / np.sqrt(np.maximum(alpha, 0) ** cfg.kappa), np.inf)
    if cfg.delta_includes_eps_m:
        raw = raw + eps_m
    return np.minimum(raw, cap)


def boundary_fraction(n: int, T: int, eps_m: float, cfg: SmoothingConfig) -> float:
    raw = (cfg.c_v**2 * _rate(max(n, 2), cfg.beta) * math.sqrt(math.log(max(T, 2)))) ** (
        2.0 / (cfg.kappa + 2.0)
    ) + cfg.c_v * eps_m
    lo, hi = cfg.v_clip
    return float(min(max(raw, lo), hi))


def _extend_linear(grid: np.ndarray, values: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    step = grid[1] - grid[0]
    k = np.arange(1, m + 1)
    left_slope = (values[1] - values[0]) / step
    right_slope = (values[-1] - values[-2]) / step
    left_x = grid[0] - step * k[::-1]
    right_x = grid[-1] + step * k
    ext_x = np.concatenate([left_x, grid, right_x])
    ext_v = np.concatenate(
        [values[0] + left_slope * (left_x - grid[0]), values, values[-1] + right_slope * (right_x - grid[-1])]
    )
    return ext_x, ext_v


def post_smooth(grid, values, delta) -> np.ndarray:
    """Convolve a gridded function with an Epanechnikov kernel of width ``delta(u)``.

    ``delta`` is a scalar or one bandwidth per grid point.  The grid must be
    uniform; the function is extended linearly past both ends.  Weights are the
    trapezoid weights normalised to one, so affine inputs pass through exactly.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), grid.shape)
    if grid.size < 2:
        return values.copy()
    step = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), step, rtol=1e-6, atol=1e-12):
        raise ValueError("post_smooth requires a uniform grid")
    if np.all(delta <= step):
        return values.copy()
    m = int(math.ceil(float(delta.max()) / step)) + 1
    ext_x, ext_v = _extend_linear(grid, values, m)
    offsets = (ext_x[None, :] - grid[:, None]) / np.maximum(delta, 1e-300)[:, None]
    w = epanechnikov(offsets)
    return (w @ ext_v) / w.sum(axis=1)


def pool_adjacent_violators(values, weights=None) -> np.ndarray:
    """Weighted L2 projection onto nondecreasing sequences."""
    y = np.asarray(values, dtype=float)
    n = y.size
    if n == 0:
        return y.copy()
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    means: list[float] = []
    wts: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        wts.append(float(wi))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            w2 = wts[-2] + wts[-1]
            m2 = (means[-2] * wts[-2] + means[-1] * wts[-1]) / w2 if w2 > 0 else 0.5 * (means[-2] + means[-1])
            s2 = sizes[-2] + sizes[-1]
            del means[-2:], wts[-2:], sizes[-2:]
            means.append(m2)
            wts.append(w2)
            sizes.append(s2)
    return np.repeat(means, sizes)


@dataclass(frozen=True)
class TransformEstimate:
    """Strictly increasing transform: gridded on ``[v1, v2]``, linear arms of slope ``c1/2`` outside."""

    grid: np.ndarray
    phi_values: np.ndarray
    z_lo: float
    z_hi: float
    v: float
    v1: float
    v2: float
    c1: float
    # optional shift and box for the greedy design z = p - m; only pricing_rule applies them
    design_shift: float = 0.0
    design_lo: float = -np.inf
    design_hi: float = np.inf

    @property
    def arm_slope(self) -> float:
        return 0.5 * self.c1

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        s = self.arm_slope
        out = np.interp(z, self.grid, self.phi_values)
        out = np.where(z < self.v1, self.phi_values[0] + s * (z - self.v1), out)
        out = np.where(z > self.v2, self.phi_values[-1] + s * (z - self.v2), out)
        return float(out) if out.ndim == 0 else out

    def inverse(self, target):
        """Return ``(z, clamped)`` with ``phi(z) = target``; ``clamped`` flags ``z`` outside ``[z_lo, z_hi]``."""
        t = np.asarray(target, dtype=float)
        s = self.arm_slope
        z = np.interp(t, self.phi_values, self.grid)
        z = np.where(t < self.phi_values[0], self.v1 + (t - self.phi_values[0]) / s, z)
        z = np.where(t > self.phi_values[-1], self.v2 + (t - self.phi_values[-1]) / s, z)
        clamped = (z < self.z_lo) | (z > self.z_hi)
        if z.ndim == 0:
            return float(z), bool(clamped)
        return z, clamped

    def pricing_rule(self, m_hat, p_min: float, p_max: float) -> np.ndarray:
        """Greedy price ``m + phi^{-1}(-m)`` projected onto the price interval."""
        m_hat = np.asarray(m_hat, dtype=float)
        z, _ = self.inverse(-m_hat)
        z = np.clip(z + self.design_shift, self.design_lo, self.design_hi)
        return np.clip(m_hat + z, p_min, p_max)


def invert(t: TransformEstimate, target):
    return t.inverse(target)


def default_c1(grid, phi_s, v1: float, v2: float, floor: float = 0.05) -> float:
    """Half the 10th-percentile finite-difference slope of ``phi_s`` on ``[v1, v2]``."""
    grid = np.asarray(grid, dtype=float)
    phi_s = np.asarray(phi_s, dtype=float)
    inside = (grid >= v1) & (grid <= v2)
    if inside.sum() < 2:
        inside = np.ones_like(grid, dtype=bool)
    slopes = np.diff(phi_s[inside]) / np.diff(grid[inside])
    if slopes.size == 0:
        return floor
    return float(max(0.5 * np.percentile(slopes, 10), floor))


def perturb(
    grid,
    phi_s,
    z_lo: float,
    z_hi: float,
    v: float,
    c1: float,
    stage: str = "refinement",
    b0: float = 0.0,
) -> TransformEstimate:
    """Attach linear arms (refinement) or the tilt ``b0 (1 - 2 x)`` (initial stage)."""
    if not 0 <= v < 0.5:
        raise ValueError("v must lie in [0, 0.5)")
    if c1 <= 0:
        raise ValueError("c1 must be positive")
    grid = np.asarray(grid, dtype=float)
    phi_s = np.asarray(phi_s, dtype=float)
    width = z_hi - z_lo
    if stage == "initial":
        x = (grid - z_lo) / width
        return TransformEstimate(grid.copy(), phi_s + b0 * (1.0 - 2.0 * x), z_lo, z_hi, 0.0, z_lo, z_hi, c1)
    if stage != "refinement":
        raise ValueError(f"unknown stage {stage!r}")
    v1 = z_lo + v * width
    v2 = z_lo + (1.0 - v) * width
    inner = grid[(grid > v1) & (grid < v2)]
    knots = np.concatenate([[v1], inner, [v2]])
    values = np.interp(knots, grid, phi_s)
    return TransformEstimate(knots, values, z_lo, z_hi, v, v1, v2, c1)


def monotone_project(values) -> np.ndarray:
    """PAV projection plus a cumulative ``1e-9`` ramp so the result is strictly increasing."""
    fitted = pool_adjacent_violators(values)
    return fitted + STRICT_STEP * np.arange(fitted.size)


def slope_bounded_project(grid, values, lo: float, hi: float) -> np.ndarray:
    """PAV, then clip finite-difference slopes to ``[lo, hi]`` and re-level at the median offset.

    The median keeps a few wild end values (a floored density) from dragging
    the level of the whole curve.
    """
    grid = np.asarray(grid, dtype=float)
    fitted = pool_adjacent_violators(values)
    if fitted.size < 2:
        return fitted
    slopes = np.clip(np.diff(fitted) / np.diff(grid), lo, hi)
    shape = np.concatenate([[0.0], np.cumsum(slopes * np.diff(grid))])
    return shape + float(np.median(fitted - shape))


def project_transform(t: TransformEstimate, slope_cap: float = 0.0) -> TransformEstimate:
    """Monotone projection; with ``slope_cap > 0`` the knot slopes are kept in ``[c1/2, slope_cap]``."""
    if slope_cap > 0:
        if slope_cap < t.arm_slope:
            raise ValueError("slope_cap must be at least c1/2")
        return replace(t, phi_values=slope_bounded_project(t.grid, t.phi_values, t.arm_slope, slope_cap))
    return replace(t, phi_values=monotone_project(t.phi_values))
