"""Local polynomial regression with simultaneous derivative estimates.

The estimator fits, at each centre ``c``, a weighted least-squares polynomial in
the scaled offset ``s = (u - c) / h`` with basis ``[1, s, s^2/2!, ..., s^q/q!]``
and Epanechnikov weights.  The intercept estimates the regression function and
the slope coefficient divided by ``h`` estimates its first derivative.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

RIDGE = 1e-8


class DegenerateWindowError(ValueError):
    """Too few distinct design points inside the kernel window."""


@dataclass(frozen=True)
class KernelSpec:
    family: str = "epanechnikov"
    support: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.family != "epanechnikov":
            raise ValueError(f"unsupported kernel family {self.family!r}")


EPANECHNIKOV = KernelSpec()


def kernel_eval(spec: KernelSpec, u):
    """Epanechnikov kernel ``0.75 (1 - u^2)`` on ``[-1, 1]``; accepts arrays."""
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(out) if out.ndim == 0 else out


def epanechnikov(u: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


@dataclass(frozen=True)
class LocalFit:
    center: float
    coefficients: np.ndarray
    gram_min_eigenvalue: float
    effective_count: int


@dataclass(frozen=True)
class CurveEstimate:
    """Gridded estimates of a CDF and its density."""

    grid: np.ndarray
    f_values: np.ndarray
    deriv_values: np.ndarray
    bandwidth: float
    support_lo: float
    support_hi: float
    density_floor: float

    def cdf(self, u):
        return np.interp(u, self.grid, self.f_values)

    def density(self, u):
        return np.interp(u, self.grid, self.deriv_values)


def _basis(s: np.ndarray, q: int) -> np.ndarray:
    return np.stack([s**k / factorial(k) for k in range(q + 1)], axis=-1)


def local_poly_fit(u, y, center: float, bandwidth: float, order: int) -> LocalFit:
    """Weighted least-squares polynomial fit of order ``order`` around ``center``.

    Raises DegenerateWindowError when fewer than ``order + 1`` distinct design
    points carry positive kernel weight.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if order < 0:
        raise ValueError("order must be nonnegative")
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    s = (u - center) / bandwidth
    w = epanechnikov(s)
    active = w > 0
    count = int(active.sum())
    if count < order + 1 or np.unique(u[active]).size < order + 1:
        raise DegenerateWindowError(
            f"window at {center:.6g} has {count} weighted points, need {order + 1} distinct"
        )
    s, w, ya = s[active], w[active], y[active]
    X = _basis(s, order)
    gram = X.T @ (w[:, None] * X)
    rhs = X.T @ (w * ya)
    eig = np.linalg.eigvalsh(gram)
    min_eig = max(float(eig[0]), 0.0)
    if eig[0] <= 1e-12 * max(eig[-1], 1.0):
        gram = gram + RIDGE * np.eye(order + 1)
    coef = np.linalg.solve(gram, rhs)
    return LocalFit(float(center), coef, min_eig, count)


def estimate_cdf_and_density(
    u,
    y,
    grid,
    bandwidth: float,
    order: int,
    support_lo: float,
    support_hi: float,
    density_floor: float = 1e-3,
) -> CurveEstimate:
    """Estimate ``F`` and ``F'`` from binary purchases ``y`` with ``E[y | u] = 1 - F(u)``."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if u.size == 0:
        raise ValueError("no samples")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")

    order_idx = np.argsort(u, kind="stable")
    us, ys = u[order_idx], y[order_idx]
    lo = np.searchsorted(us, grid - bandwidth, side="right")
    hi = np.searchsorted(us, grid + bandwidth, side="left")

    level = np.full(grid.size, np.nan)
    slope = np.full(grid.size, np.nan)
    for i, c in enumerate(grid):
        try:
            fit = local_poly_fit(us[lo[i]:hi[i]], ys[lo[i]:hi[i]], c, bandwidth, order)
        except DegenerateWindowError:
            continue
        level[i] = fit.coefficients[0]
        slope[i] = fit.coefficients[1] if order >= 1 else 0.0

    ok = np.flatnonzero(~np.isnan(level))
    if ok.size == 0:
        raise DegenerateWindowError("every grid window is degenerate")
    if ok.size < grid.size:
        # nearest successful fit by grid index
        idx = np.arange(grid.size)
        pos = np.clip(np.searchsorted(ok, idx), 1, max(ok.size - 1, 1))
        left = ok[np.clip(pos - 1, 0, ok.size - 1)]
        right = ok[np.clip(pos, 0, ok.size - 1)]
        nearest = np.where(np.abs(idx - left) <= np.abs(right - idx), left, right)
        level, slope = level[nearest], slope[nearest]

    f_values = np.clip(1.0 - level, 0.0, 1.0)
    deriv = -slope / bandwidth
    f_values[grid <= support_lo] = 0.0
    f_values[grid >= support_hi] = 1.0
    deriv = np.maximum(deriv, density_floor)
    return CurveEstimate(
        grid=grid,
        f_values=f_values,
        deriv_values=deriv,
        bandwidth=float(bandwidth),
        support_lo=float(support_lo),
        support_hi=float(support_hi),
        density_floor=float(density_floor),
    )
