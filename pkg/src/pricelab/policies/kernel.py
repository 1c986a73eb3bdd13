"""Nadaraya-Watson plug-in pricing with episodic exploration.

Episode ``k`` lasts ``b = base * 2^(k-1)`` steps.  Its first
``n_exp = min(floor(c * b^alpha), b)`` steps use uniform prices; the pooled
exploration data of all episodes so far then gives ``m_hat`` (unknown utility)
and a NW estimate of ``F`` and ``F'`` on the residual scale.  The rest of the
episode prices at the root of ``phi_hat(u) + m_hat(x) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..lpr import epanechnikov
from ..utility_est import ols_binary
from .base import Policy


@dataclass(frozen=True)
class KernelConfig:
    known_utility: bool = True
    beta: float = 2.0
    base_length: int = 200
    c_explore: float = 5.0
    bandwidth_scale: float = 0.5
    step: float = 0.35
    newton_iters: int = 60
    grid_n: int = 301
    density_floor: float = 1e-3

    @property
    def alpha(self) -> float:
        if self.known_utility:
            return 0.5
        return (2 * self.beta + 1) / (4 * self.beta - 1)


def exploration_count(b: int, c: float, alpha: float) -> int:
    return min(int(math.floor(c * b**alpha)), b)


def nw_cdf(u_data, y_data, grid, bandwidth: float, density_floor: float = 1e-3):
    """NW estimates of ``F = 1 - E[y | u]`` and its derivative on ``grid``."""
    s = (grid[:, None] - u_data[None, :]) / bandwidth
    k = epanechnikov(s)
    dk = np.where(np.abs(s) <= 1.0, -1.5 * s, 0.0) / bandwidth
    s0 = k.sum(axis=1)
    s1 = k @ y_data
    d0 = dk.sum(axis=1)
    d1 = dk @ y_data
    ok = s0 > 0
    safe = np.where(ok, s0, 1.0)
    surv = np.where(ok, s1 / safe, np.nan)
    dsurv = np.where(ok, (d1 * s0 - s1 * d0) / safe**2, np.nan)
    # empty windows borrow the nearest populated grid point
    if not ok.all():
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            raise ValueError("no data inside any kernel window")
        near = idx[np.abs(np.arange(grid.size)[:, None] - idx[None, :]).argmin(axis=1)]
        surv, dsurv = surv[near], dsurv[near]
    F = np.clip(1.0 - surv, 0.0, 1.0)
    f = np.maximum(-dsurv, density_floor)
    return F, f


class KernelPolicy(Policy):
    name = "kernel"

    def __init__(self, env, horizon: int, rng: np.random.Generator, cfg: KernelConfig | None = None):
        super().__init__(env, horizon, rng)
        self.cfg = cfg or KernelConfig()
        self.support = (env.cdf.support_lo, env.cdf.support_hi)
        self.m_hat = env.m if self.cfg.known_utility else None
        self.episode = 0
        self.phase = "explore"
        self._pool_x: list[np.ndarray] = []
        self._pool_p: list[np.ndarray] = []
        self._pool_y: list[np.ndarray] = []
        self._phi = None  # (grid, phi, dphi)
        self._start_episode()

    def _start_episode(self):
        self.episode += 1
        self.b = self.cfg.base_length * 2 ** (self.episode - 1)
        self.n_exp = exploration_count(self.b, self.cfg.c_explore, self.cfg.alpha)
        self.phase = "explore"
        self.remaining = self.n_exp
        self.exploit_left = self.b - self.n_exp
        if self.remaining == 0:
            self._enter_exploit()

    def frozen_steps(self, remaining: int) -> int:
        return max(1, min(remaining, self.remaining))

    def price_batch(self, X):
        X = np.atleast_2d(X)
        if self.phase == "explore" or self._phi is None:
            return self.uniform_prices(len(X))
        m = self.m_hat(X)
        return np.clip(m + self._root(m), self.p_min, self.p_max)

    def observe_batch(self, X, P, Y):
        X = np.atleast_2d(X)
        P = np.asarray(P, dtype=float)
        Y = np.asarray(Y, dtype=float)
        start = 0
        while start < len(P):
            take = min(self.remaining, len(P) - start)
            if self.phase == "explore":
                self._pool_x.append(X[start:start + take])
                self._pool_p.append(P[start:start + take])
                self._pool_y.append(Y[start:start + take])
            self.remaining -= take
            self.t += take
            start += take
            if self.remaining <= 0:
                if self.phase == "explore":
                    self._enter_exploit()
                else:
                    self._start_episode()

    def _enter_exploit(self):
        self._refit()
        self.phase = "exploit"
        self.remaining = self.exploit_left
        if self.remaining == 0:
            self._start_episode()

    def _refit(self):
        X = np.vstack(self._pool_x)
        P = np.concatenate(self._pool_p)
        Y = np.concatenate(self._pool_y)
        if not self.cfg.known_utility:
            self.m_hat = ols_binary(X, Y, self.p_max - self.p_min, p_min=self.p_min)
        u = P - self.m_hat(X)
        lo = max(float(u.min()), self.support[0])
        hi = min(float(u.max()), self.support[1])
        if not hi > lo:
            return
        grid = np.linspace(lo, hi, self.cfg.grid_n)
        h = self.cfg.bandwidth_scale * u.size ** (-1.0 / (2 * self.cfg.beta + 1))
        F, f = nw_cdf(u, Y, grid, h, self.cfg.density_floor)
        phi = grid - (1.0 - F) / f
        self._phi = (grid, phi, np.gradient(phi, grid))

    def _root(self, m: np.ndarray) -> np.ndarray:
        """Damped Newton on ``phi_hat(u) + m = 0`` started at the best grid point."""
        grid, phi, dphi = self._phi
        u = grid[np.abs(phi[None, :] + m[:, None]).argmin(axis=1)]
        for _ in range(self.cfg.newton_iters):
            g = np.interp(u, grid, phi) + m
            d = np.maximum(np.interp(u, grid, dphi), 1e-3)
            u = np.clip(u - self.cfg.step * g / d, grid[0], grid[-1])
        return u
