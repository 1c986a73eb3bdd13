"""Discretised UCB pricing (DIP baseline).

``2^init_exponent`` uniform-price steps, then episodes of length ``2^j``
(``j = init_exponent, init_exponent + 1, ...``).  Each episode splits the price
interval into ``max(2, floor(20 ceil(b^(1/6))))`` bins with fresh statistics and
plays the bin maximising

    S_k / (n_k + ridge) + ucb_c * sqrt(log t / (n_k + ridge))

where ``S_k`` is the revenue collected in bin ``k``.  With ``bins="residual"``
the bins cover the noise support on the residual scale ``u = p - m_hat(x)``
instead, with ``m_hat`` fitted by least squares on the initial samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..utility_est import ols_binary
from .base import Policy


@dataclass(frozen=True)
class DipConfig:
    init_exponent: int = 7
    ucb_c: float = 1.0 / 40.0
    ridge: float = 0.1
    bins: str = "price"  # or "residual"
    known_utility: bool = True


def bin_count(b: int) -> int:
    return max(2, int(math.floor(20 * math.ceil(b ** (1.0 / 6.0)))))


class DipPolicy(Policy):
    name = "dip"

    def __init__(self, env, horizon: int, rng: np.random.Generator, cfg: DipConfig | None = None):
        super().__init__(env, horizon, rng)
        self.cfg = cfg or DipConfig()
        if self.cfg.bins not in ("price", "residual"):
            raise ValueError(f"unknown bin mode {self.cfg.bins!r}")
        self.n_init = 2**self.cfg.init_exponent
        self.j = self.cfg.init_exponent - 1
        self.remaining = self.n_init
        self.m_hat = env.m if self.cfg.known_utility else None
        self._init_x: list[np.ndarray] = []
        self._init_p: list[np.ndarray] = []
        self._init_y: list[np.ndarray] = []
        self.centers = None

    def _new_episode(self):
        self.j += 1
        b = 2**self.j
        k = bin_count(b)
        if self.cfg.bins == "price":
            edges = np.linspace(self.p_min, self.p_max, k + 1)
        else:
            edges = np.linspace(self.env.cdf.support_lo, self.env.cdf.support_hi, k + 1)
        self.centers = 0.5 * (edges[:-1] + edges[1:])
        self.counts = np.zeros(k)
        self.sums = np.zeros(k)
        self.remaining = b

    def frozen_steps(self, remaining: int) -> int:
        if self.centers is None:
            return max(1, min(remaining, self.remaining))
        return 1

    def _index(self):
        n = self.counts + self.cfg.ridge
        return self.sums / n + self.cfg.ucb_c * np.sqrt(math.log(max(self.t, 2)) / n)

    def price_batch(self, X):
        X = np.atleast_2d(X)
        if self.centers is None:
            return self.uniform_prices(len(X))
        idx = self._index()
        if self.cfg.bins == "price":
            self._last = int(np.argmax(idx))
            return np.full(len(X), self.centers[self._last])
        # residual bins: revenue of bin k at context x is p * S_k with p = m_hat(x) + u_k
        m = self.m_hat(X)
        p = np.clip(m[:, None] + self.centers[None, :], self.p_min, self.p_max)
        n = self.counts + self.cfg.ridge
        surv = self.sums / n
        bonus = self.cfg.ucb_c * math.sqrt(math.log(max(self.t, 2))) / np.sqrt(n)
        k = np.argmax(p * surv[None, :] + bonus[None, :], axis=1)
        self._last = int(k[0])
        return p[np.arange(len(X)), k]

    def observe_batch(self, X, P, Y):
        X = np.atleast_2d(X)
        P = np.asarray(P, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if self.centers is None:
            self._init_x.append(X)
            self._init_p.append(P)
            self._init_y.append(Y)
            self.t += len(P)
            self.remaining -= len(P)
            if self.remaining <= 0:
                if self.m_hat is None:
                    Xa = np.vstack(self._init_x)
                    self.m_hat = ols_binary(Xa, np.concatenate(self._init_y), self.p_max - self.p_min,
                                            p_min=self.p_min)
                self._new_episode()
            return
        for p, y in zip(P, Y):
            k = self._last
            self.counts[k] += 1
            # residual mode tracks the purchase rate, price mode the revenue
            self.sums[k] += y if self.cfg.bins == "residual" else p * y
            self.t += 1
            self.remaining -= 1
            if self.remaining <= 0:
                self._new_episode()
