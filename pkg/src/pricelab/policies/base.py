"""Two-call pricing protocol shared by every policy.

Harnesses call ``next_price(x)`` then ``observe(x, p, y)``.  Policies whose
pricing rule is frozen for a stretch of steps also report that stretch through
``frozen_steps`` so the harness can price a whole block at once; the batch path
and the per-step path produce the same prices for the same random stream.
"""

from __future__ import annotations

import numpy as np


class Policy:
    name = "policy"

    def __init__(self, env, horizon: int, rng: np.random.Generator):
        self.env = env
        self.horizon = int(horizon)
        self.rng = rng
        self.p_min, self.p_max = env.price_range
        self.t = 0
        self.events: list[dict] = []

    def frozen_steps(self, remaining: int) -> int:
        """Number of upcoming steps priced by one fixed (possibly randomised) rule."""
        return 1

    def price_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observe_batch(self, X: np.ndarray, P: np.ndarray, Y: np.ndarray) -> None:
        self.t += len(P)

    def next_price(self, x) -> float:
        return float(self.price_batch(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def observe(self, x, p: float, y: int) -> None:
        self.observe_batch(np.atleast_2d(np.asarray(x, dtype=float)), np.array([p]), np.array([y]))

    def uniform_prices(self, k: int) -> np.ndarray:
        return self.rng.uniform(self.p_min, self.p_max, size=k)


class UniformPolicy(Policy):
    name = "uniform"

    def frozen_steps(self, remaining: int) -> int:
        return remaining

    def price_batch(self, X):
        return self.uniform_prices(len(X))


class OraclePolicy(Policy):
    name = "oracle"

    def frozen_steps(self, remaining: int) -> int:
        return remaining

    def price_batch(self, X):
        return self.env.oracle_prices(X)


def uniform_policy(price_range, rng: np.random.Generator) -> float:
    lo, hi = price_range
    return float(rng.uniform(lo, hi))


def oracle_policy(env, x) -> float:
    return env.oracle_price(x)
