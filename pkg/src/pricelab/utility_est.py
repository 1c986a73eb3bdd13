"""First-stage utility estimation from uniformly priced exploration data.

With ``p ~ Unif(p_min, p_max)`` and noise support inside the price window,
``E[(p_max - p_min) y + p_min | x] = m(x)``, so the utility is a plain
regression target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RIDGE = 1e-8
MAX_COND = 1e12


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class UtilityEstimate:
    theta_hat: np.ndarray
    model_class: str
    eps_m: float
    support_hat: tuple[int, ...] | None = None
    intercept: float = 0.0
    ridged: bool = False

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.theta_hat + self.intercept


def exploration_target(y, p_min: float, p_max: float) -> np.ndarray:
    return (p_max - p_min) * np.asarray(y, dtype=float) + p_min


def _solve_normal(X: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, bool]:
    gram = X.T @ X
    rhs = X.T @ target
    ridged = False
    if np.linalg.cond(gram) > MAX_COND:
        gram = gram + RIDGE * np.eye(gram.shape[0])
        ridged = True
        if np.linalg.cond(gram) > MAX_COND:
            raise RankDeficiencyError("design is rank deficient even after ridge fallback")
    return np.linalg.solve(gram, rhs), ridged


def ols_binary(contexts, outcomes, B: float = 1.0, intercept: bool = False, p_min: float = 0.0,
               model_class: str = "linear") -> UtilityEstimate:
    """Least squares of ``B * y`` (shifted by ``p_min`` when prices start above zero) on ``x``."""
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    n, d = X.shape
    if n < d + int(intercept):
        raise RankDeficiencyError("fewer rows than columns")
    target = exploration_target(outcomes, p_min, p_min + B)
    design = np.hstack([X, np.ones((n, 1))]) if intercept else X
    coef, ridged = _solve_normal(design, target)
    theta, c0 = (coef[:-1], float(coef[-1])) if intercept else (coef, 0.0)
    if model_class == "semireal_single_index":
        eps = eps_m_rule(model_class, n, d, theta_norm=float(np.linalg.norm(theta)), n=n)
    else:
        eps = eps_m_rule("linear", n, d)
    return UtilityEstimate(theta, model_class, eps, None, c0, ridged)


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def lasso_cd(X, target, lam: float, tol: float = 1e-8, max_sweeps: int = 100_000) -> np.ndarray:
    """Coordinate descent for ``(1/2n)||target - X b||^2 + lam ||b||_1`` with covariance updates."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    G = X.T @ X / n
    c = X.T @ np.asarray(target, dtype=float) / n
    diag = np.diag(G).copy()
    if np.any(diag <= 0):
        raise ValueError("zero column in design")
    beta = np.zeros(d)
    grad = c.copy()  # c - G beta
    full = True
    active = np.arange(d)
    for _ in range(max_sweeps):
        idx = np.arange(d) if full else active
        max_change = 0.0
        for j in idx:
            old = beta[j]
            new = soft_threshold(grad[j] + diag[j] * old, lam) / diag[j]
            if new != old:
                grad -= G[:, j] * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            if full:
                return beta
            full = True
        else:
            if full:
                active = np.flatnonzero(beta != 0)
            full = active.size == 0
    raise ConvergenceError(f"lasso did not converge in {max_sweeps} sweeps")


def lasso_threshold(contexts, outcomes, B: float, T0: int, s: int, c_lambda: float = 1.0,
                    c_inf: float = 1.0, lam: float | None = None) -> UtilityEstimate:
    """Lasso on ``(x, B y)`` followed by hard thresholding at ``c_inf * lam * sqrt(s)``."""
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    d = X.shape[1]
    if d < 1 or T0 < 2:
        raise ValueError("need d >= 1 and T0 >= 2")
    if lam is None:
        lam = c_lambda * math.sqrt(math.log(d * T0) / T0)
    beta = lasso_cd(X, B * np.asarray(outcomes, dtype=float), lam)
    keep = np.abs(beta) >= c_inf * lam * math.sqrt(s)
    theta = np.where(keep, beta, 0.0)
    support = tuple(int(i) for i in np.flatnonzero(theta))
    return UtilityEstimate(theta, "sparse_linear", eps_m_rule("sparse_linear", T0, d, s=s), support)


def eps_m_rule(model_class: str, T0: int, d: int = 1, s: int = 1, theta_norm: float = 0.0, n: int = 1) -> float:
    if model_class == "linear":
        return math.sqrt(d / T0)
    if model_class == "sparse_linear":
        return s * math.sqrt(math.log(d) / T0) if d > 1 else math.sqrt(1.0 / T0)
    if model_class == "semireal_single_index":
        return 0.05 * theta_norm / math.sqrt(n)
    raise ValueError(f"unknown model class {model_class!r}")
