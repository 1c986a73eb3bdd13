"""Stagewise greedy pricing with iterative local polynomial refits (ILPR).

Modes, in order:

``utility_exploration``  uniform prices for ``T0m`` steps, then fit ``m_hat``
                         (skipped when the utility is known);
``initial_stage``        ``T0`` steps of uniform prices (or the affine design
                         ``p = m_hat + a1 m_hat + b1``), then the initial fit;
``refinement``           stage ``l`` prices greedily for ``2^(l-1) T0`` steps
                         with the transform frozen, then refits on that
                         stage's data only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from ..lpr import DegenerateWindowError, estimate_cdf_and_density
from ..transform import (
    SmoothingConfig,
    TransformEstimate,
    bandwidth_profile,
    boundary_fraction,
    default_c1,
    perturb,
    phi_initial,
    post_smooth,
    project_transform,
)
from ..utility_est import UtilityEstimate, lasso_threshold, ols_binary
from .base import Policy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IlprConfig:
    known_utility: bool = True
    beta: float = 2.0
    T0: int = 100
    T0m: int = 0  # 0 -> ceil(sqrt(4 T))
    bandwidth_scale: float = 0.5
    grid_n: int = 301
    order: int = 0  # 0 -> 2 for unknown utility, floor(beta) for known
    density_floor: float = 1e-3
    c_delta: float = 2.5
    c_v: float = 3.0
    kappa: float = 0.0
    v_clip_hi: float = 0.01
    delta_clip_fraction: float = 0.10
    delta_includes_eps_m: bool = False
    c1: float = 0.0  # 0 -> data-driven default
    c1_floor: float = 0.05
    slope_cap: float = 0.0  # C1: upper bound on knot slopes after projection; 0 disables
    b0_const: float = 1.0
    initial_design: str = "uniform"  # or "affine"
    a1: float = 0.0  # 0 -> chosen from a pilot fit (affine design only)
    b1: float = 0.0
    affine_margin: float = 0.05
    schedule: str = "text"  # "text": stage l lasts 2^(l-1) T0; "algorithm": 2^l T0
    utility_model: str = "linear"  # linear | sparse_linear | semireal_single_index
    sparsity: int = 5
    c_lambda: float = 1.0
    c_inf: float = 1.0
    eps_m_override: float = -1.0  # >= 0 replaces the rule-based value
    validate_refits: bool = True  # box the greedy design and reject fits with a floored density there
    reject_floored: bool = True  # reject fits whose density estimate is floored under the design
    oracle_transform: bool = False  # refit with the true transform (known-utility diagnostic)
    trust_region: float = 0.5  # design may move this fraction of the fitted range past its ends; <= 0 disables

    def smoothing(self) -> SmoothingConfig:
        return SmoothingConfig(
            c_delta=self.c_delta, c_v=self.c_v, kappa=self.kappa, beta=self.beta,
            v_clip=(0.0, self.v_clip_hi), delta_clip_fraction=self.delta_clip_fraction,
            delta_includes_eps_m=self.delta_includes_eps_m,
        )

    @property
    def lpr_order(self) -> int:
        if self.order > 0:
            return self.order
        return int(math.floor(self.beta)) if self.known_utility else 2


class StageRefitFailed(RuntimeError):
    pass


def stage_lengths(T0: int, horizon: int, schedule: str = "text") -> list[int]:
    """Refinement stage lengths after the initial stage, truncated at the horizon budget."""
    if T0 < 1:
        raise ValueError("T0 must be positive")
    out, used, l = [], 0, 1
    while used < horizon:
        n = 2 ** (l - 1) * T0 if schedule == "text" else 2**l * T0
        n = min(n, horizon - used)
        out.append(n)
        used += n
        l += 1
    return out


def fit_transform(u, y, *, cfg: IlprConfig, horizon: int, support: tuple[float, float], stage: str,
                  eps_m: float = 0.0, targets=None) -> TransformEstimate:
    """One full refit: LPR -> plug-in transform -> post-smoothing -> perturbation -> isotonic projection.

    With ``cfg.validate_refits`` and ``targets`` (values of ``-m_hat``) the greedy
    design is boxed inside the noise support and, for refinement fits, within
    ``trust_region`` design widths of the fitted range; the fit is rejected
    (StageRefitFailed) when the boxed design lands where the density estimate
    sits on its floor.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    n = u.size
    s_lo, s_hi = support
    z_lo = max(float(u.min()), s_lo)
    z_hi = min(float(u.max()), s_hi)
    if not z_hi - z_lo > 1e-9:
        raise StageRefitFailed(f"design interval [{z_lo}, {z_hi}] is degenerate")
    grid = np.linspace(z_lo, z_hi, cfg.grid_n)
    h = cfg.bandwidth_scale * n ** (-1.0 / (2.0 * cfg.beta + 1.0))
    try:
        curve = estimate_cdf_and_density(u, y, grid, h, cfg.lpr_order, s_lo, s_hi, cfg.density_floor)
    except DegenerateWindowError as exc:
        raise StageRefitFailed(str(exc)) from exc
    grid, phi_i = phi_initial(curve)
    smoothing = cfg.smoothing()
    delta = bandwidth_profile(grid, z_lo, z_hi, n, horizon, smoothing, eps_m)
    phi_s = post_smooth(grid, phi_i, delta)
    if stage == "initial":
        c1 = cfg.c1 or default_c1(grid, phi_s, z_lo, z_hi, cfg.c1_floor)
        b0 = cfg.b0_const * n ** (-(cfg.beta - 1.0) / (2.0 * cfg.beta + 1.0))
        est = perturb(grid, phi_s, z_lo, z_hi, 0.0, c1, "initial", b0)
    else:
        v = boundary_fraction(n, horizon, eps_m, smoothing)
        v1, v2 = z_lo + v * (z_hi - z_lo), z_lo + (1 - v) * (z_hi - z_lo)
        c1 = cfg.c1 or default_c1(grid, phi_s, v1, v2, cfg.c1_floor)
        est = perturb(grid, phi_s, z_lo, z_hi, v, c1, "refinement")
    est = project_transform(est, max(cfg.slope_cap, 0.5 * est.c1) if cfg.slope_cap > 0 else 0.0)
    if cfg.validate_refits and targets is not None:
        # keep the greedy design inside the noise support and, after the initial
        # stage, within a trust region around the range the fit was built on
        margin = 0.01 * (s_hi - s_lo)
        lo, hi = s_lo + margin, s_hi - margin
        if stage != "initial" and cfg.trust_region > 0:
            slack = cfg.trust_region * (z_hi - z_lo)
            lo, hi = max(lo, z_lo - slack), min(hi, z_hi + slack)
        z, _ = est.inverse(np.asarray(targets, dtype=float))
        # translate a design that overshoots the box back to its edge, then clip
        shift = 0.0
        if z.min() > hi:
            shift = hi - z.max()
        elif z.max() < lo:
            shift = lo - z.min()
        elif z.min() < lo and z.max() <= hi:
            shift = min(lo - z.min(), hi - z.max())
        elif z.max() > hi and z.min() >= lo:
            shift = max(hi - z.max(), lo - z.min())
        est = replace(est, design_shift=shift, design_lo=lo, design_hi=hi)
        z = np.clip(z + shift, lo, hi)
        span = (grid >= z.min()) & (grid <= z.max())
        if cfg.reject_floored and np.any(curve.deriv_values[span] <= cfg.density_floor):
            raise StageRefitFailed("density estimate hit its floor where the greedy design lands")
    return est


def exact_transform(env, grid_n: int = 301, pad: float = 0.02, c1: float = 1.0) -> TransformEstimate:
    """The true transform of ``env`` gridded around its oracle design band.

    The band is the range of ``p* - m(x)`` over the context corners, widened by
    ``pad`` and kept inside the noise support.
    """
    corners = env.contexts.corners()
    m = env.m(corners)
    z = env.oracle_prices(corners) - m
    lo = max(float(z.min()) - pad, env.cdf.support_lo + 1e-6)
    hi = min(float(z.max()) + pad, env.cdf.support_hi - 1e-6)
    grid = np.linspace(lo, hi, grid_n)
    est = perturb(grid, env.cdf.phi(grid), lo, hi, 0.0, c1, "refinement")
    return project_transform(est)


class IlprPolicy(Policy):
    name = "ilpr"

    def __init__(self, env, horizon: int, rng: np.random.Generator, cfg: IlprConfig | None = None):
        super().__init__(env, horizon, rng)
        self.cfg = cfg or IlprConfig()
        self.support = (env.cdf.support_lo, env.cdf.support_hi)
        if self.cfg.known_utility:
            self.mode = "initial_stage"
            self.m_hat = env.m
            self.eps_m = 0.0
            self.T0m = 0
        else:
            self.mode = "utility_exploration"
            self.m_hat = None
            self.T0m = self.cfg.T0m or math.ceil(math.sqrt(4 * horizon))
            self.eps_m = 0.0
        self.transform: TransformEstimate | None = None
        self.stage_index = 0
        self.stage_plan = stage_lengths(self.cfg.T0, horizon, self.cfg.schedule)
        self.remaining_in_mode = self.T0m if self.mode == "utility_exploration" else self.cfg.T0
        self.a1 = self.cfg.a1
        self.b1 = self.cfg.b1
        self._buf_x: list[np.ndarray] = []
        self._buf_u: list[np.ndarray] = []
        self._buf_p: list[np.ndarray] = []
        self._buf_y: list[np.ndarray] = []
        self._pilot: tuple[np.ndarray, np.ndarray] | None = None

    # ------------------------------------------------------------------ protocol

    def frozen_steps(self, remaining: int) -> int:
        return max(1, min(remaining, self.remaining_in_mode))

    def price_batch(self, X):
        X = np.atleast_2d(X)
        k = len(X)
        if self.mode == "utility_exploration":
            return self.uniform_prices(k)
        if self.mode == "initial_stage":
            if self.cfg.initial_design == "affine":
                m = self.m_hat(X)
                return np.clip(m + self.a1 * m + self.b1, self.p_min, self.p_max)
            return self.uniform_prices(k)
        m = self.m_hat(X)
        if self.transform is None:
            return self.uniform_prices(k)
        return self.transform.pricing_rule(m, self.p_min, self.p_max)

    def observe_batch(self, X, P, Y):
        X = np.atleast_2d(X)
        P = np.asarray(P, dtype=float)
        Y = np.asarray(Y, dtype=float)
        start = 0
        while start < len(P):
            take = min(self.remaining_in_mode, len(P) - start) if self.remaining_in_mode > 0 else len(P) - start
            sl = slice(start, start + take)
            self._record(X[sl], P[sl], Y[sl])
            self.remaining_in_mode -= take
            self.t += take
            start += take
            if self.remaining_in_mode <= 0:
                self._advance()

    # ------------------------------------------------------------------ internals

    def _record(self, X, P, Y):
        self._buf_x.append(X)
        self._buf_p.append(P)
        self._buf_y.append(Y)
        if self.m_hat is not None:
            self._buf_u.append(P - self.m_hat(X))

    def _clear(self):
        self._buf_x, self._buf_u, self._buf_p, self._buf_y = [], [], [], []

    def _advance(self):
        if self.mode == "utility_exploration":
            X = np.vstack(self._buf_x)
            P = np.concatenate(self._buf_p)
            Y = np.concatenate(self._buf_y)
            self.m_hat = self._fit_utility(X, Y)
            self.eps_m = self.m_hat.eps_m if self.cfg.eps_m_override < 0 else self.cfg.eps_m_override
            if self.cfg.initial_design == "affine" and self.a1 == 0:
                self._choose_affine(X, P, Y)
            self._clear()
            self.mode = "initial_stage"
            self.remaining_in_mode = self.cfg.T0
            return
        if self.mode == "initial_stage":
            if self.cfg.initial_design == "affine" and self.a1 == 0:
                raise StageRefitFailed("affine initial design needs a1, b1 or pilot exploration data")
            self._refit("initial")
            self.mode = "refinement"
            self.stage_index = 1
            self.remaining_in_mode = self._stage_len(1)
            return
        self._refit("refinement")
        self.stage_index += 1
        self.remaining_in_mode = self._stage_len(self.stage_index)

    def _stage_len(self, l: int) -> int:
        if l - 1 < len(self.stage_plan):
            return self.stage_plan[l - 1]
        return 2 ** (l - 1) * self.cfg.T0 if self.cfg.schedule == "text" else 2**l * self.cfg.T0

    def _fit_utility(self, X, Y) -> UtilityEstimate:
        c = self.cfg
        B = self.p_max - self.p_min
        if c.utility_model == "sparse_linear":
            return lasso_threshold(X, Y - 0.0, B, len(Y), c.sparsity, c.c_lambda, c.c_inf)
        if c.utility_model == "semireal_single_index":
            return ols_binary(X, Y, B, intercept=True, p_min=self.p_min, model_class="semireal_single_index")
        return ols_binary(X, Y, B, intercept=False, p_min=self.p_min)

    def _choose_affine(self, X, P, Y):
        """Map the observed utility range onto the pilot design interval widened by a margin."""
        m = self.m_hat(X)
        u = P - m
        try:
            pilot = fit_transform(u, Y, cfg=self.cfg, horizon=self.horizon, support=self.support,
                                  stage="refinement", eps_m=self.eps_m)
        except StageRefitFailed:
            return
        m_lo, m_hi = float(m.min()), float(m.max())
        if m_hi - m_lo < 1e-9:
            return
        z_hi = pilot.inverse(-m_lo)[0]
        z_lo = pilot.inverse(-m_hi)[0]
        top, bottom = z_hi + self.cfg.affine_margin, z_lo - self.cfg.affine_margin
        self.a1 = (bottom - top) / (m_hi - m_lo)
        self.b1 = top - self.a1 * m_lo

    def _refit(self, stage: str):
        if self.cfg.oracle_transform:
            self._clear()
            self.transform = exact_transform(self.env, self.cfg.grid_n)
            return
        u = np.concatenate(self._buf_u)
        y = np.concatenate(self._buf_y)
        targets = -self.m_hat(np.vstack(self._buf_x))
        self._clear()
        try:
            self.transform = fit_transform(u, y, cfg=self.cfg, horizon=self.horizon, support=self.support,
                                           stage=stage, eps_m=self.eps_m, targets=targets)
        except (StageRefitFailed, np.linalg.LinAlgError, ValueError) as exc:
            self.events.append({"t": self.t, "event": "stage-refit-failed", "stage": self.stage_index,
                                "reason": str(exc)})
            log.info("stage %d refit failed at t=%d: %s", self.stage_index, self.t, exc)
