"""Seeded regret trials and sweeps.

Each trial owns three random streams derived from ``(seed, trial_id)``:
contexts, purchase draws and the policy's own randomisation.  Contexts and
purchase uniforms are drawn in blocks, and numpy's generators produce the same
sequence whatever the block sizes, so every policy and horizon with the same
``trial_id`` faces the same customers (common random numbers).
"""

from __future__ import annotations

import csv
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .demand_env import EnvConfig, cached_env
from .policies import make_policy

log = logging.getLogger(__name__)

CSV_COLUMNS = ("trial_id", "policy", "beta", "seed", "checkpoint", "cumulative_regret")


@dataclass(frozen=True)
class TrialConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    policy: str = "ilpr"
    params: tuple[tuple[str, object], ...] = ()
    horizon: int = 2000
    checkpoints: tuple[int, ...] = ()
    seed: int = 0
    trial_id: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        cps = self.resolved_checkpoints
        if any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1 or cps[-1] != self.horizon:
            raise ValueError("checkpoints must increase within [1, T] and end at T")

    @property
    def resolved_checkpoints(self) -> tuple[int, ...]:
        return self.checkpoints or (self.horizon,)

    @property
    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass
class RegretCurve:
    trial_id: int
    checkpoints: np.ndarray
    cumulative_regret: np.ndarray
    policy: str = ""
    beta: float = float("nan")
    seed: int = 0
    horizon: int = 0
    events: list = field(default_factory=list)


@dataclass(frozen=True)
class TrialFailure:
    trial_id: int
    policy: str
    horizon: int
    error_type: str
    message: str
    traceback: str = ""


class TrialError(RuntimeError):
    def __init__(self, cfg: TrialConfig, cause: BaseException):
        super().__init__(f"trial {cfg.trial_id} ({cfg.policy}, T={cfg.horizon}, seed={cfg.seed}): {cause!r}")
        self.cfg = cfg
        self.cause = cause


def trial_streams(seed: int, trial_id: int) -> tuple[np.random.Generator, ...]:
    ss = np.random.SeedSequence([int(seed), int(trial_id)])
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def run_trial(cfg: TrialConfig, max_block: int = 8192) -> RegretCurve:
    """Play one policy for ``cfg.horizon`` steps and record cumulative regret at the checkpoints."""
    try:
        env = cached_env(cfg.env)
        ctx_rng, buy_rng, pol_rng = trial_streams(cfg.seed, cfg.trial_id)
        policy = make_policy(cfg.policy, env, cfg.horizon, pol_rng, cfg.param_dict)
        T = cfg.horizon
        regret = np.empty(T)
        t = 0
        while t < T:
            k = min(policy.frozen_steps(T - t), T - t, max_block)
            X = env.draw_contexts(k, ctx_rng)
            P = np.asarray(policy.price_batch(X), dtype=float)
            if P.shape != (k,):
                raise RuntimeError(f"policy returned {P.shape} prices for {k} contexts")
            if np.any(P < env.p_min - 1e-12) or np.any(P > env.p_max + 1e-12):
                raise RuntimeError("policy emitted a price outside the price range")
            Y, reg = env.step_batch(X, P, buy_rng)
            policy.observe_batch(X, P, Y)
            regret[t:t + k] = reg
            t += k
    except Exception as exc:
        raise TrialError(cfg, exc) from exc
    cps = np.asarray(cfg.resolved_checkpoints)
    cum = np.cumsum(regret)[cps - 1]
    return RegretCurve(cfg.trial_id, cps, cum, cfg.policy, cfg.env.beta, cfg.seed, T, list(policy.events))


def _run_safe(cfg: TrialConfig):
    try:
        return run_trial(cfg)
    except TrialError as exc:
        cause = exc.cause
        return TrialFailure(cfg.trial_id, cfg.policy, cfg.horizon, type(cause).__name__, str(exc),
                            "".join(traceback.format_exception(type(cause), cause, cause.__traceback__)))


def run_sweep(trials: list[TrialConfig], parallelism: int = 1) -> list[RegretCurve | TrialFailure]:
    """Run trials, preserving input order; failures come back as TrialFailure records."""
    trials = list(trials)
    if not trials:
        return []
    if parallelism <= 1:
        out = [_run_safe(c) for c in trials]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            out = list(pool.map(_run_safe, trials, chunksize=max(1, len(trials) // (4 * parallelism))))
    for r in out:
        if isinstance(r, TrialFailure):
            log.warning("trial %d failed: %s", r.trial_id, r.message)
    return out


def sweep_trials(env: EnvConfig, policy: str, betas, horizons, n_trials: int, seed: int = 0,
                 params: dict | None = None) -> list[TrialConfig]:
    """One trial per (beta, horizon, replicate); the replicate index is the trial id."""
    from dataclasses import replace

    items = tuple(sorted((params or {}).items()))
    out = []
    for beta in betas:
        env_b = replace(env, beta=float(beta))
        p = tuple(sorted(dict(items, beta=float(beta)).items()))
        for T in horizons:
            for r in range(n_trials):
                out.append(TrialConfig(env_b, policy, p, int(T), (), seed, r))
    return out


def write_curves_csv(path, results) -> int:
    """Write successful curves in long format; returns the number of data rows."""
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in results:
            if isinstance(r, TrialFailure):
                continue
            for cp, v in zip(r.checkpoints, r.cumulative_regret):
                w.writerow([r.trial_id, r.policy, f"{r.beta:g}", r.seed, int(cp), f"{float(v):.12g}"])
                rows += 1
    return rows


def read_curves_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["trial_id"] = int(r["trial_id"])
        r["beta"] = float(r["beta"])
        r["seed"] = int(r["seed"])
        r["checkpoint"] = int(r["checkpoint"])
        r["cumulative_regret"] = float(r["cumulative_regret"])
    return rows


def regret_matrix(rows, policy: str, beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pivot long-format rows into ``(trial_ids, horizons, regret[trial, horizon])``.

    Trials missing any horizon are dropped so every row shares the same checkpoints.
    """
    sel = [r for r in rows if r["policy"] == policy and abs(r["beta"] - beta) < 1e-12]
    horizons = np.array(sorted({r["checkpoint"] for r in sel}))
    ids = sorted({r["trial_id"] for r in sel})
    table = {(r["trial_id"], r["checkpoint"]): r["cumulative_regret"] for r in sel}
    keep = [i for i in ids if all((i, h) in table for h in horizons)]
    mat = np.array([[table[(i, h)] for h in horizons] for i in keep]).reshape(len(keep), horizons.size)
    return np.array(keep), horizons, mat
