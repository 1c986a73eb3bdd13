"""Pricing policies and a name-based registry."""

from __future__ import annotations

from dataclasses import fields

from .base import OraclePolicy, Policy, UniformPolicy, oracle_policy, uniform_policy
from .dip import DipConfig, DipPolicy, bin_count
from .ilpr import IlprConfig, IlprPolicy, StageRefitFailed, fit_transform, stage_lengths
from .kernel import KernelConfig, KernelPolicy, exploration_count

POLICIES = {
    "ilpr": (IlprPolicy, IlprConfig),
    "kernel": (KernelPolicy, KernelConfig),
    "dip": (DipPolicy, DipConfig),
    "uniform": (UniformPolicy, None),
    "oracle": (OraclePolicy, None),
}


def make_policy(name: str, env, horizon: int, rng, params: dict | None = None) -> Policy:
    """Build a policy by name; matching ``params`` fill its config dataclass."""
    if name not in POLICIES:
        raise KeyError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
    cls, cfg_cls = POLICIES[name]
    params = dict(params or {})
    if cfg_cls is None:
        return cls(env, horizon, rng)
    # shared sweep parameters (e.g. beta) are offered to every policy; each keeps its own fields
    known = {f.name for f in fields(cfg_cls)}
    params = {k: v for k, v in params.items() if k in known}
    return cls(env, horizon, rng, cfg_cls(**params))


__all__ = [
    "POLICIES", "make_policy", "Policy", "UniformPolicy", "OraclePolicy", "IlprPolicy", "IlprConfig",
    "KernelPolicy", "KernelConfig", "DipPolicy", "DipConfig", "StageRefitFailed", "fit_transform",
    "stage_lengths", "bin_count", "exploration_count", "oracle_policy", "uniform_policy",
]
