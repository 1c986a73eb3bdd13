"""Run configuration: an INI-style file with one section per component.

Sections are ``run``, ``env``, ``ilpr``, ``kernel``, ``dip``, ``calibrate`` and
``compare``; keys are the fields of the matching dataclass.  Missing keys take
the dataclass defaults, unknown sections or keys are errors, and
``emit_config`` writes a file that parses back to the same object.
"""

from __future__ import annotations

import configparser
import io
import typing
from dataclasses import dataclass, field, fields, replace

from .demand_env import EnvConfig
from .policies import POLICIES, DipConfig, IlprConfig, KernelConfig


class ConfigError(ValueError):
    """Bad configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "out"
    parallelism: int = 1
    policy: str = "ilpr"
    known_utility: bool = True
    betas: tuple[float, ...] = (2.0, 2.5)
    horizons: tuple[int, ...] = (2000, 4000, 8000, 16000, 32000)
    n_trials: int = 50
    n_boot: int = 2000


@dataclass(frozen=True)
class CalibrateSection:
    data: str = "fixtures/products.csv"
    ridge: float = 1.0
    sigma: float = 2.0
    grid_n: int = 401
    min_obs: int = 300
    fraction_lo: float = 0.05
    fraction_hi: float = 0.95


@dataclass(frozen=True)
class CompareSection:
    policies: tuple[str, ...] = ("ilpr", "dip", "kernel")
    beta: float = 2.0
    horizon: int = 20000
    n_checkpoints: int = 12
    known_utility: bool = False
    models: str = ""  # directory of calibrated model files; empty -> synthetic environment


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    env: EnvConfig = field(default_factory=EnvConfig)
    ilpr: IlprConfig = field(default_factory=IlprConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    dip: DipConfig = field(default_factory=DipConfig)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    compare: CompareSection = field(default_factory=CompareSection)

    def policy_params(self, policy: str) -> dict:
        """Non-default hyperparameters of ``policy`` as a plain dict."""
        section = getattr(self, policy, None)
        if section is None:
            return {}
        default = type(section)()
        return {f.name: getattr(section, f.name) for f in fields(section)
                if getattr(section, f.name) != getattr(default, f.name)}


SECTIONS = tuple(f.name for f in fields(RunConfig))


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _coerce(key: str, text: str, tp):
    text = text.strip()
    origin = typing.get_origin(tp)
    try:
        if tp is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text
        if origin is tuple:
            inner = typing.get_args(tp)[0]
            parts = [p for p in text.replace(",", " ").split() if p]
            return tuple(_coerce(key, p, inner) for p in parts)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None
    raise ConfigError(key, f"unsupported type {tp}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _check(key: str, ok: bool, message: str):
    if not ok:
        raise ConfigError(key, message)


def validate(cfg: RunConfig) -> RunConfig:
    r, e, c, cmp = cfg.run, cfg.env, cfg.calibrate, cfg.compare
    _check("run.parallelism", r.parallelism >= 1, "must be >= 1")
    _check("run.policy", r.policy in POLICIES, f"unknown policy; choose from {sorted(POLICIES)}")
    _check("run.betas", len(r.betas) > 0 and all(b >= 2 for b in r.betas), "need at least one beta, each >= 2")
    _check("run.horizons", len(r.horizons) > 0 and all(h >= 1 for h in r.horizons), "horizons must be positive")
    _check("run.horizons", list(r.horizons) == sorted(set(r.horizons)), "horizons must be strictly increasing")
    _check("run.n_trials", r.n_trials >= 1, "must be >= 1")
    _check("run.n_boot", r.n_boot >= 1, "must be >= 1")
    _check("env.kind", e.kind in ("synthetic", "semireal"), "must be synthetic or semireal")
    _check("env.beta", e.beta >= 2, "must be >= 2")
    _check("env.n_bumps", e.n_bumps >= 1, "must be >= 1")
    _check("env.half_width", e.half_width > 0, "must be positive")
    _check("env.support_lo", e.support_lo < e.u_min < e.u_max < e.support_hi,
           "need support_lo < u_min < u_max < support_hi")
    _check("env.p_min", e.p_min < e.p_max, "need p_min < p_max")
    _check("env.x_min", e.x_min < e.x_max, "need x_min < x_max")
    il = cfg.ilpr
    _check("ilpr.T0", il.T0 >= 2, "must be >= 2")
    _check("ilpr.T0m", il.T0m >= 0, "must be >= 0 (0 selects ceil(sqrt(4T)))")
    _check("ilpr.bandwidth_scale", il.bandwidth_scale > 0, "must be positive")
    _check("ilpr.grid_n", il.grid_n >= 3, "must be >= 3")
    _check("ilpr.beta", il.beta >= 2, "must be >= 2")
    _check("ilpr.c_delta", il.c_delta > 0, "must be positive")
    _check("ilpr.c_v", il.c_v > 0, "must be positive")
    _check("ilpr.kappa", il.kappa >= 0, "must be nonnegative")
    _check("ilpr.v_clip_hi", 0 <= il.v_clip_hi < 0.5, "must lie in [0, 0.5)")
    _check("ilpr.density_floor", il.density_floor > 0, "must be positive")
    _check("ilpr.initial_design", il.initial_design in ("uniform", "affine"), "must be uniform or affine")
    _check("ilpr.schedule", il.schedule in ("text", "algorithm"), "must be text or algorithm")
    _check("ilpr.utility_model", il.utility_model in ("linear", "sparse_linear", "semireal_single_index"),
           "must be linear, sparse_linear or semireal_single_index")
    k = cfg.kernel
    _check("kernel.base_length", k.base_length >= 2, "must be >= 2")
    _check("kernel.c_explore", k.c_explore > 0, "must be positive")
    _check("kernel.step", 0 < k.step <= 1, "must lie in (0, 1]")
    d = cfg.dip
    _check("dip.ucb_c", d.ucb_c >= 0, "must be nonnegative")
    _check("dip.bins", d.bins in ("price", "residual"), "must be price or residual")
    _check("calibrate.ridge", c.ridge >= 0, "must be nonnegative")
    _check("calibrate.sigma", c.sigma >= 0, "must be nonnegative")
    _check("calibrate.grid_n", c.grid_n >= 3, "must be >= 3")
    _check("calibrate.fraction_lo", 0 <= c.fraction_lo < c.fraction_hi <= 1, "need 0 <= lo < hi <= 1")
    _check("compare.policies", len(cmp.policies) > 0 and all(p in POLICIES for p in cmp.policies),
           f"policies must come from {sorted(POLICIES)}")
    _check("compare.horizon", cmp.horizon >= 1, "must be positive")
    _check("compare.n_checkpoints", cmp.n_checkpoints >= 1, "must be >= 1")
    return cfg


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keys are case sensitive (T0, T0m)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("", f"malformed config: {exc}") from None
    cfg = base or RunConfig()
    updates = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(sec, f"unknown section; expected one of {list(SECTIONS)}")
        current = getattr(cfg, sec)
        hints = _hints(type(current))
        vals = {}
        for key, raw in cp.items(sec):
            path = f"{sec}.{key}"
            if key not in hints:
                raise ConfigError(path, "unknown key")
            vals[key] = _coerce(path, raw, hints[key])
        try:
            updates[sec] = replace(current, **vals)
        except ValueError as exc:
            raise ConfigError(sec, str(exc)) from None
    return validate(replace(cfg, **updates))


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (if any), apply ``overrides`` (``{"section.key": value}``) and validate."""
    text = ""
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("", f"cannot read config {path}: {exc}") from None
    cfg = parse_config_text(text)
    return apply_overrides(cfg, overrides or {})


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    grouped: dict[str, dict] = {}
    for path, value in overrides.items():
        sec, _, key = path.partition(".")
        if sec not in SECTIONS:
            raise ConfigError(path, "unknown section")
        if key not in _hints(type(getattr(cfg, sec))):
            raise ConfigError(path, "unknown key")
        grouped.setdefault(sec, {})[key] = value
    return validate(replace(cfg, **{s: replace(getattr(cfg, s), **v) for s, v in grouped.items()}))


def emit_config(cfg: RunConfig) -> str:
    """Every field of every section, in declaration order."""
    buf = io.StringIO()
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        buf.write(f"[{sec}]\n")
        for f in fields(obj):
            buf.write(f"{f.name} = {_format(getattr(obj, f.name))}\n")
        buf.write("\n")
    return buf.getvalue()
