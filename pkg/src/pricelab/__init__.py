"""Simulation lab for contextual dynamic pricing with an unknown noise distribution."""

from .analytics import SlopeReport, cluster_bootstrap, loglog_slope, theory_exponent
from .config import RunConfig, emit_config, parse_config
from .demand_env import DemandEnvironment, EnvConfig, build_env
from .policies import make_policy
from .sim_harness import RegretCurve, TrialConfig, run_sweep, run_trial

__version__ = "0.1.0"

__all__ = [
    "DemandEnvironment", "EnvConfig", "build_env", "make_policy", "RegretCurve", "TrialConfig", "run_trial",
    "run_sweep", "SlopeReport", "cluster_bootstrap", "loglog_slope", "theory_exponent", "RunConfig",
    "parse_config", "emit_config",
]
