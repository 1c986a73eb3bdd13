import numpy as np
import pytest

from pricelab.demand_env import EnvConfig
from pricelab.sim_harness import (
    TrialConfig,
    TrialFailure,
    read_curves_csv,
    regret_matrix,
    run_sweep,
    run_trial,
    sweep_trials,
    trial_streams,
    write_curves_csv,
)

CPS = (250, 500, 1000)


def test_oracle_policy_has_zero_regret():
    c = run_trial(TrialConfig(policy="oracle", horizon=1000, checkpoints=CPS))
    assert np.all(np.abs(c.cumulative_regret) < 1e-6)


def test_trial_is_deterministic():
    cfg = TrialConfig(policy="ilpr", horizon=1000, checkpoints=CPS, seed=5, trial_id=3)
    a, b = run_trial(cfg), run_trial(cfg)
    assert np.array_equal(a.cumulative_regret, b.cumulative_regret)
    other = run_trial(TrialConfig(policy="ilpr", horizon=1000, checkpoints=CPS, seed=5, trial_id=4))
    assert not np.array_equal(a.cumulative_regret, other.cumulative_regret)


def test_streams_are_independent_of_policy():
    # the context stream is shared across policies for the same (seed, trial)
    a = trial_streams(1, 2)[0].uniform(size=5)
    b = trial_streams(1, 2)[0].uniform(size=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, trial_streams(1, 3)[0].uniform(size=5))


def test_uniform_policy_regret_is_linear():
    c = run_trial(TrialConfig(policy="uniform", horizon=5000, checkpoints=(2500, 5000)))
    per_step = c.cumulative_regret / c.checkpoints
    assert abs(per_step[1] / per_step[0] - 1) < 0.2


def test_curves_are_nondecreasing():
    for policy in ("ilpr", "kernel", "dip", "uniform"):
        c = run_trial(TrialConfig(policy=policy, horizon=2000, checkpoints=(100, 500, 1000, 1500, 2000)))
        assert np.all(np.diff(c.cumulative_regret) >= -1e-9), policy


def test_parallel_matches_serial():
    trials = [TrialConfig(policy="dip", params=(("beta", 2.0),), horizon=400, seed=1, trial_id=i)
              for i in range(16)]
    serial = run_sweep(trials, 1)
    par = run_sweep(trials, 8)
    assert [c.trial_id for c in par] == list(range(16))
    for a, b in zip(serial, par):
        assert np.array_equal(a.cumulative_regret, b.cumulative_regret)


def test_empty_sweep():
    assert run_sweep([]) == []


def test_failing_trial_is_isolated():
    trials = [TrialConfig(policy="uniform", horizon=200, trial_id=i) for i in range(10)]
    trials[4] = TrialConfig(policy="no_such_policy", horizon=200, trial_id=4)
    out = run_sweep(trials)
    fails = [r for r in out if isinstance(r, TrialFailure)]
    assert len(out) == 10 and len(fails) == 1
    assert fails[0].trial_id == 4 and fails[0].error_type == "KeyError" and fails[0].traceback


def test_checkpoint_validation():
    for cps in ((0, 100), (50, 50, 100), (50, 80), (100, 50)):
        with pytest.raises(ValueError):
            TrialConfig(horizon=100, checkpoints=cps)
    with pytest.raises(ValueError):
        TrialConfig(horizon=0)
    assert TrialConfig(horizon=100).resolved_checkpoints == (100,)


def test_sweep_grid_and_csv_round_trip(tmp_path):
    trials = sweep_trials(EnvConfig(), "uniform", (2.0, 2.5), (100, 200, 400), 4)
    assert len(trials) == 24
    assert {t.env.beta for t in trials} == {2.0, 2.5}
    out = run_sweep(trials)
    path = tmp_path / "curves.csv"
    assert write_curves_csv(path, out) == 24
    rows = read_curves_csv(path)
    ids, horizons, mat = regret_matrix(rows, "uniform", 2.0)
    assert list(horizons) == [100, 200, 400] and mat.shape == (4, 3)
    assert list(ids) == [0, 1, 2, 3]
