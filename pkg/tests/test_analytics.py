import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pricelab.analytics import (
    SlopeReport,
    TooFewTrialsError,
    cluster_bootstrap,
    compare_table,
    difference_summary,
    loglog_slope,
    svg_loglog,
    theory_exponent,
    write_slopes_csv,
)

H = np.array([1000, 2000, 4000, 8000, 16000])


def test_loglog_slope_examples():
    assert loglog_slope(H, H) == pytest.approx(1.0, abs=1e-12)
    assert loglog_slope(H, 3 * H ** 0.6) == pytest.approx(0.6, abs=1e-10)
    assert loglog_slope([100, 10000], [10, 100]) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        loglog_slope([100], [1])
    with pytest.raises(ValueError):
        loglog_slope([100, 200], [0, 1])


def test_theory_exponent():
    assert theory_exponent(2.0) == pytest.approx(0.6)
    assert theory_exponent(2.5) == pytest.approx(0.5)
    assert theory_exponent(3.0, known_utility=False) == 0.5
    assert theory_exponent(2.0, known_utility=False) == pytest.approx(0.6)


def test_identical_trials_give_degenerate_ci():
    mat = np.tile(2 * H ** 0.7, (10, 1))
    r = cluster_bootstrap(mat, H, n_boot=200, beta=2.0)
    assert r.ci_lo == r.ci_hi == pytest.approx(0.7, abs=1e-10)


def test_scaled_trials_keep_exact_slope():
    c = np.random.default_rng(0).uniform(0.5, 2.0, 30)
    mat = c[:, None] * H[None, :] ** 0.6
    r = cluster_bootstrap(mat, H, n_boot=300, beta=2.0)
    assert r.slope_hat == pytest.approx(0.6, abs=1e-10)
    assert r.ci_hi - r.ci_lo < 1e-6
    assert r.covers_theory


def test_bootstrap_is_deterministic_and_needs_trials():
    mat = np.random.default_rng(1).uniform(1, 2, (12, H.size)) * H ** 0.6
    a = cluster_bootstrap(mat, H, n_boot=100, seed=3, beta=2.0)
    b = cluster_bootstrap(mat, H, n_boot=100, seed=3, beta=2.0)
    assert a == b
    with pytest.raises(TooFewTrialsError):
        cluster_bootstrap(mat[:1], H)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.2, 1.0))
def test_ci_brackets_point_estimate(seed, e):
    r = np.random.default_rng(seed)
    mat = r.lognormal(0, 0.5, (8, H.size)) * H ** e
    rep = cluster_bootstrap(mat, H, n_boot=100, seed=seed)
    assert rep.ci_lo <= rep.slope_hat <= rep.ci_hi


def test_curve_objects_are_accepted():
    class C:
        def __init__(self, k):
            self.checkpoints = H
            self.cumulative_regret = k * H ** 0.5

    r = cluster_bootstrap([C(1.0), C(2.0), C(3.0)], n_boot=50)
    assert r.slope_hat == pytest.approx(0.5, abs=1e-10) and r.n_trials == 3


def test_compare_table_flags(tmp_path):
    inside = SlopeReport(2.0, 0.61, 0.6, 0.55, 0.65, 100, 50)
    outside = SlopeReport(2.5, 0.61, 0.5, 0.55, 0.65, 100, 50)
    rows = compare_table([inside, outside])
    assert [r["theory_outside_ci"] for r in rows] == [False, True]
    write_slopes_csv(tmp_path / "s.csv", [inside, outside])
    assert (tmp_path / "s.csv").read_text().count("\n") == 3


def test_difference_summary():
    d = difference_summary([1.0, 2.0, 3.0], [11.0, 12.0, 13.0])
    assert d["diff"] == 10.0 and d["se"] == pytest.approx(math.sqrt(2 / 3))
    assert d["margin_over_2se"]


def test_svg_written(tmp_path):
    svg_loglog(tmp_path / "p.svg", {"a": (H, H ** 0.6, 0.1 * H ** 0.6), "b": (H, 2 * H ** 0.5, 0 * H)}, title="x")
    text = (tmp_path / "p.svg").read_text()
    assert "<svg" in text and text.count("<polyline") >= 2
