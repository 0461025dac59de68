"""Metric arithmetic against hand-computed values."""
import numpy as np
import pytest

from pricefield.errors import DataError, InputError
from pricefield.metrics import (
    RAE_THRESHOLDS,
    MetricsReport,
    compare_report,
    compute_metrics,
    improvement_pct,
    write_report_csv,
)


def test_hand_pair():
    # truth 100, estimate 110: squared error 100, relative error 0.10
    rep = compute_metrics([100.0], [110.0])
    assert rep.mse == 100.0
    assert rep.rmse == 10.0
    assert rep.mrae == 0.10
    # thresholds are strict: 0.10 is not below 10%
    assert rep.rae_cdf[10] == 0.0
    assert rep.rae_cdf[15] == 1.0
    assert rep.n == 1


def test_perfect_predictions():
    y = np.array([50.0, 120.0, 300.0])
    rep = compute_metrics(y, y.copy())
    assert rep.mse == 0.0
    assert rep.mrae == 0.0
    assert all(rep.rae_cdf[t] == 1.0 for t in RAE_THRESHOLDS)


def test_cdf_monotone_random_sets():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        y = rng.uniform(1.0, 1e6, n)
        p = y * rng.uniform(0.5, 1.5, n)
        cdf = compute_metrics(y, p).rae_cdf
        vals = [cdf[t] for t in RAE_THRESHOLDS]
        assert vals == sorted(vals)
        assert all(0.0 <= v <= 1.0 for v in vals)


def test_permutation_invariance():
    rng = np.random.default_rng(1)
    y = rng.uniform(1e4, 1e6, 64)
    p = y * rng.uniform(0.8, 1.2, 64)
    a = compute_metrics(y, p)
    idx = rng.permutation(64)
    b = compute_metrics(y[idx], p[idx])
    assert a.mse == pytest.approx(b.mse, rel=1e-15)
    assert a.mrae == pytest.approx(b.mrae, rel=1e-15)
    assert a.rae_cdf == b.rae_cdf


def test_published_cdf_row_is_reachable():
    # reconstruct a 100-point error profile whose CDF matches the
    # reference hierarchical log-model row: 12/24/36/53/79/90 percent
    # below 1/2/3/5/10/15 percent relative error
    rae = np.concatenate(
        [
            np.full(12, 0.005),
            np.full(12, 0.015),
            np.full(12, 0.025),
            np.full(17, 0.040),
            np.full(26, 0.075),
            np.full(11, 0.120),
            np.full(10, 0.200),
        ]
    )
    assert len(rae) == 100
    y = np.full(100, 250000.0)
    rep = compute_metrics(y, y * (1.0 + rae))
    assert rep.rae_cdf == {1: 0.12, 2: 0.24, 3: 0.36, 5: 0.53, 10: 0.79, 15: 0.90}


def test_improvement_pct():
    assert improvement_pct(100.0, 71.78) == 28.22
    assert improvement_pct(0.10, 0.066) == 34.0
    assert improvement_pct(50.0, 60.0) == -20.0
    with pytest.raises(InputError):
        improvement_pct(0.0, 1.0)


def test_errors():
    with pytest.raises(InputError):
        compute_metrics([1.0, 2.0], [1.0])
    with pytest.raises(InputError):
        compute_metrics([], [])
    with pytest.raises(DataError):
        compute_metrics([1.0, np.nan], [1.0, 1.0])
    with pytest.raises(DataError, match="index 1"):
        compute_metrics([100.0, -5.0, 50.0], [1.0, 2.0, 3.0])


def test_report_round_trip():
    rep = compute_metrics([100.0, 200.0], [90.0, 230.0], name="demo")
    back = MetricsReport.from_dict(rep.to_dict())
    assert back.mse == rep.mse
    assert back.rae_cdf == rep.rae_cdf  # integer keys restored
    assert back.name == "demo"


def test_compare_report_table(tmp_path):
    base = compute_metrics([100.0] * 4, [110.0, 90.0, 101.0, 99.0], name="lr")
    other = compute_metrics([100.0] * 4, [101.0, 99.0, 100.5, 100.2], name="hsfm")
    text, rows = compare_report({"lr": base, "hsfm": other}, baseline="lr")
    assert "lr" in text and "hsfm" in text
    assert rows[0]["impr_mrae_pct"] == 0.0  # baseline vs itself
    assert rows[1]["impr_mrae_pct"] > 0.0
    out = tmp_path / "report.csv"
    write_report_csv(rows, out)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("method,")
    with pytest.raises(InputError):
        compare_report({"a": base}, baseline="missing")
