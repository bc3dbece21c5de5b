import math

import numpy as np
import pytest
from scipy.stats import chi2

from golden_tables import N_OBS, iter_rows, printed_tolerance
from mchjm.backtest import (
    CHI2_1_CRIT_95,
    CHI2_1_CRIT_99,
    CoverageReport,
    ExceedanceSeries,
    chi2_1_sf,
    count_exceedances,
    kupiec_lr,
    significance_flag,
)
from mchjm.scenario import ForecastEnvelope


def test_chi2_sf_matches_scipy():
    for x in (0.0, 0.5, 1.0, 3.8414588, 6.6348966, 25.0):
        assert chi2_1_sf(x) == pytest.approx(chi2.sf(x, df=1), rel=1e-12)
    assert chi2_1_sf(CHI2_1_CRIT_95) == pytest.approx(0.05, abs=1e-10)
    assert chi2_1_sf(CHI2_1_CRIT_99) == pytest.approx(0.01, abs=1e-10)


def test_lr_zero_at_nominal_frequency():
    # n1 / n_obs == 1 - p exactly -> the restricted and free likelihoods match
    lr, pval = kupiec_lr(5, 100, 0.95)
    assert lr == pytest.approx(0.0, abs=1e-12)
    assert pval == pytest.approx(1.0)


def test_lr_nonnegative_and_increasing_away_from_nominal():
    lrs = [kupiec_lr(n1, 200, 0.95)[0] for n1 in range(0, 40)]
    assert min(lrs) >= 0.0
    nominal = 10  # 5% of 200
    assert all(lrs[i] >= lrs[i + 1] - 1e-12 for i in range(nominal))
    assert all(lrs[i] <= lrs[i + 1] + 1e-12 for i in range(nominal, 39))


def test_boundary_counts_are_finite():
    lr0, _ = kupiec_lr(0, 250, 0.95)
    lr_all, _ = kupiec_lr(250, 250, 0.95)
    assert math.isfinite(lr0) and lr0 == pytest.approx(
        2 * 250 * math.log(1 / 0.95), rel=1e-12
    )
    assert math.isfinite(lr_all)


def test_input_validation():
    with pytest.raises(ValueError):
        kupiec_lr(-1, 10, 0.95)
    with pytest.raises(ValueError):
        kupiec_lr(11, 10, 0.95)
    with pytest.raises(ValueError):
        kupiec_lr(1, 10, 1.0)


def test_significance_flags():
    assert significance_flag(3.84) == ""
    assert significance_flag(3.85) == "*"
    assert significance_flag(6.63) == "*"
    assert significance_flag(6.64) == "**"


def test_published_tables_spot_checks():
    # a handful of hand-verified rows; the full 264-row sweep is acceptance 1
    assert kupiec_lr(22, 289, 0.95)[0] == pytest.approx(3.60, abs=0.01)
    assert 100 * kupiec_lr(22, 289, 0.95)[1] == pytest.approx(5.76, abs=0.01)
    assert kupiec_lr(0, 238, 0.95)[0] == pytest.approx(24.42, abs=0.01)
    assert kupiec_lr(0, 238, 0.99)[0] == pytest.approx(4.78, abs=0.01)
    assert kupiec_lr(17, 278, 0.95)[1] * 100 == pytest.approx(40.90, abs=0.01)
    assert kupiec_lr(112, 238, 0.95)[0] == pytest.approx(354.86, abs=0.01)


def test_every_published_row_reproduced():
    for curve, h, method, bucket, p, n1, lr_s, pv_s, flag in iter_rows():
        lr, pv = kupiec_lr(n1, N_OBS[h], p)
        assert lr == pytest.approx(float(lr_s), abs=printed_tolerance(lr_s)), (
            curve, h, method, bucket, p)
        assert 100 * pv == pytest.approx(float(pv_s), abs=printed_tolerance(pv_s))
        assert significance_flag(lr) == flag


def test_exceedance_series_counts():
    below = np.array([True, False, False, True])
    above = np.array([False, False, True, False])
    s = ExceedanceSeries(bucket="1m", horizon_steps=1, coverage=0.95,
                         below=below, above=above)
    assert s.n1 == 3 and s.n0 == 1 and s.n_obs == 4
    np.testing.assert_array_equal(s.indicators, [True, False, True, True])
    with pytest.raises(ValueError):
        ExceedanceSeries(bucket="x", horizon_steps=1, coverage=0.95,
                         below=below, above=above[:2])


def make_env(lower, upper, coverage=0.95):
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    mid = (lower + upper) / 2
    return ForecastEnvelope(lower=lower, upper=upper, mean=mid,
                            sd=(upper - lower) / 4, coverage=coverage)


def test_count_exceedances():
    envs = [make_env([0.0, 0.0], [1.0, 1.0]), make_env([0.0, 0.0], [1.0, 1.0])]
    realized = np.array([[0.5, 2.0], [-1.0, 0.5]])
    series = count_exceedances(envs, realized, ["a", "b"], horizon_steps=1)
    assert [s.n1 for s in series] == [1, 1]
    assert series[0].below.tolist() == [False, True]
    assert series[1].above.tolist() == [True, False]
    with pytest.raises(ValueError):
        count_exceedances(envs, realized[:1], ["a", "b"], 1)
    mixed = [make_env([0], [1], 0.95), make_env([0], [1], 0.99)]
    with pytest.raises(ValueError):
        count_exceedances(mixed, np.zeros((2, 1)), ["a"], 1)


def test_coverage_report_rows_and_table():
    report = CoverageReport(method="gaussian-closed-form", horizon_steps=1)
    s = ExceedanceSeries(bucket="1m", horizon_steps=1, coverage=0.95,
                         below=np.zeros(289, dtype=bool),
                         above=np.r_[np.ones(22, bool), np.zeros(267, bool)])
    report.add(s)
    row = report.rows[0]
    assert row["n1"] == 22 and row["n_obs"] == 289
    assert row["lr_uc"] == pytest.approx(3.60, abs=0.01)
    assert row["flag"] == ""
    table = report.formatted_table()
    assert "1m" in table and "3.60" in table
