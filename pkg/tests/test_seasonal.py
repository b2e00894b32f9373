import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topocal import emos, seasonal
from topocal.data import EnsembleForecast, month_range, sqrt_transform
from topocal.synthetic import SyntheticConfig, generate_synthetic

from conftest import make_dataset


@pytest.fixture(scope="module")
def year():
    cfg = SyntheticConfig(regime="biased", n_stations=6, start_month="2017-01", n_months=12, days_per_month=10)
    return sqrt_transform(generate_synthetic(cfg, 99))


@pytest.mark.parametrize("variant, months", [
    (1, ["2017-01"]),
    ("v2_month_before", ["2017-12"]),
    (3, ["2017-01", "2017-12"]),
])
def test_split_examples(year, variant, months):
    train, test = seasonal.pretest_split(year, "2018-01", variant)
    assert sorted(set(str(m) for m in test.month)) == months
    assert not set(str(m) for m in train.month) & set(months)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([str(m) for m in month_range("2017-02", "2018-01")]), st.sampled_from([1, 2, 3]))
def test_split_partitions_input(target, variant):
    cfg = SyntheticConfig(n_stations=2, start_month="2017-01", n_months=12, days_per_month=3)
    data = generate_synthetic(cfg, 1)
    try:
        train, test = seasonal.pretest_split(data, target, variant)
    except seasonal.PretestError:
        return
    assert len(train) + len(test) == len(data)
    key = lambda d: set(zip(d.station_id.tolist(), d.date.astype(str).tolist()))
    assert not key(train) & key(test)
    assert key(train) | key(test) == key(data)


def test_split_impossible(year):
    with pytest.raises(seasonal.PretestError, match="pretest impossible"):
        seasonal.pretest_split(year, "2019-06", 1)


def test_unknown_variant():
    with pytest.raises(ValueError):
        seasonal.pretest_variant_number(4)


def _constant_case(model_better):
    """Traintest where the raw ensemble is a point mass at the observation (CRPS 0)
    unless ``model_better``, in which case the ensemble is far off."""
    rows = []
    for d in range(1, 29):
        rows.append(("A", f"2017-01-{d:02d}", 4.0, [400.0, 400.0] if model_better else [4.0, 4.0]))
    return sqrt_transform(make_dataset(rows))


def test_decide_tie_keeps_raw(year):
    train, _ = seasonal.pretest_split(year, "2018-01", 1)
    test = _constant_case(model_better=False)
    out = seasonal.pretest_decide(train, test)
    assert out.traintest_mean_crps_raw == 0.0
    assert out.traintest_mean_crps_model >= out.traintest_mean_crps_raw
    assert not out.accepted


def test_decide_accepts_when_model_strictly_better(year):
    train, _ = seasonal.pretest_split(year, "2018-01", 1)
    out = seasonal.pretest_decide(train, _constant_case(model_better=True))
    assert out.traintest_mean_crps_model < out.traintest_mean_crps_raw
    assert out.accepted
    assert out.traintest_size == 28


def test_decide_records_fit_failure(year):
    _, test = seasonal.pretest_split(year, "2018-01", 1)
    tiny = year.subset(np.arange(len(year)) < 10)
    out = seasonal.pretest_decide(tiny, test)
    assert not out.accepted
    assert out.reason.startswith("fit failed")
    assert math.isnan(out.traintest_mean_crps_model)


def test_decide_deterministic(year):
    train, test = seasonal.pretest_split(year, "2018-01", 3)
    assert seasonal.pretest_decide(train, test) == seasonal.pretest_decide(train, test)


def test_final_refit_differs_from_traintrain_fit(year):
    train, test = seasonal.pretest_split(year, "2018-01", 3)
    out = seasonal.pretest_decide(train, test)
    assert out.accepted
    full = emos.fit(year).as_array()
    assert np.max(np.abs(full - out.psi.as_array())) > 1e-6


@pytest.mark.parametrize("month, expected", [(6, 1.0), (12, 0.0), (3, math.sqrt(2) / 2)])
def test_sine_covariate(month, expected):
    assert seasonal.sine_covariate(month) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("month", [0, 13, 2.5])
def test_sine_covariate_range(month):
    with pytest.raises(ValueError):
        seasonal.sine_covariate(month)


class _Stats:
    def __init__(self, mean, sd):
        self.mean, self.sd = mean, sd


@pytest.mark.parametrize("mean, sd, month, expected", [
    (0.05, 0.0, 7, "dry_summer"),
    (2.0, 0.5, 1, "wet_winter"),
    (0.1, 0.0, 5, "dry_summer"),
    (1.0, 0.1, 11, "wet_winter"),
    (0.5, 0.45, 10, "dry_summer"),
])
def test_sit_classify(mean, sd, month, expected):
    assert seasonal.sit_classify(_Stats(mean, sd), month) == expected


def test_sit_weights_agree_with_classifier(year):
    months = (year.month.astype(int) % 12) + 1
    labels = [seasonal.sit_classify(_Stats(m, s), int(mo)) for m, s, mo in zip(year.mean, year.sd, months)]
    for sit in ("dry_summer", "wet_summer", "dry_winter", "wet_winter"):
        np.testing.assert_array_equal(seasonal.sit_weights(year, sit), [float(x == sit) for x in labels])


def test_sit_classify_on_forecast():
    assert seasonal.sit_classify(EnsembleForecast((2.0, 2.0)), 8) == "wet_summer"


def test_pretest_csv_round_trip(tmp_path):
    records = [
        {"station_id": "A", "target_month": "2018-01", "lead_time": 1.0, "accepted": True, "H": 62,
         "traintest_mean_crps_model": 0.1 / 3, "traintest_mean_crps_raw": 0.5},
        {"station_id": "B", "target_month": "2018-02", "lead_time": 1.5, "accepted": False, "H": 0,
         "traintest_mean_crps_model": float("nan"), "traintest_mean_crps_raw": 0.25},
    ]
    path = tmp_path / "pretest.csv"
    seasonal.write_pretest_csv(records, path)
    back = seasonal.read_pretest_csv(path)
    assert back[0] == records[0]
    assert back[1]["accepted"] is False
    assert math.isnan(back[1]["traintest_mean_crps_model"])
    assert path.read_text().splitlines()[0] == ",".join(seasonal.PRETEST_CSV_COLUMNS)
