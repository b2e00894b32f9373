import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from topocal import scoring
from topocal.clogistic import CensoredLogistic
from topocal.data import EnsembleForecast

from oracles import crps_ensemble_double_sum, tie_rank_distribution

members_st = st.lists(st.floats(0, 100), min_size=1, max_size=25)


@pytest.mark.parametrize("members, y, expected", [
    ([3.0], 1.0, 2.0),
    ([0.0, 2.0], 1.0, 0.5),
    ([1.5, 1.5, 1.5], 1.5, 0.0),
])
def test_crps_ensemble_examples(members, y, expected):
    assert scoring.crps_ensemble(EnsembleForecast(members), y) == pytest.approx(expected, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(members_st, st.floats(0, 100))
def test_crps_ensemble_matches_double_sum(members, y):
    assert scoring.crps_ensemble(members, y) == pytest.approx(crps_ensemble_double_sum(members, y), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(members_st, st.floats(0, 100), st.floats(-50, 50), st.randoms())
def test_crps_ensemble_permutation_and_translation(members, y, c, rnd):
    base = scoring.crps_ensemble(members, y)
    shuffled = list(members)
    rnd.shuffle(shuffled)
    assert scoring.crps_ensemble(shuffled, y) == pytest.approx(base, abs=1e-9)
    assert scoring.crps_ensemble(np.asarray(members) + c, y + c) == pytest.approx(base, abs=1e-8)


def test_crps_ensemble_nan_padding():
    padded = np.array([[1.0, 4.0, np.nan], [1.0, 2.0, 3.0]])
    out = scoring.crps_ensemble(padded, np.array([2.0, 2.0]))
    assert out[0] == pytest.approx(crps_ensemble_double_sum([1, 4], 2.0))
    assert out[1] == pytest.approx(crps_ensemble_double_sum([1, 2, 3], 2.0))


@pytest.mark.parametrize("p, y, u, expected", [
    (1.0, 2.0, 5.0, 0.0),
    (0.0, 10.0, 5.0, 0.0),
    (0.5, 2.0, 5.0, 0.25),
])
def test_brier_examples(p, y, u, expected):
    assert scoring.brier(p, y, u) == expected


@pytest.mark.parametrize("members, u, y, expected", [
    ([1.0, 2.0, 3.0], 5.0, 4.0, 0.0),
    ([1.0, 2.0, 8.0, 9.0], 5.0, 7.0, 0.25),
    ([0.0, 0.0], 0.1, 0.0, 0.0),
])
def test_brier_ensemble_examples(members, u, y, expected):
    assert scoring.brier_ensemble(members, y, u) == expected


@settings(max_examples=100, deadline=None)
@given(members_st, st.floats(0, 100), st.floats(0, 100))
def test_brier_bounds(members, y, u):
    assert 0.0 <= scoring.brier_ensemble(members, y, u) <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
def test_one_member_brier_matches_step_forecast(x, y, u):
    step = 1.0 if x <= u else 0.0
    assert scoring.brier_ensemble([x], y, u) == scoring.brier(step, y, u)


@pytest.mark.parametrize("model, ref, expected", [(2.0, 2.0, 0.0), (1.0, 2.0, 0.5), (4.0, 2.0, -1.0)])
def test_skill(model, ref, expected):
    assert scoring.skill(model, ref) == expected


def test_skill_degenerate_reference():
    with pytest.raises(ValueError, match="degenerate reference"):
        scoring.skill(1.0, 0.0)


def test_pit_randomized_examples():
    d = CensoredLogistic(0.0, 1.0)
    for v in (0.0, 0.3, 1.0):
        assert scoring.pit_randomized(d, 1.0, v) == pytest.approx(d.cdf(1.0))
    assert scoring.pit_randomized(d, 0.0, 1.0) == pytest.approx(0.5)
    assert scoring.pit_randomized(d, 0.0, 0.4) == pytest.approx(0.2)


def test_pit_randomized_ensemble_jump():
    assert scoring.pit_randomized_ensemble([0.0, 0.0, 1.0, 2.0], 0.0, 0.5) == pytest.approx(0.25)
    assert scoring.pit_randomized_ensemble([0.0, 0.0, 1.0, 2.0], 1.5, 0.9) == pytest.approx(0.75)


def test_rank_examples():
    rng = np.random.default_rng(0)
    assert scoring.rank_of_observation([2.0, 3.0], 1.0, rng) == 1
    assert scoring.rank_of_observation(np.arange(1, 22.0), 30.0, rng) == 22


def test_rank_ties_uniform():
    members, y = [1.0, 1.0], 1.0
    expected = tie_rank_distribution(members, y)
    assert expected == {1: 1 / 3, 2: 1 / 3, 3: 1 / 3}
    rng = np.random.default_rng(1)
    ranks = scoring.rank_of_observation(np.tile(members, (30_000, 1)), np.full(30_000, y), rng)
    counts = np.bincount(ranks, minlength=4)[1:]
    assert stats.chisquare(counts).pvalue > 0.001
    assert set(np.unique(ranks)) == set(expected)


def test_rank_histogram_sums_to_pairs():
    rng = np.random.default_rng(2)
    x = rng.random((500, 5))
    h = scoring.rank_histogram(x, rng.random(500), rng)
    assert len(h) == 6
    assert h.sum() == 500


def test_pit_histogram_bins():
    h = scoring.pit_histogram(np.linspace(0, 1, 1000))
    assert len(h) == scoring.PIT_BINS
    assert h.sum() == 1000


def test_bootstrap_deterministic():
    s = np.arange(100.0)
    a = scoring.bootstrap_mean(s, 50, seed=3)
    np.testing.assert_array_equal(a, scoring.bootstrap_mean(s, 50, seed=3))
    assert len(a) == 50
    assert abs(a.mean() - s.mean()) < 5
