"""Proper scoring rules and calibration diagnostics.

Ensemble arguments are arrays whose last axis holds the members. Rows may
be right-padded with NaN when forecasts of different sizes share an array;
padded entries are ignored.
"""

from __future__ import annotations

import numpy as np

from . import clogistic
from .data import EnsembleForecast

DEFAULT_THRESHOLDS = (0.1, 5.0, 20.0)
PIT_BINS = 20


def _members(forecast):
    if isinstance(forecast, EnsembleForecast):
        return np.asarray(forecast.members, dtype=float)
    return np.asarray(forecast, dtype=float)


def _unwrap(x):
    x = np.asarray(x)
    return x[()] if x.ndim == 0 else x


def crps_ensemble(forecast, y):
    """CRPS of the empirical distribution of a finite ensemble.

    ``mean|x_k - y| - sum_kl |x_k - x_l| / (2 K^2)``, evaluated in
    O(K log K) per row from the sorted members.
    """
    x = np.sort(_members(forecast), axis=-1)
    y = np.asarray(y, dtype=float)
    valid = ~np.isnan(x)
    k = valid.sum(axis=-1)
    if np.any(k < 1):
        raise ValueError("an ensemble needs at least one member")
    xz = np.where(valid, x, 0.0)
    abs_err = np.where(valid, np.abs(xz - y[..., None]), 0.0).sum(axis=-1) / k
    i = np.arange(1, x.shape[-1] + 1)
    coef = np.where(valid, 2 * i - k[..., None] - 1, 0)
    spread = 2.0 * (coef * xz).sum(axis=-1) / (2.0 * k * k)
    return _unwrap(abs_err - spread)


def brier(prob_below, y, threshold):
    """Brier score of a forecast CDF value ``F(u)`` at threshold ``u``."""
    hit = (threshold >= np.asarray(y, dtype=float)).astype(float)
    return _unwrap((np.asarray(prob_below, dtype=float) - hit) ** 2)


def ensemble_cdf(forecast, u):
    """Fraction of members at or below ``u``."""
    x = _members(forecast)
    valid = ~np.isnan(x)
    u = np.asarray(u, dtype=float)
    return _unwrap((valid & (x <= u[..., None])).sum(axis=-1) / valid.sum(axis=-1))


def brier_ensemble(forecast, y, threshold):
    return brier(ensemble_cdf(forecast, np.full(np.shape(y), threshold)), y, threshold)


def skill(mean_score_model, mean_score_reference):
    """``1 - model/reference``; positive when the model improves on the reference."""
    if not mean_score_reference > 0:
        raise ValueError("degenerate reference: mean reference score must be positive")
    return 1.0 - mean_score_model / mean_score_reference


def pit_randomized(params, y, v):
    """Randomized PIT ``F(y-) + v (F(y) - F(y-))`` for the censored logistic.

    ``params`` is a :class:`~topocal.clogistic.CensoredLogistic` or a
    ``(location, scale)`` pair of arrays.
    """
    if isinstance(params, clogistic.CensoredLogistic):
        loc, scale = params.location, params.scale
    else:
        loc, scale = params
    lo = clogistic.cdf_left(loc, scale, y)
    hi = clogistic.cdf(loc, scale, y)
    return _unwrap(lo + np.asarray(v, dtype=float) * (hi - lo))


def pit_randomized_ensemble(forecast, y, v):
    """Randomized PIT of the empirical ensemble CDF."""
    x = _members(forecast)
    valid = ~np.isnan(x)
    y = np.asarray(y, dtype=float)[..., None]
    k = valid.sum(axis=-1)
    lo = (valid & (x < y)).sum(axis=-1) / k
    hi = (valid & (x <= y)).sum(axis=-1) / k
    return _unwrap(lo + np.asarray(v, dtype=float) * (hi - lo))


def rank_of_observation(forecast, y, rng):
    """Rank (1..K+1) of ``y`` among ``{x_1..x_K, y}``; ties broken uniformly."""
    x = _members(forecast)
    valid = ~np.isnan(x)
    y = np.asarray(y, dtype=float)
    below = (valid & (x < y[..., None])).sum(axis=-1)
    ties = (valid & (x == y[..., None])).sum(axis=-1)
    return _unwrap(below + 1 + rng.integers(0, ties + 1))


def rank_histogram(members, y, rng):
    """Counts of observation ranks, length K+1 (K = widest row)."""
    members = np.atleast_2d(np.asarray(members, dtype=float))
    ranks = np.atleast_1d(rank_of_observation(members, y, rng))
    return np.bincount(ranks - 1, minlength=members.shape[-1] + 1)


def pit_histogram(pit, bins=PIT_BINS):
    counts, _ = np.histogram(np.asarray(pit, dtype=float), bins=bins, range=(0.0, 1.0))
    return counts


def bootstrap_mean(scores, n_resamples=250, seed=0):
    """Bootstrap replicates of the mean of ``scores``."""
    scores = np.asarray(scores, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(scores), size=(n_resamples, len(scores)))
    return scores[idx].mean(axis=1)
