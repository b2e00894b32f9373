"""Synthetic forecast/observation datasets with known generative truth.

Everything is generated on the square-root scale and squared at the end,
so the returned dataset is on the original scale like ingested data.

Regimes
-------
calibrated
    Observation exchangeable with the members (``calibrated_obs='exchangeable'``)
    or resampled from the members themselves (``'resample'``), in which case
    the raw ensemble *is* the predictive truth.
biased
    Calibrated observation, members shifted by ``bias`` before censoring.
cnlr
    Observation drawn from the censored-logistic regression with ``psi``.
dem-bias
    As ``cnlr`` with the intercept varying linearly with ``dem_31km``
    across ``dem_bias_range``.
mixed
    ``calibrated`` (resample) in ``calibrated_months``, ``biased`` otherwise.
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass

import numpy as np

from .data import Dataset, StationMeta, to_month

REGIMES = ("calibrated", "biased", "cnlr", "dem-bias", "mixed")
DEM_RANGE = (300.0, 3000.0)


@dataclass(frozen=True)
class SyntheticConfig:
    regime: str = "calibrated"
    n_stations: int = 30
    start_month: str = "2017-01"
    n_months: int = 24
    days_per_month: int | None = None
    K: int = 21
    lead_time: float = 1.0
    psi: tuple = (0.0, 0.3, 0.7, -0.5, 0.4)
    bias: float = 1.0
    dem_bias_range: tuple = (-0.6, 0.6)
    calibrated_obs: str = "exchangeable"
    calibrated_months: tuple = (5, 6, 7, 8, 9, 10)
    signal_mean: float = 1.0
    signal_sd: float = 1.0
    spread_range: tuple = (0.1, 2.0)

    def validate(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.n_stations < 1 or self.n_months < 1 or self.K < 1:
            raise ValueError("n_stations, n_months and K must be positive")
        if self.days_per_month is not None and not 1 <= self.days_per_month <= 28:
            raise ValueError("days_per_month must be in 1..28")
        if self.calibrated_obs not in ("exchangeable", "resample"):
            raise ValueError(f"unknown calibrated_obs {self.calibrated_obs!r}")
        if len(self.psi) != 5:
            raise ValueError("psi needs five coefficients")
        lo, hi = self.spread_range
        if not 0 <= lo <= hi:
            raise ValueError("invalid spread_range")


def synthetic_stations(n, rng) -> dict:
    stations = {}
    dem31 = rng.uniform(*DEM_RANGE, size=n)
    for i in range(n):
        sid = f"S{i:03d}"
        dem15 = max(0.0, dem31[i] + rng.normal(0, 200))
        stations[sid] = StationMeta(
            station_id=sid,
            latitude=float(rng.uniform(45.8, 47.8)),
            longitude=float(rng.uniform(6.0, 10.5)),
            height=float(max(200.0, dem15 + rng.normal(0, 300))),
            dem_31km=float(dem31[i]),
            dem_15km=float(dem15),
        )
    return stations


def _dates(cfg):
    first = to_month(cfg.start_month)
    out = []
    for m in range(cfg.n_months):
        month = first + m
        year, mon = int(str(month)[:4]), int(str(month)[5:7])
        ndays = calendar.monthrange(year, mon)[1] if cfg.days_per_month is None else cfg.days_per_month
        start = month.astype("datetime64[D]")
        out.extend(start + np.arange(ndays))
    return np.array(out, dtype="datetime64[D]")


def _logistic(loc, scale, rng):
    u = rng.random(np.shape(loc))
    u = np.clip(u, 1e-300, 1 - 1e-16)
    return np.maximum(0.0, loc + scale * np.log(u / (1 - u)))


def generate_synthetic(config: SyntheticConfig, seed) -> Dataset:
    """Reproducible original-scale dataset for the configured regime."""
    cfg = config
    cfg.validate()
    rng = np.random.default_rng(seed)
    stations = synthetic_stations(cfg.n_stations, rng)
    ids = sorted(stations)
    dates = _dates(cfg)
    sid = np.repeat(ids, len(dates))
    date = np.tile(dates, len(ids))
    n, K = len(sid), cfg.K

    centre = rng.normal(cfg.signal_mean, cfg.signal_sd, size=n)
    spread = rng.uniform(*cfg.spread_range, size=n)
    latent = centre[:, None] + spread[:, None] * rng.standard_normal((n, K + 1))
    members = np.maximum(0.0, latent[:, 1:])
    obs_exchangeable = np.maximum(0.0, latent[:, 0])

    def resampled():
        return members[np.arange(n), rng.integers(0, K, size=n)]

    if cfg.regime == "calibrated":
        obs = obs_exchangeable if cfg.calibrated_obs == "exchangeable" else resampled()
    elif cfg.regime == "biased":
        obs = obs_exchangeable
        members = np.maximum(0.0, latent[:, 1:] + cfg.bias)
    elif cfg.regime == "mixed":
        months = (date.astype("datetime64[M]").astype(int) % 12) + 1
        calm = np.isin(months, cfg.calibrated_months)
        res = resampled()
        members = np.where(calm[:, None], members, np.maximum(0.0, latent[:, 1:] + cfg.bias))
        obs = np.where(calm, res, obs_exchangeable)
    else:
        b0, b1, b2, g0, g1 = cfg.psi
        if cfg.regime == "dem-bias":
            dem = np.array([stations[s].dem_31km for s in sid])
            lo, hi = cfg.dem_bias_range
            b0 = lo + (hi - lo) * (dem - DEM_RANGE[0]) / (DEM_RANGE[1] - DEM_RANGE[0])
        sd = members.std(axis=1, ddof=1) if K > 1 else np.zeros(n)
        loc = b0 + b1 * members[:, 0] + b2 * members.mean(axis=1)
        obs = _logistic(loc, np.exp(g0 + g1 * sd), rng)

    return Dataset(sid, date, np.full(n, cfg.lead_time), obs ** 2, members ** 2, stations, "original")
