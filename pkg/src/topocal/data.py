"""Forecast/observation records, CSV ingestion and training windows.

A :class:`Dataset` is columnar: one row per forecast-observation pair, with
the ensemble stored as an ``(n, K)`` array. Arrays are made read-only on
construction so datasets can be shared freely between workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping

import numpy as np

LEAD_TIMES = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
WINDOW_POLICIES = ("prior_12_months", "month_before", "same_month_prior_year", "both_months")
_MISSING = {"", "na", "nan", "null"}


class IngestError(ValueError):
    pass


class WindowError(ValueError):
    pass


def ensemble_sd(members):
    """Sample standard deviation over the last axis (n - 1 denominator).

    A one-member ensemble has zero spread.
    """
    members = np.asarray(members, dtype=float)
    if members.shape[-1] < 2:
        return np.zeros(members.shape[:-1])[()]
    return members.std(axis=-1, ddof=1)


def to_month(value) -> np.datetime64:
    """Coerce ``'2018-01'``, a date, or a datetime64 to a month value."""
    if isinstance(value, tuple):
        return np.datetime64(f"{value[0]:04d}-{value[1]:02d}", "M")
    return np.datetime64(value, "M")


def month_number(month) -> int:
    """Calendar month 1..12 of a month value."""
    return int(to_month(month).astype(int) % 12) + 1


def month_range(first, last) -> np.ndarray:
    return np.arange(to_month(first), to_month(last) + 1)


@dataclass(frozen=True)
class StationMeta:
    station_id: str
    latitude: float
    longitude: float
    height: float
    dem_31km: float
    dem_15km: float

    def __post_init__(self):
        if not (math.isfinite(self.dem_31km) and math.isfinite(self.dem_15km)):
            raise ValueError(f"station {self.station_id}: DEM values must be finite")


@dataclass(frozen=True)
class EnsembleForecast:
    """A single K-member ensemble; the first member is the control run."""

    members: tuple

    def __post_init__(self):
        if len(self.members) < 1:
            raise ValueError("an ensemble needs at least one member")
        object.__setattr__(self, "members", tuple(float(x) for x in self.members))

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def control(self) -> float:
        return self.members[0]

    @property
    def mean(self) -> float:
        return float(np.mean(self.members))

    @property
    def sd(self) -> float:
        return float(ensemble_sd(np.asarray(self.members)))


@dataclass(frozen=True)
class ForecastObservationPair:
    station_id: str
    date: np.datetime64
    lead_time: float
    forecast: EnsembleForecast
    observation: float


def _readonly(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar collection of forecast-observation pairs.

    Attributes
    ----------
    station_id, date, lead_time, obs : ndarray, shape (n,)
    members : ndarray, shape (n, K)
    stations : mapping station_id -> StationMeta
    scale : {'original', 'sqrt'}
    dropped_missing : int
        Rows dropped at ingestion because the observation was missing.
    """

    station_id: np.ndarray
    date: np.ndarray
    lead_time: np.ndarray
    obs: np.ndarray
    members: np.ndarray
    stations: Mapping[str, StationMeta]
    scale: str = "original"
    dropped_missing: int = 0

    def __post_init__(self):
        n = len(self.obs)
        station_id = np.asarray(self.station_id, dtype=str)
        date = np.asarray(self.date, dtype="datetime64[D]")
        lead_time = np.asarray(self.lead_time, dtype=float)
        obs = np.asarray(self.obs, dtype=float)
        members = np.asarray(self.members, dtype=float)
        if members.ndim != 2 or members.shape[0] != n:
            raise ValueError("members must have shape (n, K)")
        if members.shape[1] < 1:
            raise ValueError("an ensemble needs at least one member")
        for name, arr in (("station_id", station_id), ("date", date), ("lead_time", lead_time)):
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if self.scale not in ("original", "sqrt"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if np.any(obs < 0) or np.any(members < 0):
            raise ValueError("precipitation values must be non-negative")
        unknown = set(np.unique(station_id)) - set(self.stations)
        if unknown:
            raise ValueError(f"unknown station_id(s): {sorted(unknown)}")
        object.__setattr__(self, "station_id", _readonly(station_id))
        object.__setattr__(self, "date", _readonly(date))
        object.__setattr__(self, "lead_time", _readonly(lead_time))
        object.__setattr__(self, "obs", _readonly(obs))
        object.__setattr__(self, "members", _readonly(members))
        object.__setattr__(self, "stations", dict(self.stations))

    def __len__(self):
        return len(self.obs)

    @property
    def K(self) -> int:
        return self.members.shape[1]

    @property
    def control(self) -> np.ndarray:
        return self.members[:, 0]

    @cached_property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=1)

    @cached_property
    def sd(self) -> np.ndarray:
        return ensemble_sd(self.members)

    @cached_property
    def month(self) -> np.ndarray:
        return self.date.astype("datetime64[M]")

    def station_list(self) -> list:
        """Station ids present in the pairs, sorted."""
        return sorted(np.unique(self.station_id).tolist())

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            station_id=self.station_id[mask],
            date=self.date[mask],
            lead_time=self.lead_time[mask],
            obs=self.obs[mask],
            members=self.members[mask],
            stations=self.stations,
            scale=self.scale,
            dropped_missing=self.dropped_missing,
        )

    def replace_values(self, obs, members, scale) -> "Dataset":
        return Dataset(self.station_id, self.date, self.lead_time, obs, members,
                       self.stations, scale, self.dropped_missing)

    def pairs(self) -> Iterator[ForecastObservationPair]:
        for i in range(len(self)):
            yield ForecastObservationPair(
                station_id=str(self.station_id[i]),
                date=self.date[i],
                lead_time=float(self.lead_time[i]),
                forecast=EnsembleForecast(tuple(self.members[i])),
                observation=float(self.obs[i]),
            )

    @classmethod
    def from_pairs(cls, pairs, stations, scale="original") -> "Dataset":
        pairs = list(pairs)
        if not pairs:
            raise ValueError("no pairs given")
        return cls(
            station_id=[p.station_id for p in pairs],
            date=[p.date for p in pairs],
            lead_time=[p.lead_time for p in pairs],
            obs=[p.observation for p in pairs],
            members=[p.forecast.members for p in pairs],
            stations=stations,
            scale=scale,
        )


def sqrt_transform(dataset: Dataset) -> Dataset:
    """Square-root transform members and observations.

    Raises
    ------
    ValueError
        If the dataset is already on the square-root scale.
    """
    if dataset.scale != "original":
        raise ValueError("dataset is already square-root transformed")
    return dataset.replace_values(np.sqrt(dataset.obs), np.sqrt(dataset.members), "sqrt")


def window_months(target_month, policy) -> list:
    target = to_month(target_month)
    if policy == "prior_12_months":
        return [target - k for k in range(12, 0, -1)]
    if policy == "month_before":
        return [target - 1]
    if policy == "same_month_prior_year":
        return [target - 12]
    if policy == "both_months":
        return [target - 12, target - 1]
    raise ValueError(f"unknown window policy {policy!r}; expected one of {WINDOW_POLICIES}")


def select_training_window(dataset: Dataset, target_month, policy="prior_12_months") -> Dataset:
    """Pairs whose date falls in the policy's months strictly before the target."""
    months = np.array(window_months(target_month, policy))
    mask = np.isin(dataset.month, months)
    if not mask.any():
        raise WindowError(f"no training data in window for {to_month(target_month)} ({policy})")
    return dataset.subset(mask)


# --- CSV -----------------------------------------------------------------

STATION_COLUMNS = ("station_id", "lat", "lon", "height_m", "dem31_m", "dem15_m")
FORECAST_COLUMNS = ("station_id", "date", "lead_time", "obs")


def _float(text, path, line, column):
    try:
        return float(text)
    except ValueError:
        raise IngestError(f"{path}:{line}: malformed value {text!r} in column {column!r}") from None


def read_stations(path) -> dict:
    stations = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != STATION_COLUMNS:
            raise IngestError(f"{path}:1: expected header {','.join(STATION_COLUMNS)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(STATION_COLUMNS):
                raise IngestError(f"{path}:{line}: expected {len(STATION_COLUMNS)} fields, got {len(row)}")
            sid = row[0].strip()
            if sid in stations:
                raise IngestError(f"{path}:{line}: duplicate station_id {sid!r}")
            vals = [_float(v, path, line, c) for v, c in zip(row[1:], STATION_COLUMNS[1:])]
            try:
                stations[sid] = StationMeta(sid, *vals)
            except ValueError as exc:
                raise IngestError(f"{path}:{line}: {exc}") from None
    return stations


def ingest(forecast_csv_path, station_csv_path) -> Dataset:
    """Read ``forecasts.csv`` and ``stations.csv`` into an original-scale dataset.

    Rows with a missing observation are dropped and counted in
    ``Dataset.dropped_missing``.
    """
    stations = read_stations(station_csv_path)
    path = forecast_csv_path
    sids, dates, leads, obs, members = [], [], [], [], []
    dropped = 0
    K = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"{path}:1: missing header row")
        header = [h.strip() for h in header]
        if tuple(header[:4]) != FORECAST_COLUMNS or len(header) < 5:
            raise IngestError(f"{path}:1: expected header {','.join(FORECAST_COLUMNS)},m01,...")
        ncols = len(header)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) > ncols:
                raise IngestError(f"{path}:{line}: {len(row)} fields but header has {ncols}")
            row = [v.strip() for v in row] + [""] * (ncols - len(row))
            vals = [v for v in row[4:] if v.lower() not in _MISSING]
            if K is None:
                K = len(vals)
            elif len(vals) != K:
                raise IngestError(f"{path}:{line}: inconsistent ensemble size ({len(vals)} members, expected {K})")
            sid = row[0]
            if sid not in stations:
                raise IngestError(f"{path}:{line}: unknown station_id {sid!r}")
            try:
                date = np.datetime64(row[1], "D")
            except ValueError:
                raise IngestError(f"{path}:{line}: malformed date {row[1]!r}") from None
            lead = _float(row[2], path, line, "lead_time")
            if lead not in LEAD_TIMES:
                raise IngestError(f"{path}:{line}: lead_time {lead} not in {LEAD_TIMES}")
            mem = [_float(v, path, line, "member") for v in vals]
            if any(m < 0 or not math.isfinite(m) for m in mem):
                raise IngestError(f"{path}:{line}: members must be finite and non-negative")
            if row[3].lower() in _MISSING:
                dropped += 1
                continue
            y = _float(row[3], path, line, "obs")
            if y < 0 or not math.isfinite(y):
                raise IngestError(f"{path}:{line}: observation must be finite and non-negative")
            sids.append(sid)
            dates.append(date)
            leads.append(lead)
            obs.append(y)
            members.append(mem)
    if K is None or K == 0:
        raise IngestError(f"{path}: no forecast rows")
    members = np.asarray(members, dtype=float).reshape(len(obs), K)
    return Dataset(sids, np.array(dates, dtype="datetime64[D]"), leads, obs, members,
                   stations, "original", dropped)


def write_stations(stations: Mapping[str, StationMeta], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATION_COLUMNS)
        for sid in sorted(stations):
            s = stations[sid]
            w.writerow([sid, repr(s.latitude), repr(s.longitude), repr(s.height),
                        repr(s.dem_31km), repr(s.dem_15km)])


def write_forecasts(dataset: Dataset, path) -> None:
    """Write pairs in the ``forecasts.csv`` layout; floats are written with repr."""
    if dataset.scale != "original":
        raise ValueError("only original-scale datasets are written")
    width = max(2, len(str(dataset.K)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(FORECAST_COLUMNS) + [f"m{k:0{width}d}" for k in range(1, dataset.K + 1)])
        for i in range(len(dataset)):
            w.writerow([dataset.station_id[i], str(dataset.date[i]), repr(float(dataset.lead_time[i])),
                        repr(float(dataset.obs[i]))] + [repr(float(x)) for x in dataset.members[i]])


def write_dataset(dataset: Dataset, forecast_csv_path, station_csv_path) -> None:
    write_forecasts(dataset, forecast_csv_path)
    write_stations(dataset.stations, station_csv_path)
