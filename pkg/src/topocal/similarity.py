"""Station similarity and nearest-neighbour training weights."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, StationMeta

DISTANCE_KINDS = ("dem31", "dem15", "dem_both_ranks", "spatial_euclid", "three_dim_ranks", "enschar")

_FIELDS = {
    "dem31": "dem_31km",
    "dem15": "dem_15km",
    "lat": "latitude",
    "lon": "longitude",
    "height": "height",
}


def dem_distance(a: StationMeta, b: StationMeta, resolution="dem31") -> float:
    """Absolute difference of smoothed terrain height (31 km field by default)."""
    attr = _FIELDS[resolution]
    return abs(getattr(a, attr) - getattr(b, attr))


def spatial_distance(a: StationMeta, b: StationMeta) -> float:
    """Euclidean distance in degrees of latitude/longitude."""
    return math.hypot(a.latitude - b.latitude, a.longitude - b.longitude)


def enschar_distance(q1, q2) -> float:
    """Distance between two ensemble situations given as (mean, sd)."""
    return math.hypot(q1[0] - q2[0], q1[1] - q2[1])


def rank_combined_distance(target: StationMeta, stations: Sequence[StationMeta], fields) -> np.ndarray:
    """Sum over ``fields`` of each station's rank by absolute difference from ``target``.

    Ties receive middle ranks; lower totals mean more similar stations.
    """
    if len(stations) < 2:
        raise ValueError("rank-combined distances need at least two stations")
    fields = list(fields)
    if not fields:
        raise ValueError("at least one field is required")
    total = np.zeros(len(stations))
    for f in fields:
        attr = _FIELDS[f]
        d = np.abs(np.array([getattr(s, attr) for s in stations]) - getattr(target, attr))
        total += rankdata(d, method="average")
    return total


def station_distances(target: StationMeta, stations: Sequence[StationMeta], kind="dem31") -> np.ndarray:
    if kind in ("dem31", "dem15"):
        attr = _FIELDS[kind]
        return np.abs(np.array([getattr(s, attr) for s in stations], dtype=float) - getattr(target, attr))
    if kind == "spatial_euclid":
        return np.array([spatial_distance(target, s) for s in stations])
    if kind == "dem_both_ranks":
        return rank_combined_distance(target, stations, ("dem15", "dem31"))
    if kind == "three_dim_ranks":
        return rank_combined_distance(target, stations, ("lat", "lon", "height"))
    raise ValueError(f"{kind!r} is not a station distance")


def nearest(distances, L) -> np.ndarray:
    """Mask of entries whose distance is at most the L-th smallest (ties included)."""
    distances = np.asarray(distances, dtype=float)
    if L < 1:
        raise ValueError("L must be at least 1")
    if L >= len(distances):
        return np.ones(len(distances), dtype=bool)
    cutoff = np.partition(distances, L - 1)[L - 1]
    return distances <= cutoff


def similar_stations(target: StationMeta, candidates: Mapping[str, StationMeta], L, kind="dem31",
                     exclude_target=True) -> list:
    """Ids of the L most similar candidate stations (more when tied at the cutoff)."""
    ids = sorted(sid for sid in candidates if not (exclude_target and sid == target.station_id))
    if not ids:
        raise ValueError("no training stations available")
    d = station_distances(target, [candidates[i] for i in ids], kind)
    return [sid for sid, keep in zip(ids, nearest(d, L)) if keep]


def nn_weights(target, training: Dataset, L, distance_kind="dem31", exclude_target=True) -> np.ndarray:
    """Binary training weights selecting pairs from the L nearest stations.

    For ``distance_kind='enschar'`` the target is an ensemble situation
    ``(mean, sd)`` and the L nearest *pairs* are selected instead.
    """
    if distance_kind == "enschar":
        q = np.asarray(target, dtype=float)
        d = np.hypot(training.mean - q[0], training.sd - q[1])
        return nearest(d, L).astype(float)
    present = {sid: training.stations[sid] for sid in training.station_list()}
    chosen = similar_stations(target, present, L, distance_kind, exclude_target)
    return np.isin(training.station_id, chosen).astype(float)
