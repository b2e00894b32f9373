"""Pretest split and decision, plus seasonal helper features.

The pretest fits the model on part of the (already neighbour-restricted)
training year and compares it with the raw ensemble on seasonally similar
held-out months. Postprocessing is accepted only if the model's mean CRPS
is strictly lower.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import clogistic, emos
from .data import Dataset, to_month
from .emos import FitConfig
from .scoring import crps_ensemble

PRETEST_VARIANTS = {
    1: "v1_same_month_prior_year",
    2: "v2_month_before",
    3: "v3_both",
}


class PretestError(ValueError):
    pass


def pretest_variant_number(variant) -> int:
    if variant in PRETEST_VARIANTS:
        return int(variant)
    for k, name in PRETEST_VARIANTS.items():
        if variant == name:
            return k
    raise ValueError(f"unknown pretest variant {variant!r}")


def traintest_months(target_month, variant) -> list:
    target = to_month(target_month)
    k = pretest_variant_number(variant)
    return {1: [target - 12], 2: [target - 1], 3: [target - 12, target - 1]}[k]


def pretest_split(training_year: Dataset, target_month, variant):
    """Split into (traintrain, traintest) by the variant's held-out month(s)."""
    is_test = np.isin(training_year.month, np.array(traintest_months(target_month, variant)))
    if not is_test.any():
        raise PretestError(f"pretest impossible: no pairs in the held-out month(s) for {to_month(target_month)}")
    return training_year.subset(~is_test), training_year.subset(is_test)


@dataclass(frozen=True)
class PretestOutcome:
    accepted: bool
    traintest_mean_crps_model: float
    traintest_mean_crps_raw: float
    traintest_size: int
    psi: Optional[emos.CoefficientVector] = None
    reason: str = ""


def pretest_decide(traintrain: Dataset, traintest: Dataset, weights=None,
                   fit_config: FitConfig = FitConfig()) -> PretestOutcome:
    """Fit on ``traintrain`` and compare with the raw ensemble on ``traintest``.

    Ties keep the raw ensemble. A failed fit also keeps the raw ensemble and
    records the reason.
    """
    if len(traintrain) == 0 or len(traintest) == 0:
        raise PretestError("pretest needs non-empty traintrain and traintest sets")
    H = len(traintest)
    raw = float(np.mean(crps_ensemble(traintest.members, traintest.obs)))
    try:
        psi = emos.fit(traintrain, weights, fit_config)
    except (emos.FitError, emos.InsufficientDataError, emos.NonIdentifiableError) as exc:
        return PretestOutcome(False, float("nan"), raw, H, None, f"fit failed: {exc}")
    loc, scale = emos.link_arrays(psi, traintest.control, traintest.mean, traintest.sd)
    model = float(np.mean(clogistic.crps(loc, scale, traintest.obs)))
    return PretestOutcome(raw > model, model, raw, H, psi)


def sine_covariate(month: int) -> float:
    """sin(month * pi / 12) for a calendar month 1..12."""
    if not (isinstance(month, (int, np.integer)) and 1 <= month <= 12):
        raise ValueError(f"month must be an integer in 1..12, got {month!r}")
    return math.sin(month * math.pi / 12)


SUMMER_MONTHS = frozenset(range(5, 11))


def sit_classify(forecast, month: int) -> str:
    """Wet/dry by ``mean - sd > 0.1`` (square-root scale), summer = May..October."""
    mean, sd = forecast.mean, forecast.sd
    wetness = "dry" if mean - sd <= 0.1 else "wet"
    season = "summer" if month in SUMMER_MONTHS else "winter"
    return f"{wetness}_{season}"


def sit_weights(dataset: Dataset, situation: str) -> np.ndarray:
    """Weight 1 for training pairs allocated to ``situation``."""
    wet = (dataset.mean - dataset.sd) > 0.1
    months = (dataset.month.astype(int) % 12) + 1
    summer = np.isin(months, list(SUMMER_MONTHS))
    labels = np.where(wet, "wet_", "dry_").astype(object) + np.where(summer, "summer", "winter").astype(object)
    return (labels == situation).astype(float)


PRETEST_CSV_COLUMNS = ("station_id", "target_month", "lead_time", "accepted", "H",
                       "traintest_mean_crps_model", "traintest_mean_crps_raw")


def write_pretest_csv(records, path) -> None:
    """Write acceptance decisions; ``records`` are dicts keyed by the CSV columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRETEST_CSV_COLUMNS)
        for r in records:
            w.writerow([r["station_id"], r["target_month"], repr(float(r["lead_time"])),
                        str(bool(r["accepted"])).lower(), int(r["H"]),
                        repr(float(r["traintest_mean_crps_model"])), repr(float(r["traintest_mean_crps_raw"]))])


def read_pretest_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["lead_time"] = float(r["lead_time"])
        r["accepted"] = r["accepted"] == "true"
        r["H"] = int(r["H"])
        r["traintest_mean_crps_model"] = float(r["traintest_mean_crps_model"])
        r["traintest_mean_crps_raw"] = float(r["traintest_mean_crps_raw"])
    return rows
