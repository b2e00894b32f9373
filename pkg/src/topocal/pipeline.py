"""End-to-end model variants, L selection, back-transform and verification.

Every (target station, target month) is an independent task: select the
training year, weight it according to the variant, fit, and emit a
21-value sample per pair squared back to the original scale. Each task
draws from its own random stream derived from the master seed, so results
do not depend on the number of workers.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import emos, scoring
from .data import Dataset, WindowError, select_training_window, sqrt_transform, to_month
from .emos import CoefficientVector, FitConfig
from .seasonal import PretestError, pretest_decide, pretest_split, pretest_variant_number
from .similarity import similar_stations

log = logging.getLogger(__name__)

VARIANT_KINDS = ("raw", "global_cnlr", "local_cnlr", "dem_cnlr", "dem_pretest_cnlr")
VARIANT_ALIASES = {
    "raw": "raw",
    "global": "global_cnlr",
    "local": "local_cnlr",
    "dem": "dem_cnlr",
    "dem-pt": "dem_pretest_cnlr",
}
_FIT_ERRORS = (emos.FitError, emos.InsufficientDataError, emos.NonIdentifiableError, WindowError, ValueError)


@dataclass(frozen=True)
class ModelVariant:
    kind: str
    L: Optional[int] = None
    pretest: Optional[int] = None
    distance_kind: str = "dem31"

    def __post_init__(self):
        kind = VARIANT_ALIASES.get(self.kind, self.kind)
        if kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind in ("dem_cnlr", "dem_pretest_cnlr"):
            if self.L is None or self.L < 1:
                raise ValueError(f"{kind} needs L >= 1")
        if kind == "dem_pretest_cnlr":
            object.__setattr__(self, "pretest", pretest_variant_number(self.pretest or 3))

    @property
    def label(self) -> str:
        if self.kind == "dem_cnlr":
            return f"dem_cnlr_L{self.L}"
        if self.kind == "dem_pretest_cnlr":
            return f"dem_pretest_cnlr_L{self.L}_PT{self.pretest}"
        return self.kind


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by all tasks of a run.

    ``train_stations``/``target_stations`` restrict which stations supply
    training data and which are predicted (``None`` means all).
    """

    fit: FitConfig = FitConfig()
    n_samples: int = 21
    sampling: str = "random"
    window: str = "prior_12_months"
    workers: int = 1
    train_stations: Optional[tuple] = None
    target_stations: Optional[tuple] = None

    def __post_init__(self):
        if self.sampling not in ("random", "quantile"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


@dataclass(frozen=True)
class FittedModel:
    psi: Optional[CoefficientVector]
    station_id: str
    target_month: str
    lead_time: float
    L: Optional[int]
    pretest_variant: Optional[int]
    accepted: bool

    def to_json(self) -> dict:
        return {
            "psi": self.psi.as_list() if self.psi is not None else None,
            "meta": {
                "station_id": self.station_id,
                "target_month": self.target_month,
                "lead_time": self.lead_time,
                "L": self.L,
                "pretest_variant": self.pretest_variant,
                "accepted": self.accepted,
            },
        }

    @classmethod
    def from_json(cls, d) -> "FittedModel":
        m = d["meta"]
        psi = CoefficientVector.from_array(d["psi"]) if d.get("psi") is not None else None
        return cls(psi, m["station_id"], m["target_month"], float(m["lead_time"]), m.get("L"),
                   m.get("pretest_variant"), bool(m["accepted"]))


@dataclass(frozen=True, eq=False)
class PredictiveOutput:
    """Per-pair predictive output on the original scale.

    ``values`` holds raw members or back-transformed samples (NaN-padded when
    widths differ); ``location``/``scale`` are the sqrt-scale parameters of
    postprocessed pairs and NaN for raw passthrough.
    """

    label: str
    station_id: np.ndarray
    date: np.ndarray
    lead_time: np.ndarray
    obs: np.ndarray
    values: np.ndarray
    location: np.ndarray
    scale: np.ndarray
    postprocessed: np.ndarray
    valid: np.ndarray
    flag: np.ndarray

    def __len__(self):
        return len(self.obs)

    @property
    def month(self):
        return self.date.astype("datetime64[M]")

    def mean_crps(self, mask=None) -> float:
        m = self.valid if mask is None else mask & self.valid
        return float(np.mean(scoring.crps_ensemble(self.values[m], self.obs[m])))


@dataclass
class RunResult:
    output: PredictiveOutput
    models: list = field(default_factory=list)
    pretest: list = field(default_factory=list)
    errors: list = field(default_factory=list)


# --- sampling --------------------------------------------------------------

def _uniforms(rng, shape, sampling):
    if sampling == "quantile":
        n = shape[-1]
        return np.broadcast_to((np.arange(1, n + 1) - 0.5) / n, shape)
    u = rng.random(shape)
    return np.where(u == 0.0, 2.0 ** -53, u)


def back_transform(params, rng, n_samples=21, sampling="random") -> np.ndarray:
    """Censored-logistic sample squared back to the original scale.

    ``params`` is a :class:`CensoredLogistic` or ``(location, scale)`` arrays;
    the result has shape ``(..., n_samples)``.
    """
    loc, scale = (params.location, params.scale) if hasattr(params, "location") else params
    loc = np.asarray(loc, dtype=float)[..., None]
    scale = np.asarray(scale, dtype=float)[..., None]
    shape = np.broadcast_shapes(loc.shape, scale.shape)[:-1] + (n_samples,)
    u = _uniforms(rng, shape, sampling)
    x = np.maximum(0.0, loc + scale * np.log(u / (1.0 - u)))
    return x * x


# --- tasks -----------------------------------------------------------------

@dataclass
class _Context:
    original: Dataset
    sqrt: Dataset
    variant: ModelVariant
    lead_time: float
    seed: int
    config: PipelineConfig
    station_index: dict
    train_pool: Optional[frozenset]


_WORKER_CTX: Optional[_Context] = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _task_rng(ctx: _Context, station_id, month):
    key = [int(ctx.seed), ctx.station_index[station_id], int(month.astype(int)), int(round(ctx.lead_time * 2))]
    return np.random.default_rng(np.random.SeedSequence(key))


def _training(ctx: _Context, station_id, month):
    window = select_training_window(ctx.sqrt, month, ctx.config.window)
    if ctx.variant.kind == "local_cnlr":
        window = window.subset(window.station_id == station_id)
    elif ctx.train_pool is not None:
        window = window.subset(np.isin(window.station_id, list(ctx.train_pool)))
    if len(window) == 0:
        raise WindowError(f"no training data in window for {station_id} {month}")
    return window


def _fit_task(ctx: _Context, station_id, month):
    """Return (psi or None, accepted, pretest_record or None, flag)."""
    v = ctx.variant
    training = _training(ctx, station_id, month)
    if v.kind == "local_cnlr":
        return emos.fit(training, None, ctx.config.fit), True, None, ""
    if v.kind == "global_cnlr":
        training = training.subset(training.station_id != station_id)
        return emos.fit(training, None, ctx.config.fit), True, None, ""
    present = {s: ctx.sqrt.stations[s] for s in training.station_list()}
    chosen = similar_stations(ctx.sqrt.stations[station_id], present, v.L, v.distance_kind)
    training = training.subset(np.isin(training.station_id, chosen))
    if v.kind == "dem_cnlr":
        return emos.fit(training, None, ctx.config.fit), True, None, ""
    record = {"station_id": station_id, "target_month": str(month), "lead_time": ctx.lead_time}
    try:
        traintrain, traintest = pretest_split(training, month, v.pretest)
    except PretestError as exc:
        record.update(accepted=False, H=0, traintest_mean_crps_model=float("nan"),
                      traintest_mean_crps_raw=float("nan"), reason=str(exc))
        return None, False, record, "pretest_error"
    outcome = pretest_decide(traintrain, traintest, None, ctx.config.fit)
    record.update(accepted=outcome.accepted, H=outcome.traintest_size,
                  traintest_mean_crps_model=outcome.traintest_mean_crps_model,
                  traintest_mean_crps_raw=outcome.traintest_mean_crps_raw, reason=outcome.reason)
    if not outcome.accepted:
        return None, False, record, "pretest_error" if outcome.reason else "raw_retained"
    return emos.fit(training, None, ctx.config.fit), True, record, ""


def _run_task(args):
    station_id, month, rows = args
    ctx = _WORKER_CTX
    n = len(rows)
    width = max(ctx.config.n_samples, ctx.original.K)
    out = {
        "rows": rows,
        "values": np.full((n, width), np.nan),
        "location": np.full(n, np.nan),
        "scale": np.full(n, np.nan),
        "postprocessed": np.zeros(n, dtype=bool),
        "valid": np.ones(n, dtype=bool),
        "flag": "",
        "model": None,
        "pretest": None,
        "error": None,
    }
    raw = ctx.original.members[rows]
    if ctx.variant.kind == "raw":
        out["values"][:, :raw.shape[1]] = raw
        return out
    try:
        psi, accepted, record, flag = _fit_task(ctx, station_id, month)
    except _FIT_ERRORS as exc:
        out["valid"][:] = False
        out["flag"] = "fit_error"
        out["error"] = {"station_id": station_id, "target_month": str(month), "error": str(exc)}
        return out
    out["pretest"] = record
    out["flag"] = flag
    v = ctx.variant
    out["model"] = FittedModel(psi, station_id, str(month), ctx.lead_time, v.L, v.pretest, accepted)
    if psi is None:
        out["values"][:, :raw.shape[1]] = raw
        return out
    s = ctx.sqrt
    loc, scale = emos.link_arrays(psi, s.control[rows], s.mean[rows], s.sd[rows])
    rng = _task_rng(ctx, station_id, month)
    samples = back_transform((loc, scale), rng, ctx.config.n_samples, ctx.config.sampling)
    out["values"][:, :samples.shape[1]] = samples
    out["location"], out["scale"] = loc, scale
    out["postprocessed"][:] = True
    return out


def _as_scales(dataset: Dataset):
    if dataset.scale == "original":
        return dataset, sqrt_transform(dataset)
    return dataset.replace_values(dataset.obs ** 2, dataset.members ** 2, "original"), dataset


def _execute(ctx: _Context, tasks):
    if ctx.config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(ctx.config.workers, initializer=_init_worker, initargs=(ctx,)) as pool:
            return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * ctx.config.workers))))
    _init_worker(ctx)
    return [_run_task(t) for t in tasks]


def run_variant(variant: ModelVariant, dataset: Dataset, target_months, lead_time=1.0, rng_seed=0,
                config: PipelineConfig = PipelineConfig()) -> RunResult:
    """Predict every target station/month with one model variant.

    Stations are always left out of their own training data except in the
    local variant, which trains on the target station only.
    """
    original, sq = _as_scales(dataset)
    months = [to_month(m) for m in np.atleast_1d(target_months)]
    targets = config.target_stations or tuple(original.station_list())
    eval_mask = ((original.lead_time == lead_time) & np.isin(original.month, np.array(months))
                 & np.isin(original.station_id, list(targets)))
    eval_rows = np.flatnonzero(eval_mask)
    lead = original.lead_time == lead_time
    ctx = _Context(
        original=original,
        sqrt=sq.subset(lead),
        variant=variant,
        lead_time=float(lead_time),
        seed=int(rng_seed),
        config=config,
        station_index={sid: i for i, sid in enumerate(sorted(original.stations))},
        train_pool=frozenset(config.train_stations) if config.train_stations else None,
    )
    # Row indices inside the lead-time subset used by the tasks.
    lead_index = np.cumsum(lead) - 1
    tasks = []
    for m in months:
        for sid in sorted(targets):
            rows = eval_rows[(original.month[eval_rows] == m) & (original.station_id[eval_rows] == sid)]
            if len(rows):
                tasks.append((sid, m, lead_index[rows]))
    ctx = replace(ctx, original=original.subset(lead))
    results = _execute(ctx, tasks)

    n = len(eval_rows)
    width = max(config.n_samples, original.K)
    pos = {r: i for i, r in enumerate(lead_index[eval_rows])}
    values = np.full((n, width), np.nan)
    location = np.full(n, np.nan)
    scale = np.full(n, np.nan)
    post = np.zeros(n, dtype=bool)
    valid = np.ones(n, dtype=bool)
    flag = np.full(n, "", dtype=object)
    models, pretest, errors = [], [], []
    for res in results:
        idx = np.array([pos[r] for r in res["rows"]])
        values[idx] = res["values"]
        location[idx] = res["location"]
        scale[idx] = res["scale"]
        post[idx] = res["postprocessed"]
        valid[idx] = res["valid"]
        flag[idx] = res["flag"]
        if res["model"] is not None:
            models.append(res["model"])
        if res["pretest"] is not None:
            pretest.append(res["pretest"])
        if res["error"] is not None:
            errors.append(res["error"])
    output = PredictiveOutput(
        label=variant.label,
        station_id=original.station_id[eval_rows],
        date=original.date[eval_rows],
        lead_time=original.lead_time[eval_rows],
        obs=original.obs[eval_rows],
        values=values,
        location=location,
        scale=scale,
        postprocessed=post,
        valid=valid,
        flag=flag.astype(str),
    )
    return RunResult(output, models, pretest, errors)


def apply_models(models: Sequence[FittedModel], dataset: Dataset, rng_seed=0,
                 config: PipelineConfig = PipelineConfig(), label="model") -> PredictiveOutput:
    """Apply stored coefficient vectors to matching station/month/lead-time pairs.

    Pairs without a matching model are marked invalid; models with
    ``accepted=False`` pass the raw ensemble through.
    """
    original, sq = _as_scales(dataset)
    index = {(m.station_id, str(to_month(m.target_month)), float(m.lead_time)): m for m in models}
    station_index = {sid: i for i, sid in enumerate(sorted(original.stations))}
    n = len(original)
    width = max(config.n_samples, original.K)
    values = np.full((n, width), np.nan)
    location = np.full(n, np.nan)
    scale = np.full(n, np.nan)
    post = np.zeros(n, dtype=bool)
    valid = np.zeros(n, dtype=bool)
    keys = list(zip(original.station_id.tolist(), [str(m) for m in original.month], original.lead_time.tolist()))
    groups: dict = {}
    for i, k in enumerate(keys):
        groups.setdefault(k, []).append(i)
    for key in sorted(groups):
        rows = np.array(groups[key])
        model = index.get(key)
        if model is None:
            continue
        valid[rows] = True
        if not model.accepted or model.psi is None:
            values[rows, :original.K] = original.members[rows]
            continue
        loc, sc = emos.link_arrays(model.psi, sq.control[rows], sq.mean[rows], sq.sd[rows])
        seq = np.random.SeedSequence([int(rng_seed), station_index[key[0]],
                                      int(to_month(key[1]).astype(int)), int(round(key[2] * 2))])
        samples = back_transform((loc, sc), np.random.default_rng(seq), config.n_samples, config.sampling)
        values[rows, :config.n_samples] = samples
        location[rows], scale[rows], post[rows] = loc, sc, True
    return PredictiveOutput(label, original.station_id, original.date, original.lead_time, original.obs,
                            values, location, scale, post, valid, np.full(n, "", dtype=str))


# --- L selection -----------------------------------------------------------

@dataclass(frozen=True)
class Selection:
    L: int
    pretest: Optional[int]
    scores: dict


def select_L(dataset: Dataset, grid, variant_base="dem_cnlr", validation_months=None, lead_time=1.0,
             rng_seed=0, pretest_variants=(1, 2, 3), config: PipelineConfig = PipelineConfig()) -> Selection:
    """Grid point with the lowest original-scale mean CRPS; ties go to the smallest L.

    For the pretest variant every (L, pretest split) combination is scored.
    Scores are keyed by ``(L, pretest)``.
    """
    kind = VARIANT_ALIASES.get(variant_base, variant_base)
    if kind not in ("dem_cnlr", "dem_pretest_cnlr"):
        raise ValueError("select_L applies to the dem and dem-pretest variants")
    grid = sorted(set(int(L) for L in grid))
    if not grid:
        raise ValueError("empty L grid")
    splits = [pretest_variant_number(p) for p in pretest_variants] if kind == "dem_pretest_cnlr" else [None]
    scores = {}
    for L in grid:
        for pt in splits:
            res = run_variant(ModelVariant(kind, L, pt), dataset, validation_months, lead_time, rng_seed, config)
            if res.output.valid.any():
                scores[(L, pt)] = res.output.mean_crps()
            else:
                log.warning("L=%s pretest=%s produced no valid predictions", L, pt)
    if not scores:
        raise RuntimeError("every grid point failed")
    best = min(scores, key=lambda k: (scores[k], k[0], k[1] or 0))
    return Selection(best[0], best[1], scores)


# --- verification ----------------------------------------------------------

def _pit(out: PredictiveOutput, mask, rng):
    y = np.sqrt(out.obs[mask])
    v = rng.random(int(mask.sum()))
    pit = scoring.pit_randomized_ensemble(np.sqrt(out.values[mask]), y, v)
    post = out.postprocessed[mask]
    if post.any():
        pit[post] = scoring.pit_randomized((out.location[mask][post], out.scale[mask][post]), y[post], v[post])
    return pit


def _grouped_skill(keys, model_scores, ref_scores):
    out = {}
    for k in sorted(set(keys)):
        sel = keys == k
        ref = ref_scores[sel].mean()
        out[str(k)] = float(1.0 - model_scores[sel].mean() / ref) if ref > 0 else None
    return out


def verify_run(outputs, observations=None, thresholds=scoring.DEFAULT_THRESHOLDS, reference_raw="raw",
               seed=0, bootstrap=0) -> dict:
    """Verification report for several aligned predictive outputs.

    ``outputs`` maps labels to :class:`PredictiveOutput`; ``reference_raw``
    names the raw-ensemble entry that skills are computed against. Only pairs
    valid in every output are scored.
    """
    if reference_raw not in outputs:
        raise ValueError(f"reference {reference_raw!r} not among outputs")
    ref = outputs[reference_raw]
    for name, out in outputs.items():
        if (len(out) != len(ref) or not np.array_equal(out.station_id, ref.station_id)
                or not np.array_equal(out.date, ref.date) or not np.array_equal(out.obs, ref.obs)):
            raise ValueError(f"output {name!r} is not aligned with {reference_raw!r}")
    if observations is not None:
        obs = observations.obs if isinstance(observations, Dataset) else np.asarray(observations, dtype=float)
        if obs.shape != ref.obs.shape or not np.array_equal(obs, ref.obs):
            raise ValueError("observations are not aligned with the outputs")
    mask = np.logical_and.reduce([o.valid for o in outputs.values()])
    if not mask.any():
        raise ValueError("no pair is valid in every output")
    y = ref.obs[mask]
    months = ref.month[mask].astype(str)
    stations = ref.station_id[mask]
    ref_crps = scoring.crps_ensemble(ref.values[mask], y)
    ref_brier = {u: scoring.brier_ensemble(ref.values[mask], y, u) for u in thresholds}

    report = {"reference": reference_raw, "n_pairs": int(mask.sum()),
              "n_skipped": int((~mask).sum()), "thresholds": [float(u) for u in thresholds], "models": {}}
    for i, (name, out) in enumerate(outputs.items()):
        crps = scoring.crps_ensemble(out.values[mask], y)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        entry = {
            "mean_crps": float(crps.mean()),
            "skill": float(scoring.skill(crps.mean(), ref_crps.mean())),
            "monthly_skill": _grouped_skill(months, crps, ref_crps),
            "station_skill": _grouped_skill(stations, crps, ref_crps),
            "brier": {},
            "pit_histogram": scoring.pit_histogram(_pit(out, mask, rng)).tolist(),
            "rank_histogram": scoring.rank_histogram(out.values[mask], y, rng).tolist(),
            "fraction_postprocessed": float(out.postprocessed[mask].mean()),
        }
        for u in thresholds:
            bs = scoring.brier_ensemble(out.values[mask], y, u)
            ref_bs = ref_brier[u].mean()
            entry["brier"][repr(float(u))] = {
                "mean": float(bs.mean()),
                "skill": float(1.0 - bs.mean() / ref_bs) if ref_bs > 0 else None,
            }
        if bootstrap:
            reps = scoring.bootstrap_mean(crps, bootstrap, seed=int(seed) + i)
            entry["mean_crps_bootstrap"] = {"n": int(bootstrap), "q05": float(np.quantile(reps, 0.05)),
                                            "q95": float(np.quantile(reps, 0.95))}
        report["models"][name] = entry
    return report


def report_json(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=True)
