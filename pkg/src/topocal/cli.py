"""Command line interface.

Every option may also come from a plain-text config file given with
``--config``: one ``key = value`` per line, ``#`` starts a comment, keys are
option names without the leading dashes (``lead-time`` or ``lead_time``).
Command-line options override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline, reports, seasonal
from .data import ingest, month_range, write_dataset
from .emos import FitConfig
from .synthetic import SyntheticConfig, generate_synthetic


def read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_months(text):
    """``2018-01..2018-12`` or a single ``2018-03``."""
    first, _, last = text.partition("..")
    return month_range(first, last or first)


def parse_grid(text):
    """``10:80:10`` (inclusive) or a comma list."""
    if ":" in text:
        lo, hi, step = (int(v) for v in text.split(":"))
        return list(range(lo, hi + 1, step))
    return [int(v) for v in text.split(",")]


def parse_floats(text):
    return [float(v) for v in text.split(",")]


def _pipeline_config(args) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        fit=FitConfig(optimizer=args.optimizer, max_iterations=args.max_iterations, tolerance=args.tolerance),
        n_samples=args.n_samples,
        sampling=args.sampling,
        workers=args.workers,
        train_stations=tuple(args.train_stations.split(",")) if args.train_stations else None,
        target_stations=tuple(args.target_stations.split(",")) if args.target_stations else None,
    )


def _dump(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_ingest(args):
    ds = ingest(args.forecasts, args.stations)
    if args.out_forecasts:
        write_dataset(ds, args.out_forecasts, args.out_stations or Path(args.out_forecasts).with_name("stations.csv"))
    _dump({
        "pairs": len(ds),
        "stations": len(ds.stations),
        "K": ds.K,
        "dropped_missing": ds.dropped_missing,
        "first_date": str(ds.date.min()),
        "last_date": str(ds.date.max()),
        "lead_times": sorted(set(ds.lead_time.tolist())),
    })


def cmd_synth(args):
    cfg = SyntheticConfig(regime=args.regime, n_stations=args.n_stations, start_month=args.start,
                          n_months=args.n_months, days_per_month=args.days_per_month, K=args.members,
                          lead_time=args.lead_time, calibrated_obs=args.calibrated_obs)
    ds = generate_synthetic(cfg, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out / "forecasts.csv", out / "stations.csv")
    _dump({"pairs": len(ds), "stations": len(ds.stations), "regime": args.regime, "out": str(out)})


def cmd_fit(args):
    ds = ingest(args.forecasts, args.stations)
    variant = pipeline.ModelVariant(args.variant, args.L, args.pretest)
    res = pipeline.run_variant(variant, ds, parse_months(args.months), args.lead_time, args.seed,
                               _pipeline_config(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports.write_models(res.models, out / "models.json")
    reports.write_predictions(res.output, out / "predictions.csv")
    if res.pretest:
        seasonal.write_pretest_csv(res.pretest, out / "pretest.csv")
    if res.errors:
        (out / "errors.json").write_text(json.dumps(res.errors, indent=2) + "\n", encoding="utf-8")
    _dump({"variant": variant.label, "models": len(res.models), "pairs": len(res.output),
           "errors": len(res.errors), "mean_crps": res.output.mean_crps() if res.output.valid.any() else None})


def cmd_predict(args):
    ds = ingest(args.forecasts, args.stations)
    models = reports.read_models(args.models)
    out = pipeline.apply_models(models, ds, args.seed, _pipeline_config(args), label=args.label)
    reports.write_predictions(out, args.out)
    _dump({"pairs": len(out), "predicted": int(out.valid.sum()), "postprocessed": int(out.postprocessed.sum())})


def cmd_verify(args):
    outputs = {}
    for item in args.predictions:
        label, _, path = item.partition("=")
        if not path:
            label, path = Path(item).parent.name or Path(item).stem, item
        outputs[label] = reports.read_predictions(path, label)
    report = pipeline.verify_run(outputs, None, parse_floats(args.thresholds), args.reference,
                                 args.seed, args.bootstrap)
    text = pipeline.report_json(report)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if args.plots:
        reports.plot_report(report, args.plots)
    for name, entry in report["models"].items():
        brier = ", ".join(f"BS{u}: {100 * b['skill']:+.1f}%" if b["skill"] is not None else f"BS{u}: n/a"
                          for u, b in entry["brier"].items())
        print(f"{name:32s} CRPS {entry['mean_crps']:.4f}  skill {100 * entry['skill']:+.2f}%  {brier}")


def cmd_select_l(args):
    ds = ingest(args.forecasts, args.stations)
    pts = [int(p) for p in args.pretest_splits.split(",")]
    sel = pipeline.select_L(ds, parse_grid(args.grid), pipeline.VARIANT_ALIASES[args.variant],
                            parse_months(args.months), args.lead_time, args.seed, pts, _pipeline_config(args))
    _dump({"L": sel.L, "pretest": sel.pretest,
           "scores": [{"L": L, "pretest": p, "mean_crps": v} for (L, p), v in sorted(sel.scores.items(),
                                                                                    key=lambda kv: (kv[0][0], kv[0][1] or 0))]})


def _add_data(p):
    p.add_argument("--forecasts", required=False)
    p.add_argument("--stations", required=False)


def _add_run(p):
    p.add_argument("--lead-time", type=float, default=1.0)
    p.add_argument("--months", help="target months, e.g. 2018-01..2018-12")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--n-samples", type=int, default=21)
    p.add_argument("--sampling", choices=("random", "quantile"), default="random")
    p.add_argument("--optimizer", choices=("quasi_newton", "nelder_mead"), default="quasi_newton")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--train-stations", help="comma-separated station ids used for training")
    p.add_argument("--target-stations", help="comma-separated station ids to predict")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topocal", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and summarize input CSVs")
    _add_data(p)
    p.add_argument("--out-forecasts")
    p.add_argument("--out-stations")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--regime", choices=("calibrated", "biased", "dem-bias", "cnlr", "mixed"), default="dem-bias")
    p.add_argument("--n-stations", type=int, default=30)
    p.add_argument("--start", default="2017-01")
    p.add_argument("--n-months", type=int, default=24)
    p.add_argument("--days-per-month", type=int)
    p.add_argument("--members", type=int, default=21)
    p.add_argument("--lead-time", type=float, default=1.0)
    p.add_argument("--calibrated-obs", choices=("exchangeable", "resample"), default="exchangeable")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synthetic")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a model variant and predict the target months")
    _add_data(p)
    _add_run(p)
    p.add_argument("--variant", choices=tuple(pipeline.VARIANT_ALIASES), default="dem")
    p.add_argument("--L", type=int, default=40)
    p.add_argument("--pretest", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("--out", default="run")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply stored models to forecasts")
    _add_data(p)
    _add_run(p)
    p.add_argument("--models")
    p.add_argument("--label", default="model")
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="score prediction files against the raw ensemble")
    p.add_argument("--predictions", nargs="+", metavar="LABEL=PATH")
    p.add_argument("--reference", default="raw")
    p.add_argument("--thresholds", default="0.1,5,20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples of mean CRPS (0 = off)")
    p.add_argument("--out")
    p.add_argument("--plots", help="directory for PNG plots")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("select-l", help="grid search for the number of similar stations")
    _add_data(p)
    _add_run(p)
    p.add_argument("--variant", choices=("dem", "dem-pt"), default="dem")
    p.add_argument("--grid", default="10:80:10")
    p.add_argument("--pretest-splits", default="1,2,3")
    p.set_defaults(func=cmd_select_l)
    return parser


_REQUIRED = {
    "ingest": ("forecasts", "stations"),
    "fit": ("forecasts", "stations", "months"),
    "predict": ("forecasts", "stations", "models"),
    "verify": ("predictions",),
    "select-l": ("forecasts", "stations", "months"),
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        conf = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(conf) - known
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        if "predictions" in conf:
            conf["predictions"] = conf["predictions"].split()
        sub.set_defaults(**conf)
        args = parser.parse_args(argv)
        # set_defaults bypasses type conversion
        for action in sub._actions:
            val = getattr(args, action.dest, None)
            if isinstance(val, str) and action.type not in (None, str):
                setattr(args, action.dest, action.type(val))
    missing = [k for k in _REQUIRED.get(args.command, ()) if not getattr(args, k, None)]
    if missing:
        parser.error(f"{args.command}: missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
