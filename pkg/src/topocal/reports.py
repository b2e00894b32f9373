"""File formats for fitted models, predictions and verification plots."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .pipeline import FittedModel, PredictiveOutput


def write_models(models, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([m.to_json() for m in models], fh, indent=2)
        fh.write("\n")


def read_models(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [FittedModel.from_json(d) for d in json.load(fh)]


PREDICTION_COLUMNS = ("station_id", "date", "lead_time", "obs", "postprocessed", "valid", "location", "scale")


def write_predictions(output: PredictiveOutput, path) -> None:
    width = output.values.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(PREDICTION_COLUMNS) + [f"v{k:02d}" for k in range(1, width + 1)])
        for i in range(len(output)):
            w.writerow([output.station_id[i], str(output.date[i]), repr(float(output.lead_time[i])),
                        repr(float(output.obs[i])), int(output.postprocessed[i]), int(output.valid[i]),
                        repr(float(output.location[i])), repr(float(output.scale[i]))]
                       + ["" if np.isnan(v) else repr(float(v)) for v in output.values[i]])


def read_predictions(path, label=None) -> PredictiveOutput:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    ncol = len(PREDICTION_COLUMNS)
    if tuple(header[:ncol]) != PREDICTION_COLUMNS:
        raise ValueError(f"{path}: unexpected prediction header")
    values = np.array([[float(v) if v else np.nan for v in r[ncol:]] for r in rows], dtype=float)
    values = values.reshape(len(rows), len(header) - ncol)
    col = lambda j: [r[j] for r in rows]
    return PredictiveOutput(
        label=label or Path(path).stem,
        station_id=np.array(col(0), dtype=str),
        date=np.array(col(1), dtype="datetime64[D]"),
        lead_time=np.array(col(2), dtype=float),
        obs=np.array(col(3), dtype=float),
        values=values,
        location=np.array(col(6), dtype=float),
        scale=np.array(col(7), dtype=float),
        postprocessed=np.array(col(4), dtype=int).astype(bool),
        valid=np.array(col(5), dtype=int).astype(bool),
        flag=np.full(len(rows), "", dtype=str),
    )


def plot_report(report, outdir) -> list:
    """Monthly skill lines and PIT/rank histograms as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(8, 4))
    for name, entry in report["models"].items():
        if name == report["reference"]:
            continue
        months = list(entry["monthly_skill"])
        ax.plot(months, [100 * (s or 0.0) for s in entry["monthly_skill"].values()], marker="o", label=name)
    ax.axhline(0, color="k", lw=0.8)
    ax.set_ylabel("CRPS skill vs raw [%]")
    ax.tick_params(axis="x", rotation=45)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / "monthly_skill.png"
    fig.savefig(path, dpi=100)
    plt.close(fig)
    written.append(path)

    for name, entry in report["models"].items():
        for key in ("pit_histogram", "rank_histogram"):
            counts = np.asarray(entry[key])
            fig, ax = plt.subplots(figsize=(5, 3))
            ax.bar(np.arange(len(counts)), counts / max(counts.sum(), 1), width=0.9)
            ax.axhline(1 / len(counts), color="k", ls="--", lw=0.8)
            ax.set_title(f"{name}: {key.replace('_', ' ')}")
            fig.tight_layout()
            path = outdir / f"{key.split('_')[0]}_{name}.png"
            fig.savefig(path, dpi=100)
            plt.close(fig)
            written.append(path)
    return written
