"""Writing and reading experiment outputs.

``emit_report`` produces::

    report.json        config, digests, per-anchor metrics, means, histories, timings
    predictions.json   per-anchor cell scores and true counts (metrics re-derivable)
    summary.csv        one row per method x resolution x crime type with the 12-anchor means
    curves/*.csv       ROC and PR curves per result and anchor
"""

import csv
import json
from pathlib import Path

import numpy as np

from ..metrics import METRIC_NAMES, MetricError, ScoredCells, pr_auc, rank_cells, roc_auc
from .experiment import EvalReport, MethodResult, metrics_from_prediction


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def write_summary(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "p", "crime_type", *METRIC_NAMES])
        for r in report.results:
            w.writerow([r.method, r.p, r.crime_type, *(_fmt(r.means[m]) for m in METRIC_NAMES)])


def write_curves(report, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for r in report.results:
        for pred in report.predictions[r.key]:
            scored, _ = metrics_from_prediction(pred)
            for kind, fn in (("roc", roc_auc), ("pr", pr_auc)):
                try:
                    curve, _ = fn(scored)
                except MetricError:
                    continue
                path = directory / f"{r.key}_a{pred['anchor']}_{kind}.csv"
                curve.to_csv(path)
                written.append(path)
    return written


def emit_report(report: EvalReport, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    body = report.to_dict()
    body["digest"] = report.digest()
    (directory / "report.json").write_text(json.dumps(body, indent=1, sort_keys=True), encoding="utf-8")
    (directory / "predictions.json").write_text(json.dumps(report.predictions, sort_keys=True), encoding="utf-8")
    write_summary(report, directory / "summary.csv")
    write_curves(report, directory / "curves")
    return directory


def load_report(directory):
    directory = Path(directory)
    body = json.loads((directory / "report.json").read_text(encoding="utf-8"))
    preds = json.loads((directory / "predictions.json").read_text(encoding="utf-8"))
    return EvalReport(body["config"], body["config_digest"], [MethodResult.from_dict(d) for d in body["results"]],
                      preds, body.get("timings", {}))


def emit_heatmap(probabilities, mask, path, counts=None):
    """Probability grid CSV (row 0 = north, masked-out cells left empty) plus
    ``<stem>_ranked.csv`` listing masked-in cells in PAI ranking order."""
    probabilities = np.asarray(probabilities, dtype=float)
    mask = np.asarray(mask, bool)
    if probabilities.shape != mask.shape:
        raise ValueError(f"probabilities {probabilities.shape} and mask {mask.shape} differ")
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in range(mask.shape[0]):
            w.writerow([repr(float(probabilities[r, c])) if mask[r, c] else "" for c in range(mask.shape[1])])
    counts = np.zeros(mask.shape, np.int64) if counts is None else np.asarray(counts)
    scored = ScoredCells.from_grids(probabilities, counts, mask)
    ranked_path = path.with_name(path.stem + "_ranked.csv")
    with open(ranked_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "row", "col", "score", "count"])
        for rank, i in enumerate(rank_cells(scored), 1):
            w.writerow([rank, scored.rows[i], scored.cols[i], repr(float(scored.score[i])), scored.future_count[i]])
    return path, ranked_path


def emit_heatmaps(report, directory):
    """One heatmap per result, for its first test anchor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for r in report.results:
        pred = report.predictions[r.key][0]
        p = r.p
        grid = np.zeros((p, p))
        counts = np.zeros((p, p), np.int64)
        mask = np.zeros((p, p), bool)
        rows, cols = np.asarray(pred["rows"], int), np.asarray(pred["cols"], int)
        grid[rows, cols] = pred["score"]
        counts[rows, cols] = pred["future_count"]
        mask[rows, cols] = True
        out.append(emit_heatmap(grid, mask, directory / f"{r.key}_a{pred['anchor']}.csv", counts))
    return out
