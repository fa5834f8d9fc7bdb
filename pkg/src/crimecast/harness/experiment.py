"""End-to-end experiment: data -> grid -> split -> fit each method -> score 12 monthly anchors."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .. import baselines
from ..grid import GridSpec, aggregate, samples_at, split_train_test, study_area
from ..ingest import (
    CrimeType, DataError, SynthConfig, Taxonomy, default_synth_config, generate_synthetic, parse_incidents,
)
from ..metrics import METRIC_NAMES, ScoredCells, evaluate
from ..models import build_model, predict_batch, train
from ..models.config import ARCHITECTURES, ConfigError
from .config import ExperimentConfig

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    """Failure inside one stage of an experiment; ``cause`` keeps the original exception."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def is_deep(method):
    return method.split("/")[0] in ARCHITECTURES


def result_key(method, p, crime_type):
    return f"{method.replace('/', '-')}_p{p}_{CrimeType(crime_type).label}"


@dataclass
class MethodResult:
    method: str
    p: int
    crime_type: str
    anchors: list
    metrics: list  # one {metric: value} dict per anchor
    means: dict
    history: list = field(default_factory=list)

    @property
    def key(self):
        return result_key(self.method, self.p, CrimeType.parse(self.crime_type))

    def to_dict(self):
        return {"method": self.method, "p": self.p, "crime_type": self.crime_type, "anchors": list(self.anchors),
                "metrics": self.metrics, "means": self.means, "history": self.history}

    @classmethod
    def from_dict(cls, d):
        return cls(d["method"], d["p"], d["crime_type"], d["anchors"], d["metrics"], d["means"], d.get("history", []))


@dataclass
class EvalReport:
    config: dict
    config_digest: str
    results: list
    predictions: dict  # result key -> list of per-anchor prediction dicts
    timings: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict, repr=False, compare=False)  # not serialised
    masks: dict = field(default_factory=dict, repr=False, compare=False)

    def result(self, method, p=None, crime_type=None):
        for r in self.results:
            if r.method == method and (p is None or r.p == p) and (crime_type is None or r.crime_type == crime_type):
                return r
        raise KeyError(f"no result for {method!r} p={p} type={crime_type}")

    def to_dict(self, with_timings=True):
        d = {"config": self.config, "config_digest": self.config_digest,
             "results": [r.to_dict() for r in self.results]}
        if with_timings:
            d["timings"] = self.timings
        return d

    def digest(self):
        """Hash of everything except wall-clock timings."""
        blob = json.dumps({"report": self.to_dict(with_timings=False), "predictions": self.predictions},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def mean_metrics(per_anchor):
    """Arithmetic mean over anchors, skipping anchors where a metric is undefined."""
    out = {}
    for name in METRIC_NAMES:
        vals = [m[name] for m in per_anchor if not np.isnan(m[name])]
        out[name] = float(sum(vals) / len(vals)) if vals else float("nan")
    return out


def metrics_from_prediction(pred):
    scored = ScoredCells(pred["score"], (np.asarray(pred["future_count"]) >= 1).astype(int), pred["future_count"],
                         pred["rows"], pred["cols"])
    rank = pred.get("rank_score")
    return scored, evaluate(scored, rank_score=rank)


# --- stages -----------------------------------------------------------------------

def load_incidents(config: ExperimentConfig):
    if config.source == "csv":
        taxonomy = Taxonomy.load(config.taxonomy_path) if config.taxonomy_path else None
        incidents, report = parse_incidents(config.csv_path, config.columns, taxonomy)
        if not incidents:
            raise DataError(f"no usable rows in {config.csv_path} ({report.dropped} dropped)")
        return incidents, None
    synth = default_synth_config(seed=config.seed if config.synth_seed is None else config.synth_seed,
                                 days=config.synth_days)
    return generate_synthetic(synth), synth


@dataclass
class Prepared:
    p: int
    stack: object
    mask: np.ndarray
    train: list
    baseline_train: list
    test: list


def prepare(config: ExperimentConfig, incidents, synth: SynthConfig | None, p):
    if synth is not None:
        spec = GridSpec.from_bbox(synth.bbox, p)
        start, days = synth.start, synth.days
    else:
        spec = GridSpec.covering(incidents, p)
        start = incidents[0].timestamp.date()
        days = (incidents[-1].timestamp.date() - start).days + 1
    stack = aggregate(incidents, spec, start, days)
    mask = study_area(stack)
    if not mask.any():
        raise DataError("study area is empty")
    kw = dict(input_days=config.input_days, horizon_days=config.horizon_days)
    split = split_train_test(stack, **kw)
    target = config.target_type
    train_anchors = split.train_anchors[::config.train_stride]
    base_anchors = split.train_anchors[::config.baseline_stride]
    return Prepared(
        p, stack, mask,
        samples_at(stack, train_anchors, target, **kw),
        samples_at(stack, base_anchors, target, **kw),
        samples_at(stack, split.test_anchors, target, **kw),
    )


def fit_deep(config, prep, method):
    model = build_model(config.model_config(method, prep.p))
    return train(model, prep.train, prep.mask)


def _prediction(rows, cols, score, rank, counts, anchor):
    return {"anchor": int(anchor), "rows": rows.tolist(), "cols": cols.tolist(),
            "score": [float(v) for v in score], "rank_score": None if rank is None else [float(v) for v in rank],
            "future_count": [int(v) for v in counts]}


def score_deep(config, prep, method, model):
    probs, counts = predict_batch(model, prep.test, prep.mask)
    rows, cols = np.nonzero(prep.mask)
    out = {}
    for ctype in config.scored_types():
        preds = []
        for s, prob, cnt in zip(prep.test, probs, counts):
            future = s.target_counts if not config.multi_label else s.target_counts[..., int(ctype)]
            if config.multi_label:
                prob, cnt = prob[..., int(ctype)], cnt[..., int(ctype)]
            preds.append(_prediction(rows, cols, prob[rows, cols], cnt[rows, cols], future[rows, cols], s.anchor))
        out[ctype] = preds
    return out


def fit_score_baseline(config, prep, method):
    out = {}
    for ctype in config.scored_types():
        channel = ctype if config.multi_label else None
        X, y = baselines.stack_features(prep.baseline_train, prep.mask, channel)
        clf = baselines.BASELINES[method](config.seed).fit(X, y)
        preds = []
        for s in prep.test:
            f = baselines.featurize(s, prep.mask, channel)
            preds.append(_prediction(f.rows, f.cols, clf.predict_proba(f.X), None, f.counts, s.anchor))
        out[ctype] = preds
    return out


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except (ExperimentError, KeyboardInterrupt):
        raise
    except Exception as exc:  # tag and re-raise; the CLI maps the cause to an exit code
        raise ExperimentError(name, exc) from exc


def run_experiment(config: ExperimentConfig, trained=None) -> EvalReport:
    """Run every selected method at every resolution.

    ``trained`` optionally maps ``(method, p)`` to an already-fitted deep model
    (used by the ``evaluate`` subcommand); other deep methods are trained here.
    """
    trained = trained or {}
    timings = {}
    t0 = time.perf_counter()
    incidents, synth = _stage("data", load_incidents, config)
    timings["data"] = time.perf_counter() - t0
    results, predictions, models, masks = [], {}, {}, {}
    for p in config.resolutions:
        t0 = time.perf_counter()
        prep = _stage("grid", prepare, config, incidents, synth, p)
        timings[f"grid_p{p}"] = time.perf_counter() - t0
        masks[p] = prep.mask
        for method in config.methods:
            t0 = time.perf_counter()
            history = []
            if is_deep(method):
                model = trained.get((method, p))
                if model is None:
                    log.info("training %s at p=%d on %d samples", method, p, len(prep.train))
                    model = _stage("train", fit_deep, config, prep, method)
                models[(method, p)] = model
                history = [{k: int(v) if k == "epoch" else float(v) for k, v in h.items()} for h in model.history]
                preds = _stage("evaluate", score_deep, config, prep, method, model)
            else:
                preds = _stage("baseline", fit_score_baseline, config, prep, method)
            timings[f"{method}_p{p}"] = time.perf_counter() - t0
            for ctype, plist in preds.items():
                per_anchor = [metrics_from_prediction(pr)[1] for pr in plist]
                res = MethodResult(method, p, CrimeType(ctype).label, [pr["anchor"] for pr in plist], per_anchor,
                                   mean_metrics(per_anchor), history)
                results.append(res)
                predictions[res.key] = plist
    return EvalReport(config.to_dict(), config.digest(), results, predictions, timings, models, masks)


def rederive(report: EvalReport):
    """Recompute every per-anchor metric from the persisted predictions."""
    out = {}
    for res in report.results:
        out[res.key] = [metrics_from_prediction(pr)[1] for pr in report.predictions[res.key]]
    return out


__all__ = ["EvalReport", "ExperimentError", "MethodResult", "ConfigError", "rederive", "run_experiment"]
