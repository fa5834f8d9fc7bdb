"""Experiment configuration from flat ``key=value`` files.

Lines are ``dotted.key = value``; ``#`` starts a comment. Lists are comma
separated. Unknown keys are rejected so typos do not silently fall back to
defaults. Example::

    seed = 7
    data.source = synthetic
    grid.p = 16
    target = AllCrimes
    methods = sftt, knn
    model.preset = small
    model.epochs = 10
    train.stride = 5
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from ..ingest import ColumnSpec, CrimeType
from ..models.config import ARCHITECTURES, BODIES, ConfigError, preset

BASELINE_METHODS = ("knn", "gnb", "tree", "forest", "mlp1", "mlp4")
ALLOWED_P = (8, 16, 24, 32, 40, 48, 56, 64)


def parse_kv(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _split(value):
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _bool(value):
    low = value.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    source: str = "synthetic"  # "synthetic" or "csv"
    csv_path: str | None = None
    columns: ColumnSpec = ColumnSpec()
    taxonomy_path: str | None = None
    synth_seed: int | None = None  # defaults to ``seed``
    synth_days: int = 4 * 365
    resolutions: tuple = (16,)
    target: str = "AllCrimes"  # a CrimeType label, or "multi"
    eval_types: tuple = ("AllCrimes",)  # channels scored for multi-label runs
    methods: tuple = ("sftt", "knn")
    model_preset: str = "small"
    body: str = "vgg"
    model_overrides: tuple = ()  # ((field, value), ...) applied on top of the preset
    train_stride: int = 1
    baseline_stride: int = 30
    input_days: int = 30
    horizon_days: int = 30
    heatmaps: bool = True
    out: str | None = None

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {self.source!r}")
        if (self.source == "csv") != (self.csv_path is not None):
            raise ConfigError("exactly one data source: set data.path only with data.source=csv")
        for p in self.resolutions:
            if p not in ALLOWED_P:
                raise ConfigError(f"grid.p={p} not in the allowed set {ALLOWED_P}")
        if not self.resolutions:
            raise ConfigError("grid.p must list at least one resolution")
        if not self.methods:
            raise ConfigError("methods must not be empty")
        for m in self.methods:
            arch = m.split("/")[0]
            if arch not in ARCHITECTURES and m not in BASELINE_METHODS:
                raise ConfigError(f"unknown method {m!r}")
            if "/" in m and m.split("/", 1)[1] not in BODIES:
                raise ConfigError(f"unknown body in method {m!r}")
        for t in ((self.target,) if self.target != "multi" else ()) + tuple(self.eval_types):
            try:
                CrimeType.parse(t)
            except KeyError as exc:
                raise ConfigError(str(exc)) from None
        if self.train_stride < 1 or self.baseline_stride < 1:
            raise ConfigError("strides must be >= 1")
        self.model_config("sftt", self.resolutions[0])  # validates overrides early

    @property
    def multi_label(self):
        return self.target == "multi"

    @property
    def target_type(self):
        return None if self.multi_label else CrimeType.parse(self.target)

    def scored_types(self):
        """Channels whose hotspots are evaluated."""
        if self.multi_label:
            return tuple(CrimeType.parse(t) for t in self.eval_types)
        return (self.target_type,)

    def model_config(self, method, p):
        arch, _, body = method.partition("/")
        overrides = dict(self.model_overrides)
        overrides.update(architecture=arch, body=body or self.body, p=p, input_days=self.input_days,
                         multi_label=self.multi_label, seed=self.seed)
        try:
            return preset(self.model_preset, **overrides)
        except TypeError as exc:
            raise ConfigError(f"bad model override: {exc}") from None

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["out"] = None  # where results go does not change them
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_MODEL_KEYS = {
    "epochs": int, "batch_size": int, "learning_rate": float, "dropout": float,
    "count_loss_weight": float, "batchnorm": _bool, "width_scale": float,
    "body_widths": lambda v: tuple(int(x) for x in _split(v)),
    "lstm_head": lambda v: tuple(int(x) for x in _split(v)),
}


def config_from_mapping(kv, seed=None):
    kv = dict(kv)
    kw = {}
    columns = {}
    overrides = []

    def take(key, conv=str):
        if key in kv:
            try:
                return conv(kv.pop(key))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return None

    seed_val = take("seed", int)
    if seed is not None:
        seed_val = seed
    if seed_val is None:
        raise ConfigError("seed is mandatory (config key 'seed' or --seed)")
    kw["seed"] = seed_val
    simple = {
        "data.source": ("source", str), "data.path": ("csv_path", str), "data.taxonomy": ("taxonomy_path", str),
        "synth.seed": ("synth_seed", int), "synth.days": ("synth_days", int),
        "grid.p": ("resolutions", lambda v: tuple(int(x) for x in _split(v))),
        "target": ("target", str), "eval.types": ("eval_types", _split), "methods": ("methods", _split),
        "model.preset": ("model_preset", str), "model.body": ("body", str),
        "train.stride": ("train_stride", int), "baseline.stride": ("baseline_stride", int),
        "window.input_days": ("input_days", int), "window.horizon_days": ("horizon_days", int),
        "output.heatmaps": ("heatmaps", _bool), "output.dir": ("out", str),
    }
    for key, (name, conv) in simple.items():
        val = take(key, conv)
        if val is not None:
            kw[name] = val
    for col in ("timestamp", "lat", "lon", "category", "time_format"):
        val = take(f"data.columns.{col}")
        if val is not None:
            columns[col] = val
    if columns:
        kw["columns"] = ColumnSpec(**columns)
    for name, conv in _MODEL_KEYS.items():
        val = take(f"model.{name}", conv)
        if val is not None:
            overrides.append((name, val))
    kw["model_overrides"] = tuple(overrides)
    if kv:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(kv))}")
    return ExperimentConfig(**kw)


def load_config(path, seed=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_mapping(parse_kv(text), seed=seed)
