from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from ..ingest import N_CHANNELS

ARCHITECTURES = ("sftt", "tfts", "parb")
BODIES = ("vgg", "resnet", "fastmask", "fastresmask")

# full-width body filter counts per stage
BODY_WIDTHS = {
    "vgg": (32, 64, 256),  # pairs 1-2, pairs 3-4, pair 5
    "resnet": (32, 64, 128),  # last conv / residual width per block
    "fastmask": (32, 64, 128),  # conv-path width per neck
    "fastresmask": (32, 64, 128),
}
PRESET_SCALE = {"paper": 1.0, "small": 0.25}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "sftt"
    body: str = "vgg"
    p: int = 16
    input_days: int = 30
    channels: int = N_CHANNELS
    width_scale: float = 1.0
    body_widths: tuple | None = None  # overrides BODY_WIDTHS * width_scale
    lstm_head: tuple | None = None  # overrides the per-architecture default
    dropout: float = 0.3
    batchnorm: bool = True
    multi_label: bool = False
    count_loss_weight: float = 1.0
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        if self.body not in BODIES:
            raise ConfigError(f"unknown body {self.body!r}; expected one of {BODIES}")
        if self.p < 8:
            raise ConfigError("grid side p must be >= 8 so three 2x2 poolings leave at least 1x1")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.count_loss_weight < 0:
            raise ConfigError("count_loss_weight must be >= 0")
        if self.epochs < 0 or self.batch_size < 1 or self.input_days < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and input_days >= 1 required")
        for name in ("body_widths", "lstm_head"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(int(v) for v in val))

    def scaled(self, width):
        return max(1, int(round(width * self.width_scale)))

    @property
    def resolved_body_widths(self):
        if self.body_widths is not None:
            return self.body_widths
        return tuple(self.scaled(w) for w in BODY_WIDTHS[self.body])

    @property
    def resolved_lstm_head(self):
        if self.lstm_head is not None:
            return self.lstm_head
        if self.architecture == "sftt":
            return (self.scaled(500), self.scaled(500), self.scaled(self.p * self.p))
        return (self.scaled(32),) * 3

    @property
    def n_classes(self):
        return self.channels if self.multi_label else 1

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def preset(name, **overrides):
    """``paper`` = full widths; ``small`` quarters every filter and hidden width;
    ``tiny`` is the gradient-check configuration (p=8, 3 input days, 4 filters)."""
    if name == "tiny":
        base = dict(p=8, input_days=3, body_widths=(4, 4, 4), lstm_head=(5, 5, 6), dropout=0.0,
                    epochs=1, batch_size=2)
        base.update(overrides)
        return ModelConfig(**base)
    if name not in PRESET_SCALE:
        raise ConfigError(f"unknown preset {name!r}")
    return ModelConfig(width_scale=PRESET_SCALE[name], **overrides)
