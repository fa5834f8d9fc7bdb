"""Deep hotspot models: spatial bodies, the three architectures, training and checkpoints."""

from .architectures import Model, PerCellLSTM, build_model, build_parb, build_sftt, build_tfts
from .bodies import build_body
from .checkpoint import CheckpointError
from .checkpoint import load as load_checkpoint
from .checkpoint import save as save_checkpoint
from .config import ARCHITECTURES, BODIES, ConfigError, ModelConfig, preset
from .training import TrainingDivergence, evaluate_loss, predict, predict_batch, train

__all__ = [
    "ARCHITECTURES", "BODIES", "CheckpointError", "ConfigError", "Model", "ModelConfig", "PerCellLSTM",
    "TrainingDivergence", "build_body", "build_model", "build_parb", "build_sftt", "build_tfts",
    "evaluate_loss", "load_checkpoint", "predict", "predict_batch", "preset", "save_checkpoint", "train",
]
