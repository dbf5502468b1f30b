"""Convolutional LOS detector / beam selector and the decision-stump baseline."""
from .checkpoint import load_checkpoint, save_checkpoint
from .network import (LayerSpec, Network, NetworkSpec, build_network, default_spec,
                      predict_los, predict_topM, rank_outputs)
from .stump import StumpModel, fit_stump, min_dist_to_line, stump_error
from .train import Adadelta, TrainConfig, TrainingDivergedError, train, write_history

__all__ = [
    "Adadelta", "LayerSpec", "Network", "NetworkSpec", "StumpModel", "TrainConfig",
    "TrainingDivergedError", "build_network", "default_spec", "fit_stump", "load_checkpoint",
    "min_dist_to_line", "predict_los", "predict_topM", "rank_outputs", "save_checkpoint",
    "stump_error", "train", "write_history",
]
