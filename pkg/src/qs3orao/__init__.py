"""Semi-supervised ordinal regression by stochastic AUC optimization with random Fourier features."""
__version__ = "0.1.0"

from .data import OrdinalDataset, SemiSupervisedSplit, load_dataset, make_semi_split
from .features import FeatureStream, KernelSpec
from .model import RankModel, load_model, predict_labels, predict_scores, save_model
from .thresholds import Thresholds, fit_thresholds, predict_label
from .trainer import TrainConfig, Trainer, train

__all__ = [
    "OrdinalDataset", "SemiSupervisedSplit", "load_dataset", "make_semi_split",
    "FeatureStream", "KernelSpec",
    "RankModel", "load_model", "predict_labels", "predict_scores", "save_model",
    "Thresholds", "fit_thresholds", "predict_label",
    "TrainConfig", "Trainer", "train",
]
