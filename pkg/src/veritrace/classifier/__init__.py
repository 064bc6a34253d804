"""Stacking classifier, metrics, PCA, and dataset handling."""
from .dataset import CODE_TO_LABEL, LABEL_TO_CODE, LabeledDataset, stratified_split
from .gbt import GbtConfig, GradientBoostedTrees
from .metrics import EvalReport, auc, build_report, roc_points
from .pca import pca_projection
from .stacking import (
    LrConfig,
    RfConfig,
    StackingConfig,
    TrainedModel,
    evaluate,
    load_model,
    model_file_hash,
    predict_dataset,
    predict_proba,
    save_model,
    train_stacking,
)

__all__ = [
    "CODE_TO_LABEL",
    "LABEL_TO_CODE",
    "LabeledDataset",
    "stratified_split",
    "GbtConfig",
    "GradientBoostedTrees",
    "EvalReport",
    "auc",
    "build_report",
    "roc_points",
    "pca_projection",
    "LrConfig",
    "RfConfig",
    "StackingConfig",
    "TrainedModel",
    "evaluate",
    "load_model",
    "model_file_hash",
    "predict_dataset",
    "predict_proba",
    "save_model",
    "train_stacking",
]
