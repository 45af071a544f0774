"""Support vector machine and multilayer perceptron classifiers."""

from .ann import AnnConfig, AnnModel, ann_predict, ann_train
from .grid import GridResult, grid_points, grid_search
from .model import (ClassifierSpec, TrainedModel, decode_model, encode_model, fit_classifier,
                    load_model, save_model, train_model)
from .svm import SvmConfig, SvmModel, kernel_matrix, svm_predict, svm_train

__all__ = [
    "AnnConfig", "AnnModel", "ann_predict", "ann_train", "GridResult", "grid_points",
    "grid_search", "ClassifierSpec", "TrainedModel", "decode_model", "encode_model",
    "fit_classifier", "load_model", "save_model", "train_model", "SvmConfig", "SvmModel",
    "kernel_matrix", "svm_predict", "svm_train",
]
