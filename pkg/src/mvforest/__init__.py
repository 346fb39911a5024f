"""Univariate, multivariate and multi-task tree ensembles for multi-output regression."""

from .ensemble import EnsembleConfig, FittedEnsemble, fit, predict
from .evaluation import MethodConfig, cross_validate, kfold, mse_metrics
from .multitask import MultiTaskConfig, fit_multitask, predict_multitask
from .tree import (Dataset, GrowConfig, SplitCandidate, Tree, best_split_exhaustive,
                   best_split_random, grow_tree, node_impurity, predict_tree)

__all__ = [
    "Dataset", "GrowConfig", "SplitCandidate", "Tree", "node_impurity",
    "best_split_exhaustive", "best_split_random", "grow_tree", "predict_tree",
    "EnsembleConfig", "FittedEnsemble", "fit", "predict",
    "MultiTaskConfig", "fit_multitask", "predict_multitask",
    "MethodConfig", "cross_validate", "kfold", "mse_metrics",
]
