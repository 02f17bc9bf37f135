"""Base classifiers and the stacked ensemble."""
from .linear import LinearModel, fit_lasso, fit_logistic
from .preprocess import Preprocessor
from .stacking import (
    LEARNERS, BaseModels, FoldError, Hyperparameters, SchemaError, TrainedEnsemble, classify,
    fit_super_learner, stack_weights,
)
from .svm import CalibratedSVM, fit_svm, train_linear_svm
from .trees import TreeEnsemble, fit_bagged_trees, fit_random_forest, fit_tree

__all__ = [
    "LEARNERS", "BaseModels", "CalibratedSVM", "FoldError", "Hyperparameters", "LinearModel",
    "Preprocessor", "SchemaError", "TrainedEnsemble", "TreeEnsemble", "classify", "fit_bagged_trees",
    "fit_lasso", "fit_logistic", "fit_random_forest", "fit_super_learner", "fit_svm", "fit_tree",
    "stack_weights", "train_linear_svm",
]
