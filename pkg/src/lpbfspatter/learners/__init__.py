"""Tree ensembles, boosting and KNN classifiers with model selection."""

from .inspection import feature_importance, permutation_importance
from .metrics import MetricsReport, evaluate, report, roc_auc
from .models import (ALGORITHMS, ModelError, ModelSpec, TrainedModel, fit, load_model,
                     model_from_dict, model_to_dict, predict, predict_proba, save_model)
from .selection import (DEFAULT_GRIDS, enumerate_grid, grid_search, stratified_folds,
                        write_cv_table)
from .tree import Tree, grow_tree

__all__ = [
    "ALGORITHMS", "ModelError", "ModelSpec", "TrainedModel", "fit", "predict",
    "predict_proba", "load_model", "save_model", "model_from_dict", "model_to_dict",
    "MetricsReport", "evaluate", "report", "roc_auc", "feature_importance",
    "permutation_importance", "DEFAULT_GRIDS", "enumerate_grid", "grid_search",
    "stratified_folds", "write_cv_table", "Tree", "grow_tree",
]
