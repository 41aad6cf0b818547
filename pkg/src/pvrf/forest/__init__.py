from .ensemble import (
    ForestModel,
    ForestParams,
    cv_folds,
    default_mtry,
    default_mtry_grid,
    fit_forest,
    predict_rmst,
    tune_mtry,
)
from .splits import Split, cart_best_split, cart_split_score, cond_best_split, cond_select_variable
from .tree import Tree, fit_tree

__all__ = [
    "ForestModel", "ForestParams", "Split", "Tree", "cart_best_split", "cart_split_score",
    "cond_best_split", "cond_select_variable", "cv_folds", "default_mtry", "default_mtry_grid",
    "fit_forest", "fit_tree", "predict_rmst", "tune_mtry",
]
