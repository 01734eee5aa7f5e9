from .shap import brute_force_shap, permutation_importance, tree_shap, tree_shap_matrix
from .trees import (GbtEnsemble, GbtParams, Tree, best_split, fit_tree, gbt_fit, gbt_predict,
                    path_predict)

__all__ = ["brute_force_shap", "permutation_importance", "tree_shap", "tree_shap_matrix",
           "GbtEnsemble", "GbtParams", "Tree", "best_split", "fit_tree", "gbt_fit", "gbt_predict",
           "path_predict"]
