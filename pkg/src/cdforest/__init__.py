"""Random-forest estimation of conditional distribution functions and quantiles."""

__version__ = "0.1.0"

from .dataset import Dataset, DatasetError, load_csv, save_csv, validate
from .forest import (
    Forest,
    ForestError,
    ForestHyperparameters,
    WeightedEcdf,
    cdf_at,
    conditional_cdf,
    default_min_samples_leaf,
    fit,
    predict_mean,
    quantile,
    weights_bootstrap,
    weights_original,
)
from .model_io import CorruptModelError, ModelVersionError, load_model, save_model
from .tree import Split, Tree, best_split, draw_bootstrap, grow_tree, leaf_for

__all__ = [
    "CorruptModelError",
    "Dataset",
    "DatasetError",
    "Forest",
    "ForestError",
    "ForestHyperparameters",
    "ModelVersionError",
    "Split",
    "Tree",
    "WeightedEcdf",
    "best_split",
    "cdf_at",
    "conditional_cdf",
    "default_min_samples_leaf",
    "draw_bootstrap",
    "fit",
    "grow_tree",
    "leaf_for",
    "load_csv",
    "load_model",
    "predict_mean",
    "quantile",
    "save_csv",
    "save_model",
    "validate",
    "weights_bootstrap",
    "weights_original",
]
