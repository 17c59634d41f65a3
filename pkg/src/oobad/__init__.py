"""Out-of-bag anomaly detection for mixed categorical/numerical tables."""

from .dataset import Categorical, Column, Dataset, DatasetError, Numerical, SchemaConfig, load_csv
from .evaluation import filter_top_percent, repeated_auc, roc_auc
from .forest import Forest, ForestConfig, fit_forest, oob_predictions
from .scoring import AnomalyReport, score_dataset, score_feature

__version__ = "0.1.0"

__all__ = [
    "AnomalyReport",
    "Categorical",
    "Column",
    "Dataset",
    "DatasetError",
    "Forest",
    "ForestConfig",
    "Numerical",
    "SchemaConfig",
    "filter_top_percent",
    "fit_forest",
    "load_csv",
    "oob_predictions",
    "repeated_auc",
    "roc_auc",
    "score_dataset",
    "score_feature",
]
