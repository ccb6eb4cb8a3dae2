"""Competing-risks survival models with filter, sparse-layer and permutation feature selection."""
__version__ = "0.1.0"

from .dataset import (FeatureMeta, NormalizationParams, SurvivalDataset, augment_synthetic,
                      from_arrays, generate_toy_dataset, impute, kfold_split, load_csv,
                      load_dataset, normalize, one_hot_encode, save_dataset)
from .estimator import CompetingRisksNet
from .evaluation import (CIndexGrid, CIndexResult, c_index, evaluate, hybrid_select,
                         permutation_importance, permutation_importances, results_table)
from .exceptions import (DataError, DegenerateLabelsError, NotNormalizedError, NumericalError,
                         PipelineOrderError)
from .filters import (FeatureRanking, FeatureSelection, FilterSelector, rank_features,
                      select_features, time_fixed_labels)
from .harness import ExperimentManifest, degradation_study, run_experiment
from .network import NetworkConfig
from .search import SearchSpace, random_search

__all__ = [
    "CIndexGrid", "CIndexResult", "CompetingRisksNet", "DataError", "DegenerateLabelsError",
    "ExperimentManifest", "FeatureMeta", "FeatureRanking", "FeatureSelection", "FilterSelector",
    "NetworkConfig", "NormalizationParams", "NotNormalizedError", "NumericalError",
    "PipelineOrderError", "SearchSpace", "SurvivalDataset", "augment_synthetic", "c_index",
    "degradation_study", "evaluate", "from_arrays", "generate_toy_dataset", "hybrid_select",
    "impute", "kfold_split", "load_csv", "load_dataset", "normalize", "one_hot_encode",
    "permutation_importance", "permutation_importances", "random_search", "rank_features",
    "results_table", "run_experiment", "save_dataset", "select_features", "time_fixed_labels",
]
