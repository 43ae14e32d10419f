"""Speech-biomarker screening toolkit.

Classical acoustic features, deep-embedding fusion classifiers trained
with explicit analytic gradients, evaluation metrics, statistical bias
testing, cohort error analysis, and seeded hyperparameter search.
"""

from .dataset import (
    FeatureMatrix,
    SampleRecord,
    Split,
    deduplicate,
    kfold_participants,
    load_feature_csv,
    load_manifest,
    split_participants,
)
from .estimators import BaselineNetClassifier, ProjectionFusionClassifier
from .metrics import EvalReport, auroc, confusion_and_rates, roc_export
from .models import ClassifierSpec, FusionSpec, LossWeights, SharedSpec
from .preprocess import PreprocessPlan, Preprocessor
from .stats import bonferroni, fisher_exact_two_sided, spearman, subgroup_bias_report
from .synth import SynthSpec, generate
from .trainer import TrainConfig, TrainHistory, reference_best_config, train

__version__ = "0.1.0"

__all__ = [
    "FeatureMatrix",
    "SampleRecord",
    "Split",
    "deduplicate",
    "kfold_participants",
    "load_feature_csv",
    "load_manifest",
    "split_participants",
    "BaselineNetClassifier",
    "ProjectionFusionClassifier",
    "EvalReport",
    "auroc",
    "confusion_and_rates",
    "roc_export",
    "ClassifierSpec",
    "FusionSpec",
    "LossWeights",
    "SharedSpec",
    "PreprocessPlan",
    "Preprocessor",
    "bonferroni",
    "fisher_exact_two_sided",
    "spearman",
    "subgroup_bias_report",
    "SynthSpec",
    "generate",
    "TrainConfig",
    "TrainHistory",
    "reference_best_config",
    "train",
    "__version__",
]
