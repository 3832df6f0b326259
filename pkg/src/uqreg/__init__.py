"""uqreg: joint mean/interrater-spread regression with uncertainty estimators.

Predicts the per-stimulus mean and interrater standard deviation of
subjective (valence/arousal-style) ratings and benchmarks five estimators
of the spread: seed ensembles, MC dropout, and direct prediction trained
under NLL, MSE, or KL-divergence objectives.
"""

__version__ = "0.1.0"

from .data import (
    AnnotationSet,
    DataValidationError,
    Dataset,
    EmotionTarget,
    FeatureVector,
    RatingScale,
    aggregate,
    denormalize_rating,
    load_dataset,
    normalize_rating,
    stratified_split,
)
from .network import (
    GaussianPrediction,
    NetworkParameters,
    backward,
    elu,
    forward,
    init_parameters,
    load_checkpoint,
    neg_softplus,
    save_checkpoint,
)
from .losses import LossSample, batch_loss, kld_loss, mse_loss, nll_loss
from .optimize import AdamState, TrainConfig, TrainReport, adam_step, plateau_schedule, train
from .uq import (
    EnsembleConfig,
    UncertaintyEstimate,
    direct_estimator,
    mc_dropout_pipeline,
    sample_statistics,
    seeds_pipeline,
)
from .metrics import MetricReport, evaluate, pearson, r2, spearman
from .synth import SynthConfig, generate

__all__ = [
    "AnnotationSet", "DataValidationError", "Dataset", "EmotionTarget",
    "FeatureVector", "RatingScale", "aggregate", "denormalize_rating",
    "load_dataset", "normalize_rating", "stratified_split",
    "GaussianPrediction", "NetworkParameters", "backward", "elu", "forward",
    "init_parameters", "load_checkpoint", "neg_softplus", "save_checkpoint",
    "LossSample", "batch_loss", "kld_loss", "mse_loss", "nll_loss",
    "AdamState", "TrainConfig", "TrainReport", "adam_step",
    "plateau_schedule", "train",
    "EnsembleConfig", "UncertaintyEstimate", "direct_estimator",
    "mc_dropout_pipeline", "sample_statistics", "seeds_pipeline",
    "MetricReport", "evaluate", "pearson", "r2", "spearman",
    "SynthConfig", "generate",
]
