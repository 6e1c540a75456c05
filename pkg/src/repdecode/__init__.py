"""Linear brain-decoding evaluation toolkit.

Ridge decoders from per-stimulus responses to model representations,
cosine mean-average-rank scoring, cross-model r² predictivity, and a
synthetic world generator with known ground truth.
"""

__version__ = "0.1.0"

from .matrixio import (
    ExperimentManifest,
    EvalSettings,
    LabeledMatrix,
    MatrixFormatError,
    align,
    load_manifest,
    load_matrix,
    save_manifest,
    save_matrix,
)
from .ridge import RidgeConfig, RidgeFit, fit, predict, select_alpha
from .decoder import DecoderJob, PredictionSet, run_grid, train_and_predict
from .rankeval import (
    RankReport,
    bootstrap_ci,
    cosine_distance,
    mean_average_rank,
    rank_score,
)
from .crossmodel import PredictivityMatrix, pairwise_predictivity, r2_multioutput
from .synth import WorldSpec, WorldTruth, expected_outcome, generate

__all__ = [
    "DecoderJob",
    "EvalSettings",
    "ExperimentManifest",
    "LabeledMatrix",
    "MatrixFormatError",
    "PredictionSet",
    "PredictivityMatrix",
    "RankReport",
    "RidgeConfig",
    "RidgeFit",
    "WorldSpec",
    "WorldTruth",
    "align",
    "bootstrap_ci",
    "cosine_distance",
    "expected_outcome",
    "fit",
    "generate",
    "load_manifest",
    "load_matrix",
    "mean_average_rank",
    "pairwise_predictivity",
    "predict",
    "r2_multioutput",
    "rank_score",
    "run_grid",
    "save_manifest",
    "save_matrix",
    "select_alpha",
    "train_and_predict",
]
