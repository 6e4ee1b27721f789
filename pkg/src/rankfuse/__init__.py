"""Rank-aware cross-modal retrieval: losses, metrics, training, ensembling."""

__version__ = "0.1.0"

from .dataio import (
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    load_annotations,
    load_checkpoint,
    load_dataset,
    load_features,
    load_similarity,
    save_annotations,
    save_checkpoint,
    save_dataset,
    save_features,
    save_similarity,
    subset_split,
)
from .ensemble import mean_similarity
from .errors import (
    BadMagicError,
    DataError,
    FileFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .matrices import SimilarityMatrix
from .metrics import MetricsReport, average_precision, dcg, evaluate, ndcg
from .model import (
    AdamConfig,
    AdamState,
    TwoTowerModel,
    adam_step,
    encode,
    init_model,
    similarity,
)
from .neuralsort import (
    NdcgLossConfig,
    SoftPermutation,
    neural_ndcg,
    neural_ndcg_batch_loss,
    sinkhorn_scale,
    soft_permutation,
)
from .relevance import CaptionAnnotation, RelevanceMatrix, pair_relevance, relevance_matrix
from .trainer import EpochRecord, TrainConfig, TrainHistory, model_gradients, train
from .triplet import (
    AugmentConfig,
    FeatureBatch,
    TripletConfig,
    augment_features,
    mine_negative,
    partition_by_relevance,
    sample_augmented_batch,
    triplet_ranp_loss,
)

__all__ = [
    "AdamConfig",
    "AdamState",
    "AugmentConfig",
    "BadMagicError",
    "CaptionAnnotation",
    "DataError",
    "Dataset",
    "EpochRecord",
    "FeatureBatch",
    "FileFormatError",
    "MetricsReport",
    "NdcgLossConfig",
    "RelevanceMatrix",
    "SimilarityMatrix",
    "SoftPermutation",
    "SyntheticSpec",
    "TrainConfig",
    "TrainHistory",
    "TripletConfig",
    "TruncatedFileError",
    "TwoTowerModel",
    "VersionMismatchError",
    "adam_step",
    "augment_features",
    "average_precision",
    "dcg",
    "encode",
    "evaluate",
    "generate_synthetic",
    "init_model",
    "load_annotations",
    "load_checkpoint",
    "load_dataset",
    "load_features",
    "load_similarity",
    "mean_similarity",
    "mine_negative",
    "model_gradients",
    "ndcg",
    "neural_ndcg",
    "neural_ndcg_batch_loss",
    "pair_relevance",
    "partition_by_relevance",
    "relevance_matrix",
    "sample_augmented_batch",
    "save_annotations",
    "save_checkpoint",
    "save_dataset",
    "save_features",
    "save_similarity",
    "similarity",
    "sinkhorn_scale",
    "soft_permutation",
    "subset_split",
    "train",
    "triplet_ranp_loss",
]
