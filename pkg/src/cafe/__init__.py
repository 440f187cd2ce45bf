"""Covariance-aware feature alignment (CAFe) for test-time adaptation."""

from .alignment import (
    DEFAULT_EPSILON,
    AlignmentLossResult,
    GroupedSourceStats,
    TransformedStats,
    build_grouped_source_stats,
    eigendecompose_and_clip,
    feature_alignment_loss,
    grad_check_alignment,
    group_kl,
    logdet_via_cholesky,
    transform_target_stats,
)
from .errors import (
    CafeError,
    ChecksumError,
    DegenerateBatch,
    FormatError,
    InvalidInput,
    NumericalError,
    TruncatedFile,
    VersionMismatch,
)
from .formats import Dataset, load_dataset, load_model, load_stats, save_dataset, save_model, save_stats
from .grouping import (
    GroupPartition,
    correlation_adjacency,
    extract_group_stats,
    max_group_size,
    spectral_cluster,
)
from .infomax import infomax_loss
from .kernels import DEFAULT_BACKEND, available_backends
from .metrics import frechet_distance
from .model import ToyModel, backward, forward, predict_labels, pretrain_source
from .optim import MomentumState, sgd_momentum_step
from .stats import FeatureStats, compute_feature_stats
from .tta import TTAConfig, TTAReport, adapt_offline, adapt_online, precompute_source_stats

__version__ = "0.1.0"
