"""Exposure-fair recommendation: a frozen matrix-factorization backbone
plus a small trainable adapter whose corrections are optimized through a
differentiable sorting network, aligning provider exposure with a
hierarchical target while preserving ranking accuracy."""

from .adapter import AdapterParams, adapter_forward, adjust_scores, \
    init_adapter, load_adapter, save_adapter
from .autodiff import Tensor, finite_diff_check, parameter, segment_sum
from .backbone import EmbeddingTable, bpr_loss, load_table, pretrain, \
    save_table, score_all
from .data import DataBundle, load_bundle, load_interactions, \
    prepare_bundle, save_bundle
from .exposure import ProviderPartition, build_target, hard_exposure, \
    hierarchical_stats, partition_providers, position_bias, soft_exposure, \
    verify_decomposition
from .kernels import BACKEND
from .losses import LossWeights, diff_ndcg, global_kl, hierarchical_kl, \
    ndcg_hard, total_loss
from .metrics import coefficient_of_variation, entropy_bits, \
    evaluate_ranking, gini
from .sorting import CauchySmoothing, SoftPermutation, sort_hard, \
    sort_soft, soft_swap
from .trainer import TrainConfig, select_checkpoint, train_adapter

__version__ = "0.1.0"

__all__ = [
    "AdapterParams", "BACKEND", "CauchySmoothing", "DataBundle",
    "EmbeddingTable", "LossWeights", "ProviderPartition", "SoftPermutation",
    "Tensor", "TrainConfig", "adapter_forward", "adjust_scores", "bpr_loss",
    "build_target", "coefficient_of_variation", "diff_ndcg", "entropy_bits",
    "evaluate_ranking", "finite_diff_check", "gini", "global_kl",
    "hard_exposure", "hierarchical_kl", "hierarchical_stats", "init_adapter",
    "load_adapter", "load_bundle", "load_interactions", "load_table",
    "ndcg_hard", "parameter", "partition_providers", "position_bias",
    "prepare_bundle", "pretrain", "save_adapter", "save_bundle",
    "save_table", "score_all", "segment_sum", "select_checkpoint",
    "soft_exposure", "soft_swap", "sort_hard", "sort_soft", "total_loss",
    "train_adapter", "verify_decomposition",
]
