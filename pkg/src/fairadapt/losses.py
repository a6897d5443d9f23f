"""Training objectives: exposure-KL fairness terms and a smoothed NDCG
surrogate, combined into the adapter's total loss.

All terms are built from autodiff Tensors so one backward pass yields
gradients with respect to the adjusted scores (and through them the
adapter parameters).
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .exposure import ExposureState, position_bias


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the total loss."""

    lambda_inter: float = 1.0
    lambda_intra: float = 1.0
    lambda_acc: float = 1e-4


def global_kl(state: ExposureState) -> Tensor:
    """KL(p || t) over providers, natural log."""
    return (state.p * (state.p.log() - np.log(state.t))).sum()


def hierarchical_kl(state: ExposureState, weights: LossWeights) -> Tensor:
    """lambda_inter * KL(pG || tG) + lambda_intra * mass-weighted
    within-tier KL, in the flat representation
    sum_s p_s (log p_within_s - log t_within_s)."""
    inter = (state.p_group
             * (state.p_group.log() - np.log(state.t_group))).sum()
    intra = (state.p * (state.p_within.log() - np.log(state.t_within))).sum()
    return weights.lambda_inter * inter + weights.lambda_intra * intra


def dcg_discounts(k):
    """1/log2(1+rank) for ranks 1..k (identical to the position bias)."""
    return position_bias(k)


def ndcg_hard(ranked, relevance, k):
    """NDCG@k of a ranked item list against per-item gains.

    `ranked` holds item indices in rank order; gains are 2^rel - 1. Returns
    None when the ideal DCG is zero (no relevant item), so callers can skip
    the user rather than divide by zero.
    """
    relevance = np.asarray(relevance, dtype=np.float64)
    k = min(k, len(ranked))
    disc = dcg_discounts(k)
    gains = np.exp2(relevance) - 1.0
    ideal = np.sort(gains)[::-1][:k]
    idcg = float(ideal @ disc[:len(ideal)])
    if idcg == 0.0:
        return None
    dcg = float(gains[np.asarray(ranked)[:k]] @ disc)
    return dcg / idcg


def ideal_dcg(relevance, k):
    """DCG@k of the best possible ordering of `relevance` (rows)."""
    relevance = np.asarray(relevance, dtype=np.float64)
    if relevance.ndim == 1:
        relevance = relevance[None, :]
    kk = min(k, relevance.shape[1])
    gains = np.exp2(relevance) - 1.0
    ideal = -np.sort(-gains, axis=1)[:, :kk]
    return ideal @ dcg_discounts(kk)


def diff_ndcg(perm, relevance, k):
    """Smoothed NDCG@k of one SoftPermutation: rank-k soft relevance is
    sum_v P[v, k] rel_v.  Returns None when the ideal DCG is zero."""
    relevance = np.asarray(relevance, dtype=np.float64)
    idcg = float(ideal_dcg(relevance, k)[0])
    if idcg == 0.0:
        return None
    kk = min(k, perm.top_k)
    soft_rel = perm.probs[:, :kk].T @ relevance
    return float((np.exp2(soft_rel) - 1.0) @ dcg_discounts(kk)) / idcg


def diff_ndcg_loss(soft_relevance: Tensor, relevance, k) -> Tensor:
    """mean_u (1 - smoothed NDCG@k) from batched soft relevances.

    `soft_relevance` is the (batch, n) tensor of per-rank soft relevances;
    `relevance` the hard gains used for the ideal DCG.  Rows with zero
    ideal DCG contribute a constant 1 (their gradient is zero), matching
    the convention that such users carry no accuracy signal.
    """
    idcg = ideal_dcg(relevance, k)
    live = idcg > 0.0
    if not np.any(live):
        return Tensor(np.array(0.0)) + 1.0
    kk = min(k, soft_relevance.shape[1])
    gains = soft_relevance[:, :kk].exp2() - 1.0
    dcg = gains @ dcg_discounts(kk)
    ndcg = dcg * np.where(live, 1.0 / np.where(live, idcg, 1.0), 0.0)
    return 1.0 - ndcg.sum() / float(soft_relevance.shape[0])


def total_loss(fairness: Tensor, accuracy: Tensor,
               weights: LossWeights) -> Tensor:
    """fairness + lambda_acc * accuracy."""
    return fairness + weights.lambda_acc * accuracy
