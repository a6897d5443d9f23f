"""Differentiable sorting via a smoothed odd-even transposition network.

The hard compare-and-swap is replaced by a convex interpolation whose
weight comes from a Cauchy CDF; composing the n layers yields a doubly
stochastic matrix of position probabilities (rank 0 = highest score).
`sort_hard` provides the discrete counterpart used for evaluation and as
an oracle for the smoothed path.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor


@dataclass(frozen=True)
class CauchySmoothing:
    """Smoothed step function H(x) = arctan(beta x) / pi + 1/2.

    H(0) = 0.5, H(-x) = 1 - H(x), strictly increasing with range (0, 1).
    Larger beta approaches the hard step.
    """

    beta: float = 10.0

    def __call__(self, x):
        return np.arctan(self.beta * np.asarray(x, dtype=np.float64)) / np.pi + 0.5

    def derivative(self, x):
        bx = self.beta * np.asarray(x, dtype=np.float64)
        return self.beta / (np.pi * (1.0 + bx * bx))


@dataclass
class SoftPermutation:
    """Position probabilities for one score vector.

    `probs[v, k]` is the probability that item v occupies rank k, truncated
    to the first `top_k` ranks; `full` keeps the untruncated n-by-n matrix
    and `smoothed` the network's smoothed descending scores.
    """

    probs: np.ndarray
    smoothed: np.ndarray
    full: np.ndarray

    @property
    def n(self):
        return self.full.shape[0]

    @property
    def top_k(self):
        return self.probs.shape[1]


def soft_swap(a, b, smoothing):
    """Smoothed compare-and-swap of a score pair.

    Returns `(a', b', alpha)` with `alpha = H(b - a)`; the pair sum is
    preserved exactly because the mix is convex with complementary weights.
    """
    alpha = float(smoothing(b - a))
    return (1.0 - alpha) * a + alpha * b, alpha * a + (1.0 - alpha) * b, alpha


def sort_soft(scores, smoothing, top_k=None):
    """Run the full sorting network on one score vector.

    `top_k` truncates the returned probability columns (default: all n
    ranks).  Cost is O(n^3); training uses `rank_contractions` instead.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    top_k = n if top_k is None else min(top_k, n)
    perm, smoothed = kernels.soft_permutation(scores[None, :], smoothing.beta)
    return SoftPermutation(perm[0, :, :top_k].copy(), smoothed[0], perm[0])


def sort_soft_batch(scores, smoothing, top_k=None):
    """`sort_soft` over a (batch, n) score matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[1]
    top_k = n if top_k is None else min(top_k, n)
    perm, smoothed = kernels.soft_permutation(scores, smoothing.beta)
    return [SoftPermutation(perm[b, :, :top_k].copy(), smoothed[b], perm[b])
            for b in range(scores.shape[0])]


def sort_hard(scores):
    """Stable descending sort; ties broken by item index ascending.

    Returns `(order, ranks)`: `order[k]` is the item at rank k and
    `ranks[v]` the rank of item v (0-based).
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    order = np.lexsort((np.arange(n), -scores))
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    return order, ranks


def hard_permutation(scores):
    """0/1 position matrix of the hard descending sort."""
    order, ranks = sort_hard(scores)
    n = scores.shape[0]
    perm = np.zeros((n, n))
    perm[np.arange(n), ranks] = 1.0
    return perm


def rank_contractions(scores, relevance, bias, beta):
    """Differentiable positionwise contractions of the soft permutation.

    For a (batch, n) score tensor returns two tensors of the same shape:
    `w[b, v] = sum_k P_b[v, k] bias[k]` (the position-bias weight earned by
    item v) and `rhat[b, k] = sum_v P_b[v, k] relevance[b, v]` (the soft
    relevance at rank k).  These are the only functionals of the soft
    permutation the losses consume, so the O(n^3) matrix is never built;
    the backward pass is the hand-derived adjoint of the layer sweeps and
    is validated against finite differences.
    """
    data = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    if data.ndim != 2:
        raise ValueError("rank_contractions expects (batch, n) scores")
    n = data.shape[1]
    relevance = np.asarray(relevance, dtype=np.float64)
    bias_full = np.zeros(n)
    bias_full[:min(len(bias), n)] = np.asarray(bias)[:n]
    w, rhat, ctx = kernels.fused_forward(data, beta, relevance, bias_full)

    if not (isinstance(scores, Tensor) and scores.requires_grad):
        return Tensor(w), Tensor(rhat)

    def backward(g, a=scores, ctx=ctx, n=n):
        a._accumulate(kernels.fused_backward(ctx, g[:, :n], g[:, n:]))

    stacked = Tensor._result(np.concatenate([w, rhat], axis=1), (scores,),
                             backward, "rank_contractions")
    return stacked[:, :n], stacked[:, n:]
