"""Evaluation metrics: ranking accuracy (NDCG/HR/MRR), exposure
concentration (Gini, entropy, coefficient of variation), and the
report assembly used by the CLI.

Evaluation ranks the full item space minus each user's train and
validation items, then scores the top-K list against the held-out test
items with binary relevance.
"""

from dataclasses import dataclass, field

import numpy as np

from .exposure import hard_exposure, position_bias


def gini(values):
    """Gini coefficient via the sorted form
    (2 * sum_i i*x_(i)) / (n * sum_i x_i) - (n + 1) / n
    with x ascending and i 1-based.  Zero for an all-zero or single-entry
    vector; (n-1)/n for all mass on one entry.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.shape[0]
    total = x.sum()
    if n <= 1 or total == 0.0:
        return 0.0
    idx = np.arange(1, n + 1, dtype=np.float64)
    # single division keeps integer-valued cases (e.g. one-hot) exact
    return float((2.0 * (idx @ x) - (n + 1.0) * total) / (n * total))


def entropy_bits(values):
    """Shannon entropy (base 2) of values normalised to a distribution;
    zero entries contribute nothing.

    Computed as log2(S) - (sum_i x_i log2 x_i) / S so that uniform
    integer-valued inputs come out exactly log2(n).
    """
    x = np.asarray(values, dtype=np.float64)
    total = x.sum()
    if total <= 0.0:
        return 0.0
    nz = x[x > 0.0]
    return float(np.log2(total) - (nz @ np.log2(nz)) / total)


def coefficient_of_variation(values):
    """Population standard deviation over mean; zero for zero mean."""
    x = np.asarray(values, dtype=np.float64)
    mean = x.mean()
    if mean == 0.0:
        return 0.0
    return float(x.std() / mean)


def rank_items(scores, masked):
    """Descending order of the unmasked item ids (ties by id ascending)."""
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.setdiff1d(np.arange(scores.shape[0]), masked,
                              assume_unique=False)
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order]


def ndcg_binary(ranked, positives, k):
    """NDCG@k with binary gains; None when the user has no positives."""
    positives = set(int(i) for i in np.asarray(positives).ravel())
    if not positives:
        return None
    kk = min(k, len(ranked))
    disc = position_bias(kk)
    hits = np.fromiter((int(v) in positives for v in ranked[:kk]),
                       dtype=np.float64, count=kk)
    ideal = disc[:min(kk, len(positives))].sum()
    return float((hits @ disc) / ideal)


def hit_rate(ranked, positives, k):
    """|top-k intersect positives| / min(k, |positives|)."""
    positives = set(int(i) for i in np.asarray(positives).ravel())
    if not positives:
        return None
    kk = min(k, len(ranked))
    hits = sum(1 for v in ranked[:kk] if int(v) in positives)
    return hits / min(k, len(positives))


def reciprocal_rank(ranked, positives, k):
    """1 / (1-based rank of the first hit in the top k), else 0."""
    positives = set(int(i) for i in np.asarray(positives).ravel())
    if not positives:
        return None
    for pos, v in enumerate(ranked[:k]):
        if int(v) in positives:
            return 1.0 / (pos + 1)
    return 0.0


def top_k_lists(scores, masks, k):
    """Top-k item ids per user after masking; rows may be shorter than k
    when fewer than k items remain."""
    return [rank_items(scores[u], masks[u])[:k]
            for u in range(scores.shape[0])]


@dataclass
class EvalReport:
    """Accuracy and exposure metrics of one ranking run."""

    k: int
    ndcg: float
    hit_rate: float
    mrr: float
    exposure: np.ndarray
    group_share: np.ndarray
    gini: float
    entropy: float
    cv: float
    within_gini: list = field(default_factory=list)
    num_scored_users: int = 0

    def to_dict(self):
        return {
            "k": self.k,
            "ndcg": self.ndcg,
            "hit_rate": self.hit_rate,
            "mrr": self.mrr,
            "gini": self.gini,
            "entropy": self.entropy,
            "cv": self.cv,
            "group_share": self.group_share.tolist(),
            "within_group_gini": list(self.within_gini),
            "num_scored_users": self.num_scored_users,
        }


def evaluate_ranking(scores, bundle, k, positives=None, masks=None):
    """Full evaluation of a (num_users, num_items) score matrix.

    By default each user's train and validation items are masked and the
    test items are the positives; pass `positives`/`masks` to evaluate
    against a different split (e.g. validation during training).
    Accuracy metrics average over users with at least one positive.
    """
    if positives is None:
        positives = bundle.test
    if masks is None:
        masks = [np.concatenate([tr, va]) for tr, va
                 in zip(bundle.train, bundle.val)]
    lists = top_k_lists(scores, masks, k)
    ndcgs, hrs, mrrs = [], [], []
    for u, ranked in enumerate(lists):
        n = ndcg_binary(ranked, positives[u], k)
        if n is None:
            continue
        ndcgs.append(n)
        hrs.append(hit_rate(ranked, positives[u], k))
        mrrs.append(reciprocal_rank(ranked, positives[u], k))
    exposure = hard_exposure(lists, bundle.item_provider,
                             bundle.num_providers)
    part = bundle.partition
    total = exposure.sum()
    group_mass = np.bincount(part.provider_group, weights=exposure,
                             minlength=part.num_groups)
    share = group_mass / total if total > 0 else group_mass
    within = [gini(exposure[part.members(c)])
              for c in range(part.num_groups)]
    return EvalReport(
        k=k,
        ndcg=float(np.mean(ndcgs)) if ndcgs else 0.0,
        hit_rate=float(np.mean(hrs)) if hrs else 0.0,
        mrr=float(np.mean(mrrs)) if mrrs else 0.0,
        exposure=exposure,
        group_share=share,
        gini=gini(exposure),
        entropy=entropy_bits(exposure),
        cv=coefficient_of_variation(exposure),
        within_gini=within,
        num_scored_users=len(ndcgs),
    )
