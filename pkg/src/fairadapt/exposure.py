"""Provider exposure: position-bias accounting, targets, and the
hierarchical (between-group / within-group) decomposition of exposure KL.

Exposure of a provider is the summed position bias of its items across
users' top-K lists, with bias 1/log2(1+rank) for 1-based ranks.  The
decomposition splits KL(p || t) into an inter-group term on group masses,
a mass-weighted intra-group term on within-group shares, and a calibration
term that vanishes when the group target equals the aggregated provider
target.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, constant, segment_sum

EPS = 1e-12


def position_bias(k):
    """Bias of the first k ranks: entry j is 1/log2(j+2) (0-based j)."""
    return 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))


@dataclass(frozen=True)
class ProviderPartition:
    """Providers split into ordered tiers (head=0 < mid < ... < tail).

    `provider_group[s]` is the tier of provider s; `group_sizes[c]` the
    number of providers in tier c.
    """

    provider_group: np.ndarray
    num_groups: int

    @property
    def num_providers(self):
        return self.provider_group.shape[0]

    @property
    def group_sizes(self):
        return np.bincount(self.provider_group, minlength=self.num_groups)

    def members(self, c):
        return np.nonzero(self.provider_group == c)[0]


def partition_providers(interaction_counts, fractions=(0.2, 0.6, 0.2)):
    """Tier providers by popularity: descending interaction count, ties by
    provider id ascending; tier boundary after floor(L * cumfrac + 0.5)
    providers.  Returns a ProviderPartition with tier 0 the most popular.
    """
    counts = np.asarray(interaction_counts, dtype=np.int64)
    num = counts.shape[0]
    if num < len(fractions):
        raise ValueError(
            f"need at least {len(fractions)} providers, got {num}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("tier fractions must sum to 1")
    order = np.lexsort((np.arange(num), -counts))
    group = np.empty(num, dtype=np.int64)
    cuts = [int(np.floor(num * f + 0.5))
            for f in np.cumsum(fractions[:-1])]
    prev = 0
    for c, cut in enumerate(cuts + [num]):
        cut = max(cut, prev + 1) if c < len(cuts) else num
        group[order[prev:cut]] = c
        prev = cut
    if prev < num:
        group[order[prev:]] = len(fractions) - 1
    return ProviderPartition(group, len(fractions))


def hard_exposure(top_items, item_provider, num_providers):
    """Exposure per provider from hard top-K lists.

    `top_items` is a (num_users, K) array of item ids (or a list of 1-d
    arrays); each slot contributes bias 1/log2(1+rank) to its provider.
    """
    item_provider = np.asarray(item_provider)
    e = np.zeros(num_providers)
    for row in top_items:
        row = np.asarray(row)
        np.add.at(e, item_provider[row], position_bias(row.shape[0]))
    return e


def soft_exposure(perms, candidates, item_provider, num_providers, k):
    """Expected exposure per provider under soft permutations.

    `perms[u]` is the SoftPermutation over `candidates[u]` (item ids);
    item weight is the probability-weighted bias of the first k ranks.
    """
    item_provider = np.asarray(item_provider)
    e = np.zeros(num_providers)
    bias = position_bias(k)
    for perm, cand in zip(perms, candidates):
        cols = min(k, perm.top_k)
        w = perm.probs[:, :cols] @ bias[:cols]
        np.add.at(e, item_provider[np.asarray(cand)], w)
    return e


def build_target(mode, partition, group_target="aggregated"):
    """Provider target distribution and the matching group target.

    mode 'uniform_provider': every provider gets 1/L; mode 'uniform_group':
    every tier gets equal mass split evenly inside the tier.  The group
    target is the aggregation of the provider target unless
    `group_target='uniform'` forces 1/C per tier, which exercises the
    calibration term of the decomposition.
    """
    L, C = partition.num_providers, partition.num_groups
    sizes = partition.group_sizes
    if np.any(sizes == 0):
        raise ValueError("every tier needs at least one provider")
    if mode == "uniform_provider":
        t = np.full(L, 1.0 / L)
    elif mode == "uniform_group":
        t = (1.0 / (C * sizes))[partition.provider_group]
    else:
        raise ValueError(f"unknown target mode {mode!r}")
    if group_target == "aggregated":
        t_group = np.bincount(partition.provider_group, weights=t,
                              minlength=C)
    elif group_target == "uniform":
        t_group = np.full(C, 1.0 / C)
    else:
        raise ValueError(f"unknown group target {group_target!r}")
    return t, t_group


def smooth_distribution(x, eps=EPS):
    """(x + eps) / sum(x + eps); accepts Tensor or ndarray."""
    if isinstance(x, Tensor):
        shifted = x + eps
        return shifted / shifted.sum()
    x = np.asarray(x, dtype=np.float64) + eps
    return x / x.sum()


@dataclass
class ExposureState:
    """Smoothed exposure distributions and their targets.

    Tensor fields carry gradients back to the raw exposures; target fields
    are plain arrays.  `p_within[s]` is provider s's share of its own
    tier's mass (the flat representation of the within-group
    distributions).
    """

    p: Tensor
    p_group: Tensor
    p_within: Tensor
    t: np.ndarray
    t_group: np.ndarray
    t_within: np.ndarray
    partition: ProviderPartition


def hierarchical_stats(exposure, target, target_group, partition, eps=EPS):
    """Build the ExposureState for a raw exposure vector.

    With eps=0 the caller guarantees strictly positive masses everywhere;
    a zero tier mass or zero target entry is rejected because the
    decomposition is undefined there.
    """
    e = exposure if isinstance(exposure, Tensor) else constant(exposure)
    target = np.asarray(target, dtype=np.float64)
    target_group = np.asarray(target_group, dtype=np.float64)
    group_of = partition.provider_group
    if eps == 0.0:
        if np.any(e.data <= 0) or np.any(target <= 0) or np.any(target_group <= 0):
            raise ValueError("zero mass requires eps smoothing")
    p = smooth_distribution(e, eps)
    t = smooth_distribution(target, eps)
    t_group = smooth_distribution(target_group, eps)
    p_group = segment_sum(p, group_of, partition.num_groups)
    t_agg = np.bincount(group_of, weights=t, minlength=partition.num_groups)
    p_within = p / p_group.take(group_of)
    t_within = t / t_agg[group_of]
    return ExposureState(p, p_group, p_within, t, t_group, t_within, partition)


def decomposition_terms(state):
    """(global_kl, inter, intra, calibration) as floats.

    global_kl = inter + intra + calibration holds identically; the
    calibration term sum_c pG_c log(tG_c / t_aggregated_c) vanishes when
    the group target equals the aggregated provider target.
    """
    p = state.p.data
    t = state.t
    pg = state.p_group.data
    tg = state.t_group
    t_agg = np.bincount(state.partition.provider_group, weights=t,
                        minlength=state.partition.num_groups)
    global_kl = float(np.sum(p * np.log(p / t)))
    inter = float(np.sum(pg * np.log(pg / tg)))
    intra = float(np.sum(p * np.log(state.p_within.data / state.t_within)))
    calibration = float(np.sum(pg * np.log(tg / t_agg)))
    return global_kl, inter, intra, calibration


def verify_decomposition(state):
    """|KL(p||t) - (inter + intra + calibration)| for an ExposureState."""
    global_kl, inter, intra, calibration = decomposition_terms(state)
    return abs(global_kl - (inter + intra + calibration))
