"""Interaction data: TSV loading, k-core filtering, per-user splits, and a
deterministic JSON bundle consumed by every later stage.

A bundle fixes the integer id spaces (users, items, providers), the
item-to-provider map, the provider tiers, and the train/val/test item sets
per user, so downstream stages never re-derive them.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .exposure import ProviderPartition, partition_providers


def _label_key(label):
    try:
        return (0, int(label), label)
    except ValueError:
        return (1, 0, label)


@dataclass
class RawInteractions:
    """Parsed TSV rows before filtering: parallel label arrays."""

    users: list
    items: list
    providers: dict  # item label -> provider label

    def __len__(self):
        return len(self.users)


def load_interactions(path):
    """Parse a `user<TAB>item<TAB>provider` file.

    Blank lines and lines starting with '#' are skipped.  Duplicate
    (user, item) pairs keep the first occurrence; an item listed under two
    different providers is an error.  All errors cite the 1-based line
    number.
    """
    users, items = [], []
    provider_of = {}
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise ValueError(
                    f"{path}:{lineno}: expected 3 tab-separated fields "
                    f"(user, item, provider), got {len(fields)}")
            user, item, provider = (f.strip() for f in fields[:3])
            if not user or not item or not provider:
                raise ValueError(f"{path}:{lineno}: empty field")
            if item in provider_of and provider_of[item] != provider:
                raise ValueError(
                    f"{path}:{lineno}: item {item!r} already assigned to "
                    f"provider {provider_of[item]!r}, got {provider!r}")
            provider_of[item] = provider
            if (user, item) in seen:
                continue
            seen.add((user, item))
            users.append(user)
            items.append(item)
    if not users:
        raise ValueError(f"{path}: no interactions")
    return RawInteractions(users, items, provider_of)


def kcore_filter(user_idx, item_idx, k=5):
    """Boolean mask of the k-core: iteratively drop interactions of users
    or items with fewer than k remaining interactions until stable."""
    user_idx = np.asarray(user_idx)
    item_idx = np.asarray(item_idx)
    keep = np.ones(user_idx.shape[0], dtype=bool)
    while True:
        u_cnt = np.bincount(user_idx[keep], minlength=user_idx.max() + 1)
        i_cnt = np.bincount(item_idx[keep], minlength=item_idx.max() + 1)
        bad = keep & ((u_cnt[user_idx] < k) | (i_cnt[item_idx] < k))
        if not bad.any():
            return keep
        keep &= ~bad
        if not keep.any():
            raise ValueError(f"{k}-core filtering removed every interaction")


@dataclass
class DataBundle:
    """Fully prepared dataset: id spaces, provider map and tiers, and the
    per-user train/val/test item arrays (each sorted ascending)."""

    user_labels: list
    item_labels: list
    provider_labels: list
    item_provider: np.ndarray
    partition: ProviderPartition
    train: list
    val: list
    test: list
    meta: dict = field(default_factory=dict)

    @property
    def num_users(self):
        return len(self.user_labels)

    @property
    def num_items(self):
        return len(self.item_labels)

    @property
    def num_providers(self):
        return len(self.provider_labels)

    def train_pairs(self):
        """(M, 2) array of (user, item) training interactions."""
        rows = [np.stack([np.full(len(it), u, dtype=np.int64), it], axis=1)
                for u, it in enumerate(self.train) if len(it)]
        return np.concatenate(rows, axis=0)


def split_per_user(items_by_user, val_frac, test_frac, rng):
    """Assign each user's items to train/val/test.

    Per user with n items: floor(val_frac*n) go to validation and
    floor(test_frac*n) to test (drawn first), remainder to train; the
    draw order is a seeded permutation, users processed in id order.
    """
    train, val, test = [], [], []
    for items in items_by_user:
        items = np.asarray(items, dtype=np.int64)
        n = items.shape[0]
        n_val = int(np.floor(val_frac * n))
        n_test = int(np.floor(test_frac * n))
        perm = items[rng.permutation(n)]
        test.append(np.sort(perm[:n_test]))
        val.append(np.sort(perm[n_test:n_test + n_val]))
        train.append(np.sort(perm[n_test + n_val:]))
    return train, val, test


def prepare_bundle(raw, k_core=5, val_frac=0.1, test_frac=0.2, seed=0,
                   tier_fractions=(0.2, 0.6, 0.2)):
    """Filter, reindex, split, and tier a RawInteractions into a DataBundle.

    Ids are assigned by sorted label (numeric labels in numeric order);
    provider tiers come from training interaction counts.
    """
    user_sorted = sorted(set(raw.users), key=_label_key)
    item_sorted = sorted(set(raw.items), key=_label_key)
    u_map = {lbl: i for i, lbl in enumerate(user_sorted)}
    i_map = {lbl: i for i, lbl in enumerate(item_sorted)}
    u_idx = np.array([u_map[u] for u in raw.users], dtype=np.int64)
    i_idx = np.array([i_map[i] for i in raw.items], dtype=np.int64)

    keep = kcore_filter(u_idx, i_idx, k=k_core)
    u_idx, i_idx = u_idx[keep], i_idx[keep]

    live_users = np.unique(u_idx)
    live_items = np.unique(i_idx)
    user_labels = [user_sorted[u] for u in live_users]
    item_labels = [item_sorted[i] for i in live_items]
    u_re = np.full(len(user_sorted), -1, dtype=np.int64)
    i_re = np.full(len(item_sorted), -1, dtype=np.int64)
    u_re[live_users] = np.arange(live_users.shape[0])
    i_re[live_items] = np.arange(live_items.shape[0])
    u_idx, i_idx = u_re[u_idx], i_re[i_idx]

    provider_sorted = sorted(
        {raw.providers[lbl] for lbl in item_labels}, key=_label_key)
    p_map = {lbl: i for i, lbl in enumerate(provider_sorted)}
    item_provider = np.array(
        [p_map[raw.providers[lbl]] for lbl in item_labels], dtype=np.int64)

    items_by_user = [np.sort(i_idx[u_idx == u])
                     for u in range(len(user_labels))]
    rng = np.random.default_rng(seed)
    train, val, test = split_per_user(items_by_user, val_frac, test_frac, rng)

    counts = np.zeros(len(provider_sorted), dtype=np.int64)
    for items in train:
        np.add.at(counts, item_provider[items], 1)
    partition = partition_providers(counts, tier_fractions)

    meta = {"k_core": k_core, "val_frac": val_frac, "test_frac": test_frac,
            "seed": seed, "tier_fractions": list(tier_fractions)}
    return DataBundle(user_labels, item_labels, provider_sorted,
                      item_provider, partition, train, val, test, meta)


def save_bundle(bundle, path):
    """Write a DataBundle as deterministic JSON (sorted keys, no floats
    beyond the meta fractions, trailing newline)."""
    doc = {
        "meta": bundle.meta,
        "user_labels": bundle.user_labels,
        "item_labels": bundle.item_labels,
        "provider_labels": bundle.provider_labels,
        "item_provider": bundle.item_provider.tolist(),
        "provider_group": bundle.partition.provider_group.tolist(),
        "num_groups": bundle.partition.num_groups,
        "train": [a.tolist() for a in bundle.train],
        "val": [a.tolist() for a in bundle.val],
        "test": [a.tolist() for a in bundle.test],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_bundle(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    partition = ProviderPartition(
        np.asarray(doc["provider_group"], dtype=np.int64),
        int(doc["num_groups"]))
    return DataBundle(
        doc["user_labels"], doc["item_labels"], doc["provider_labels"],
        np.asarray(doc["item_provider"], dtype=np.int64), partition,
        [np.asarray(a, dtype=np.int64) for a in doc["train"]],
        [np.asarray(a, dtype=np.int64) for a in doc["val"]],
        [np.asarray(a, dtype=np.int64) for a in doc["test"]],
        doc.get("meta", {}))
