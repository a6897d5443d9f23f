"""Synthetic interaction generator with controllable provider skew.

Every user favours a few provider blocks, and block popularity follows a
power law: a handful of providers have most of the fans, so a recommender
that simply serves each user their favourite blocks still concentrates
exposure on the head providers.  Favourite blocks are shared structure
(fans of a block co-consume its items), which a factorization model picks
up and generalizes to a fan's unseen block items; exposure can therefore
be redistributed toward tail providers in the low-attention tail of each
list without destroying the per-user signal at the top.  A uniform
mixture over the whole catalog keeps tail items alive through k-core
filtering.
"""

import numpy as np


def generate_interactions(num_users=200, num_items=300, num_providers=20,
                          seed=7, skew=1.0, taste_blocks=3, taste_frac=0.8,
                          popularity_floor=0.05, min_per_user=20,
                          max_per_user=40):
    """Sample (user, item) pairs plus the item->provider block map.

    `skew` is the fan power-law exponent over provider blocks (larger =
    more fans concentrated on the head providers); each user favours
    `taste_blocks` blocks drawn by that law and takes `taste_frac` of
    their interactions uniformly from those blocks' items.  The rest are
    catalog-wide draws from a mild popularity law mixed with a
    `popularity_floor` uniform component so every item keeps enough
    interactions to survive k-core filtering.  Returns
    (pairs, item_provider) with pairs as an (M, 2) int array.
    """
    if num_items % num_providers != 0:
        raise ValueError("num_items must be a multiple of num_providers")
    if not 0.0 <= taste_frac <= 1.0:
        raise ValueError("taste_frac must lie in [0, 1]")
    if not 1 <= taste_blocks <= num_providers:
        raise ValueError("taste_blocks must lie in [1, num_providers]")
    rng = np.random.default_rng(seed)
    fan_p = np.arange(1, num_providers + 1, dtype=np.float64) ** -skew
    fan_p = fan_p / fan_p.sum()
    popularity = (np.arange(1, num_items + 1, dtype=np.float64) ** -1.0
                  + popularity_floor)
    popularity = popularity / popularity.sum()
    block = num_items // num_providers
    item_provider = np.arange(num_items) // block

    pairs = []
    for u in range(num_users):
        n_u = int(rng.integers(min_per_user, max_per_user + 1))
        favs = rng.choice(num_providers, size=taste_blocks, replace=False,
                          p=fan_p)
        pool = np.concatenate([np.arange(p * block, (p + 1) * block)
                               for p in sorted(favs)])
        n_taste = min(int(round(taste_frac * n_u)), pool.shape[0])
        chosen = list(rng.choice(pool, size=n_taste, replace=False))
        w = popularity.copy()
        w[np.asarray(chosen, dtype=np.int64)] = 0.0
        for _ in range(n_u - n_taste):
            w = w / w.sum()
            item = int(rng.choice(num_items, p=w))
            chosen.append(item)
            w[item] = 0.0
        pairs.extend((u, int(i)) for i in sorted(chosen))
    return np.asarray(pairs, dtype=np.int64), item_provider


def write_tsv(path, pairs, item_provider):
    """Write generated pairs as the loader's TSV format with zero-padded
    labels (u000, i000, p00) so label order equals numeric order."""
    uw = len(str(int(pairs[:, 0].max())))
    iw = len(str(int(item_provider.shape[0] - 1)))
    pw = len(str(int(item_provider.max())))
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in pairs:
            fh.write(f"u{u:0{uw}d}\ti{i:0{iw}d}\tp{item_provider[i]:0{pw}d}\n")


def generate_tsv(path, **kwargs):
    """Generate and write a synthetic dataset; returns the pair count."""
    pairs, item_provider = generate_interactions(**kwargs)
    write_tsv(path, pairs, item_provider)
    return pairs.shape[0]
