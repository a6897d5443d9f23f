"""Dataset preparation: strict TSV parsing with line-numbered errors,
k-core filtering, per-user splits, tiering from training counts, and the
deterministic bundle serialization."""

import numpy as np
import pytest

from fairadapt.data import (
    kcore_filter,
    load_bundle,
    load_interactions,
    prepare_bundle,
    save_bundle,
    split_per_user,
)


def write(tmp_path, text, name="data.tsv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def tsv(rows):
    return "".join("\t".join(r) + "\n" for r in rows)


class TestLoadInteractions:
    def test_basic_parse(self, tmp_path):
        path = write(tmp_path, tsv([("u1", "i1", "p1"), ("u2", "i2", "p2")]))
        raw = load_interactions(path)
        assert raw.users == ["u1", "u2"]
        assert raw.items == ["i1", "i2"]
        assert raw.providers == {"i1": "p1", "i2": "p2"}

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = write(tmp_path,
                     "# header\n\nu1\ti1\tp1\n   \n# more\nu2\ti1\tp1\n")
        raw = load_interactions(path)
        assert len(raw.users) == 2

    def test_duplicates_keep_first(self, tmp_path):
        path = write(tmp_path, tsv([("u1", "i1", "p1"), ("u1", "i1", "p1"),
                                    ("u1", "i2", "p1")]))
        raw = load_interactions(path)
        assert raw.users == ["u1", "u1"]
        assert raw.items == ["i1", "i2"]

    def test_short_line_cites_position(self, tmp_path):
        path = write(tmp_path, "u1\ti1\tp1\nu2\ti2\n")
        with pytest.raises(ValueError, match=r"data\.tsv:2.*3 tab-separated"):
            load_interactions(path)

    def test_empty_field_cites_position(self, tmp_path):
        path = write(tmp_path, "u1\ti1\tp1\nu2\t\tp1\n")
        with pytest.raises(ValueError, match=r":2: empty field"):
            load_interactions(path)

    def test_conflicting_provider_rejected(self, tmp_path):
        path = write(tmp_path, tsv([("u1", "i1", "p1"), ("u2", "i1", "p2")]))
        with pytest.raises(ValueError, match=r":2:.*already assigned"):
            load_interactions(path)

    def test_empty_file_rejected(self, tmp_path):
        path = write(tmp_path, "# nothing here\n")
        with pytest.raises(ValueError, match="no interactions"):
            load_interactions(path)

    def test_extra_whitespace_stripped(self, tmp_path):
        path = write(tmp_path, " u1 \t i1 \t p1 \n")
        raw = load_interactions(path)
        assert raw.users == ["u1"] and raw.providers == {"i1": "p1"}


class TestKCore:
    def test_iterative_removal_cascades(self):
        # u0 holds items 0..2; u1 and u2 each touch one of them plus item 3.
        # With k=2, dropping the singleton users also drops item 3.
        users = np.array([0, 0, 0, 1, 1, 2, 2])
        items = np.array([0, 1, 2, 0, 3, 1, 3])
        keep = kcore_filter(users, items, k=2)
        assert keep.sum() >= 2
        kept_u = users[keep]
        kept_i = items[keep]
        for u in np.unique(kept_u):
            assert (kept_u == u).sum() >= 2
        for i in np.unique(kept_i):
            assert (kept_i == i).sum() >= 2

    def test_all_removed_is_an_error(self):
        users = np.array([0, 1, 2])
        items = np.array([0, 1, 2])
        with pytest.raises(ValueError, match="removed every interaction"):
            kcore_filter(users, items, k=3)

    def test_k1_keeps_everything(self):
        users = np.array([0, 1, 2])
        items = np.array([2, 1, 0])
        assert kcore_filter(users, items, k=1).all()


class TestSplits:
    def test_fractions_and_disjointness(self):
        rng = np.random.default_rng(0)
        items_by_user = [np.arange(20), np.arange(10), np.arange(5)]
        train, val, test = split_per_user(items_by_user, 0.1, 0.2, rng)
        for u, full in enumerate(items_by_user):
            n = len(full)
            assert len(test[u]) == int(np.floor(0.2 * n))
            assert len(val[u]) == int(np.floor(0.1 * n))
            assert len(train[u]) == n - len(val[u]) - len(test[u])
            merged = np.concatenate([train[u], val[u], test[u]])
            np.testing.assert_array_equal(np.sort(merged), full)

    def test_each_split_sorted(self):
        rng = np.random.default_rng(1)
        train, val, test = split_per_user([np.arange(30)], 0.2, 0.2, rng)
        for part in (train[0], val[0], test[0]):
            assert np.all(np.diff(part) > 0)

    def test_seed_determinism(self):
        items = [np.arange(25)]
        a = split_per_user(items, 0.1, 0.2, np.random.default_rng(7))
        b = split_per_user(items, 0.1, 0.2, np.random.default_rng(7))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x[0], y[0])


class TestPrepareBundle:
    def make_raw(self, tmp_path):
        rows = []
        # 6 users x 8 items in two provider families, dense enough for 3-core
        for u in range(6):
            for i in range(8):
                if (u + i) % 7 == 1:
                    continue
                rows.append((f"u{u}", f"i{i}", f"p{i % 4}"))
        return load_interactions(write(tmp_path, tsv(rows)))

    def test_bundle_shapes(self, tmp_path):
        bundle = prepare_bundle(self.make_raw(tmp_path), k_core=3,
                                val_frac=0.2, test_frac=0.2, seed=0)
        assert bundle.num_users == 6
        assert bundle.num_items == 8
        assert bundle.num_providers == 4
        assert bundle.item_provider.shape == (8,)
        assert bundle.partition.num_groups == 3
        assert len(bundle.train) == len(bundle.val) == len(bundle.test) == 6

    def test_ids_assigned_by_sorted_label(self, tmp_path):
        path = write(tmp_path, tsv([("10", "i2", "p1"), ("2", "i10", "p0"),
                                    ("10", "i10", "p0"), ("2", "i2", "p1")]))
        bundle = prepare_bundle(load_interactions(path), k_core=1,
                                val_frac=0.0, test_frac=0.0)
        # purely numeric labels sort numerically; others lexically
        assert bundle.user_labels == ["2", "10"]
        assert bundle.item_labels == ["i10", "i2"]

    def test_tiers_from_training_counts(self, tmp_path):
        bundle = prepare_bundle(self.make_raw(tmp_path), k_core=1, seed=3)
        counts = np.zeros(bundle.num_providers, dtype=int)
        for items in bundle.train:
            np.add.at(counts, bundle.item_provider[items], 1)
        part = bundle.partition
        # the head tier holds the largest training count
        head = part.members(0)
        assert counts[head].min() >= counts[part.members(2)].max()

    def test_train_pairs_matches_lists(self, tmp_path):
        bundle = prepare_bundle(self.make_raw(tmp_path), k_core=1, seed=0)
        pairs = bundle.train_pairs()
        assert pairs.shape[1] == 2
        total = sum(len(t) for t in bundle.train)
        assert pairs.shape[0] == total

    def test_meta_records_settings(self, tmp_path):
        bundle = prepare_bundle(self.make_raw(tmp_path), k_core=2,
                                val_frac=0.1, test_frac=0.3, seed=9)
        assert bundle.meta["k_core"] == 2
        assert bundle.meta["seed"] == 9
        assert bundle.meta["test_frac"] == 0.3


class TestBundleRoundTrip:
    def test_roundtrip_preserves_everything(self, tmp_path, mini_bundle):
        path = tmp_path / "bundle.json"
        save_bundle(mini_bundle, path)
        loaded = load_bundle(path)
        assert loaded.user_labels == mini_bundle.user_labels
        assert loaded.item_labels == mini_bundle.item_labels
        assert loaded.provider_labels == mini_bundle.provider_labels
        np.testing.assert_array_equal(loaded.item_provider,
                                      mini_bundle.item_provider)
        np.testing.assert_array_equal(loaded.partition.provider_group,
                                      mini_bundle.partition.provider_group)
        for a, b in zip(loaded.train, mini_bundle.train):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(loaded.test, mini_bundle.test):
            np.testing.assert_array_equal(a, b)

    def test_serialization_is_byte_stable(self, tmp_path, mini_bundle):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_bundle(mini_bundle, p1)
        save_bundle(load_bundle(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
