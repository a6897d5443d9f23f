"""Correction MLP: parameter counts across depths, the zero-scale
identity, forward-pass semantics, the blocked full-matrix path, and the
checkpoint format."""

import numpy as np
import pytest

from fairadapt.adapter import (
    adapter_forward,
    adapter_tensors,
    adjust_scores,
    correction,
    full_correction_matrix,
    init_adapter,
    load_adapter,
    pair_features,
    save_adapter,
)
from fairadapt.backbone import EmbeddingTable


def toy_table(num_users=3, num_items=5, d=4, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingTable(rng.normal(size=(num_users, d)),
                          rng.normal(size=(num_items, d)))


class TestInit:
    @pytest.mark.parametrize("layers,h,expected", [
        (0, 32, 65),
        (1, 32, 2113),
        (2, 32, 3169),
        (3, 32, 4225),
        (1, 16, 1057),
        (1, 64, 4225),
    ])
    def test_parameter_counts(self, layers, h, expected):
        params = init_adapter(d=32, h=h, seed=0, layers=layers)
        assert params.count() == expected
        assert params.num_hidden == layers

    def test_matrix_shapes_default_depth(self):
        params = init_adapter(d=32, h=32, seed=0)
        assert [w.shape for w in params.weights] == [
            (64, 32), (32, 32), (32, 1)]
        assert [b.shape for b in params.biases] == [(32,), (32,), (1,)]

    def test_biases_start_at_zero(self):
        params = init_adapter(d=8, h=4, seed=2)
        for b in params.biases:
            np.testing.assert_array_equal(b, 0.0)

    def test_scale_bounds_weights(self):
        params = init_adapter(d=8, h=4, seed=3, scale=0.01)
        for w in params.weights:
            assert np.abs(w).max() <= 0.01

    def test_default_scale_follows_fan_in(self):
        params = init_adapter(d=8, h=4, seed=4)
        assert np.abs(params.weights[0]).max() <= 1.0 / np.sqrt(16)
        assert np.abs(params.weights[1]).max() <= 1.0 / np.sqrt(4)

    def test_seed_determinism(self):
        a = init_adapter(d=6, h=3, seed=11)
        b = init_adapter(d=6, h=3, seed=11)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_invalid_args_rejected(self):
        with pytest.raises(ValueError, match="hidden layer count"):
            init_adapter(d=4, h=4, seed=0, layers=4)
        with pytest.raises(ValueError, match=">= 1"):
            init_adapter(d=0, h=4, seed=0)

    def test_copy_is_deep(self):
        a = init_adapter(d=4, h=3, seed=0)
        b = a.copy()
        b.weights[0][0, 0] += 1.0
        assert a.weights[0][0, 0] != b.weights[0][0, 0]


class TestForward:
    def test_zero_scale_is_zero_map(self):
        emb = toy_table()
        params = init_adapter(d=4, h=3, seed=0, scale=0.0)
        delta = adapter_forward(emb, 0, np.arange(5), params)
        np.testing.assert_array_equal(delta, np.zeros(5))

    def test_pair_features_concatenate(self):
        emb = toy_table(d=3)
        feats = pair_features(emb, 1, np.array([0, 4]))
        assert feats.shape == (2, 6)
        np.testing.assert_array_equal(feats[0, :3], emb.user_emb[1])
        np.testing.assert_array_equal(feats[1, 3:], emb.item_emb[4])

    def test_linear_depth_zero_closed_form(self):
        emb = toy_table(d=2)
        params = init_adapter(d=2, h=1, seed=5, layers=0)
        w = params.weights[0][:, 0]
        cand = np.array([1, 3])
        expected = pair_features(emb, 2, cand) @ w
        np.testing.assert_allclose(adapter_forward(emb, 2, cand, params),
                                   expected, atol=1e-12)

    def test_relu_between_but_not_after_last(self):
        # one hidden layer, weights forcing a negative output: a trailing
        # ReLU would clamp it to zero
        params = init_adapter(d=1, h=1, seed=0, layers=1)
        params.weights[0][:, 0] = [1.0, 0.0]
        params.biases[0][0] = 0.0
        params.weights[1][0, 0] = -1.0
        emb = EmbeddingTable(np.array([[2.0]]), np.array([[0.0]]))
        out = adapter_forward(emb, 0, np.array([0]), params)
        assert out[0] == pytest.approx(-2.0)
        # and the hidden ReLU must kill a negative pre-activation
        emb_neg = EmbeddingTable(np.array([[-2.0]]), np.array([[0.0]]))
        out_neg = adapter_forward(emb_neg, 0, np.array([0]), params)
        assert out_neg[0] == pytest.approx(0.0)

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            adapter_forward(toy_table(), 0, np.array([], dtype=int),
                            init_adapter(d=4, h=2, seed=0))

    def test_correction_accepts_tensor_and_tracks_grad(self):
        from fairadapt.autodiff import parameter

        params = init_adapter(d=2, h=3, seed=1)
        feats = parameter(np.random.default_rng(0).normal(size=(4, 4)))
        out = correction(feats, adapter_tensors(params))
        assert out.shape == (4,)
        out.sum().backward()
        assert feats.grad is not None

    def test_tensors_view_not_copy(self):
        params = init_adapter(d=2, h=2, seed=2)
        tensors = adapter_tensors(params)
        tensors[0].data[0, 0] = 123.0
        assert params.weights[0][0, 0] == 123.0


class TestFullMatrix:
    def test_matches_per_user_forward(self):
        emb = toy_table(num_users=7, num_items=6, d=3, seed=4)
        params = init_adapter(d=3, h=4, seed=6)
        full = full_correction_matrix(emb, params, block=3)
        assert full.shape == (7, 6)
        for u in range(7):
            np.testing.assert_allclose(
                full[u], adapter_forward(emb, u, np.arange(6), params),
                atol=1e-12)

    def test_block_size_does_not_change_result(self):
        emb = toy_table(num_users=5, num_items=4, d=2, seed=8)
        params = init_adapter(d=2, h=3, seed=9)
        a = full_correction_matrix(emb, params, block=1)
        b = full_correction_matrix(emb, params, block=64)
        np.testing.assert_array_equal(a, b)


class TestAdjustScores:
    def test_elementwise_sum(self):
        out = adjust_scores(np.array([1.0, 2.0]), np.array([0.5, -1.0]))
        np.testing.assert_allclose(out, [1.5, 1.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            adjust_scores(np.zeros(3), np.zeros(4))


class TestCheckpointIO:
    def test_roundtrip_exact(self, tmp_path):
        params = init_adapter(d=5, h=4, seed=13, layers=2)
        params.biases[1][:] = 0.25  # make biases nontrivial
        path = tmp_path / "adapter.ckpt"
        save_adapter(params, path)
        loaded = load_adapter(path)
        assert loaded.dim == 5 and loaded.hidden == 4
        assert loaded.num_hidden == 2 and loaded.seed == 13
        for a, b in zip(loaded.weights, params.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(loaded.biases, params.biases):
            np.testing.assert_array_equal(a, b)

    def test_roundtrip_all_depths(self, tmp_path):
        for layers in (0, 1, 2, 3):
            params = init_adapter(d=3, h=2, seed=layers, layers=layers)
            path = tmp_path / f"adapter{layers}.ckpt"
            save_adapter(params, path)
            assert load_adapter(path).num_hidden == layers

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"GARBAGE!" + b"\x00" * 32)
        with pytest.raises(ValueError, match="not an adapter checkpoint"):
            load_adapter(path)
