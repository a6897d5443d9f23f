"""Training objectives: exact KL values, the hierarchical split against
the decomposition terms, smoothed NDCG against closed forms and its hard
counterpart, and the weighted total."""

import math

import numpy as np
import pytest

from fairadapt.autodiff import Tensor, parameter
from fairadapt.exposure import (
    ProviderPartition,
    build_target,
    decomposition_terms,
    hierarchical_stats,
)
from fairadapt.losses import (
    LossWeights,
    dcg_discounts,
    diff_ndcg,
    diff_ndcg_loss,
    global_kl,
    hierarchical_kl,
    ideal_dcg,
    ndcg_hard,
    total_loss,
)
from fairadapt.sorting import CauchySmoothing, sort_soft

# sum_s p_s ln(4 p_s) for p = (0.4, 0.1, 0.3, 0.2)
KL_4PROVIDER_UNIFORM = 0.10644013528622318


def state_for(p, t, t_group, groups, num_groups, eps=0.0):
    part = ProviderPartition(np.asarray(groups), num_groups)
    return hierarchical_stats(np.asarray(p, dtype=float),
                              np.asarray(t, dtype=float),
                              np.asarray(t_group, dtype=float),
                              part, eps=eps)


class TestGlobalKL:
    def test_uniform_target_oracle(self):
        state = state_for([0.4, 0.1, 0.3, 0.2], [0.25] * 4,
                          [0.5, 0.5], [0, 0, 1, 1], 2)
        assert float(global_kl(state).data) == pytest.approx(
            KL_4PROVIDER_UNIFORM, abs=1e-12)

    def test_matched_distributions_zero(self):
        state = state_for([0.2, 0.3, 0.5], [0.2, 0.3, 0.5],
                          [0.5, 0.5], [0, 0, 1], 2)
        assert float(global_kl(state).data) == pytest.approx(0.0, abs=1e-14)

    def test_two_point_closed_form(self):
        state = state_for([0.5, 0.5], [0.25, 0.75], [0.25, 0.75], [0, 1], 2)
        assert float(global_kl(state).data) == pytest.approx(
            0.5 * math.log(4.0 / 3.0), abs=1e-12)

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.random(6) + 0.01
            t = rng.random(6) + 0.01
            state = state_for(p / p.sum(), t / t.sum(), [0.5, 0.5],
                              [0, 0, 0, 1, 1, 1], 2)
            assert float(global_kl(state).data) >= -1e-12


class TestHierarchicalKL:
    def test_unit_weights_match_inter_plus_intra(self):
        rng = np.random.default_rng(1)
        part = ProviderPartition(np.array([0, 0, 1, 1, 1, 2]), 3)
        t, tg = build_target("uniform_group", part)
        state = hierarchical_stats(rng.random(6) + 0.1, t, tg, part)
        value = float(hierarchical_kl(state, LossWeights()).data)
        _, inter, intra, _ = decomposition_terms(state)
        assert value == pytest.approx(inter + intra, abs=1e-12)

    def test_weights_scale_terms(self):
        rng = np.random.default_rng(2)
        part = ProviderPartition(np.array([0, 1, 1, 2, 2]), 3)
        t, tg = build_target("uniform_provider", part)
        state = hierarchical_stats(rng.random(5) + 0.1, t, tg, part)
        _, inter, intra, _ = decomposition_terms(state)
        w = LossWeights(lambda_inter=2.0, lambda_intra=0.5)
        assert float(hierarchical_kl(state, w).data) == pytest.approx(
            2.0 * inter + 0.5 * intra, abs=1e-12)

    def test_equals_global_kl_when_target_aggregated(self):
        """With the aggregated group target the calibration term is zero,
        so inter + intra is exactly the provider-level KL."""
        rng = np.random.default_rng(3)
        part = ProviderPartition(np.array([0, 0, 0, 1, 1, 2, 2, 2]), 3)
        t, tg = build_target("uniform_group", part)  # tg aggregated from t
        state = hierarchical_stats(rng.random(8) + 0.1, t, tg, part)
        h = float(hierarchical_kl(state, LossWeights()).data)
        g = float(global_kl(state).data)
        assert h == pytest.approx(g, abs=1e-9)

    def test_gradient_is_finite(self):
        part = ProviderPartition(np.array([0, 1, 2]), 3)
        t, tg = build_target("uniform_provider", part)
        e = parameter(np.array([3.0, 2.0, 1.0]))
        state = hierarchical_stats(e, t, tg, part)
        hierarchical_kl(state, LossWeights()).backward()
        assert np.all(np.isfinite(e.grad))
        # pushing mass toward the starved provider must lower the loss
        assert e.grad[0] > 0 and e.grad[2] < 0


class TestHardNDCG:
    def test_discounts_match_position_bias(self):
        np.testing.assert_allclose(dcg_discounts(3),
                                   [1.0, 1.0 / math.log2(3), 0.5])

    def test_single_relevant_at_second_rank(self):
        value = ndcg_hard(np.array([0, 1]), np.array([0.0, 1.0]), k=2)
        assert value == pytest.approx(0.6309297535714574, abs=1e-15)

    def test_two_relevant_split_ranks(self):
        value = ndcg_hard(np.array([0, 1, 2]), np.array([1.0, 0.0, 1.0]), k=3)
        assert value == pytest.approx(1.5 / 1.6309297535714574, abs=1e-12)

    def test_perfect_ranking_is_one(self):
        value = ndcg_hard(np.array([2, 0, 1]), np.array([0.0, 0.0, 1.0]), k=2)
        assert value == pytest.approx(1.0)

    def test_no_relevant_returns_none(self):
        assert ndcg_hard(np.array([0, 1]), np.zeros(2), k=2) is None

    def test_graded_gains(self):
        # gain(2) = 3: swapping a grade-2 and grade-1 item must hurt
        good = ndcg_hard(np.array([0, 1]), np.array([2.0, 1.0]), k=2)
        bad = ndcg_hard(np.array([1, 0]), np.array([2.0, 1.0]), k=2)
        assert good == pytest.approx(1.0)
        assert bad < good

    def test_ideal_dcg_rows(self):
        rows = ideal_dcg(np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0]]), k=2)
        assert rows[0] == pytest.approx(1.0 + 0.6309297535714574)
        assert rows[1] == 0.0


class TestDiffNDCG:
    def test_even_mix_closed_form(self):
        """Equal scores mix 50/50, so the rank-0 soft relevance is 0.5 and
        NDCG@1 is 2^0.5 - 1."""
        perm = sort_soft(np.zeros(2), CauchySmoothing(beta=10.0))
        value = diff_ndcg(perm, np.array([1.0, 0.0]), k=1)
        assert value == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-12)

    def test_no_relevant_returns_none(self):
        perm = sort_soft(np.array([1.0, 2.0]), CauchySmoothing())
        assert diff_ndcg(perm, np.zeros(2), k=1) is None

    def test_sharp_beta_approaches_hard(self):
        scores = np.array([3.0, 1.0, 2.5, 0.2, 1.9])
        rel = np.array([1.0, 0.0, 0.0, 1.0, 1.0])
        perm = sort_soft(scores, CauchySmoothing(beta=100000.0))
        order = np.argsort(-scores, kind="stable")
        hard = ndcg_hard(order, rel, k=3)
        soft = diff_ndcg(perm, rel, k=3)
        assert soft == pytest.approx(hard, abs=1e-3)

    def test_batched_loss_oracle(self):
        soft_rel = Tensor(np.array([[1.0, 0.0], [math.log2(1.5), 0.0]]))
        rel = np.array([[1.0, 0.0], [1.0, 0.0]])
        loss = diff_ndcg_loss(soft_rel, rel, k=1)
        assert float(loss.data) == pytest.approx(0.25, abs=1e-12)

    def test_dead_row_contributes_constant_one(self):
        soft_rel = parameter(np.array([[1.0, 0.0], [0.7, 0.3]]))
        rel = np.array([[1.0, 0.0], [0.0, 0.0]])  # second row: no positives
        loss = diff_ndcg_loss(soft_rel, rel, k=1)
        assert float(loss.data) == pytest.approx(0.5, abs=1e-12)
        loss.backward()
        np.testing.assert_array_equal(soft_rel.grad[1], 0.0)

    def test_all_dead_rows_constant(self):
        soft_rel = Tensor(np.array([[0.5, 0.5]]))
        loss = diff_ndcg_loss(soft_rel, np.zeros((1, 2)), k=1)
        assert float(loss.data) == pytest.approx(1.0)


class TestTotalLoss:
    def test_weighted_sum(self):
        out = total_loss(Tensor(np.array(2.0)), Tensor(np.array(3.0)),
                         LossWeights(lambda_acc=0.1))
        assert float(out.data) == pytest.approx(2.3)

    def test_default_weights(self):
        w = LossWeights()
        assert w.lambda_inter == 1.0
        assert w.lambda_intra == 1.0
        assert w.lambda_acc == pytest.approx(1e-4)
