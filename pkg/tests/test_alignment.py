import math

import numpy as np
import pytest

from maskscribe.alignment import (
    attention,
    attention_weights,
    contrastive_loss,
    cross_entropy,
    dice_loss,
    focal_loss,
    fuse,
    lovasz_loss,
    seg_loss,
    similarity_matrix,
    total_loss,
    validate_prob_map,
)
from maskscribe.core_types import EmbeddingBatch, LossWeights
from maskscribe.errors import NonPositiveTau, ShapeMismatch
from oracles import attention_naive, contrastive_scalar, cross_entropy_scalar, dice_scalar, lovasz_scalar


def softmax_cols(scores):
    e = np.exp(scores - scores.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


class TestAttention:
    def test_single_key_returns_value_row(self, rng):
        q = rng.standard_normal((3, 4))
        k = rng.standard_normal((1, 4))
        v = rng.standard_normal((1, 6))
        out = attention(q, k, v)
        assert np.allclose(out, np.tile(v, (3, 1)), atol=1e-15)

    def test_large_scale_query_selects_matching_key(self):
        k = np.eye(3)
        v = np.arange(12.0).reshape(3, 4)
        q = 100.0 * k[:1]
        out = attention(q, k, v)
        assert np.allclose(out[0], v[0], atol=1e-6)

    def test_matches_naive_oracle(self, rng):
        q = rng.standard_normal((3, 4))
        k = rng.standard_normal((5, 4))
        v = rng.standard_normal((5, 2))
        expected = np.array(attention_naive(q.tolist(), k.tolist(), v.tolist()))
        assert np.allclose(attention(q, k, v), expected, atol=1e-12)

    def test_weight_rows_sum_to_one(self, rng):
        for _ in range(20):
            weights = attention_weights(rng.standard_normal((4, 5)) * 10, rng.standard_normal((6, 5)) * 10)
            assert np.allclose(weights.sum(axis=1), 1.0, atol=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            attention(rng.standard_normal((3, 4)), rng.standard_normal((5, 3)), rng.standard_normal((5, 2)))
        with pytest.raises(ShapeMismatch):
            attention(rng.standard_normal((3, 4)), rng.standard_normal((5, 4)), rng.standard_normal((4, 2)))


class TestFuse:
    def test_identity_bridge_with_single_zero_key(self, rng):
        r_i = rng.standard_normal((3, 4))
        r_t = np.zeros((1, 4))
        eye = np.eye(4)
        out = fuse(r_i, r_t, eye, eye, eye, eye)
        # n_k = 1 makes attention output the single value row; zero text
        # rows make that row zero, leaving the bridged visual term.
        assert np.allclose(out, r_i, atol=1e-15)

    def test_zero_bridge_leaves_attention_only(self, rng):
        r_i = rng.standard_normal((3, 4))
        r_t = rng.standard_normal((5, 4))
        eye = np.eye(4)
        out = fuse(r_i, r_t, eye, eye, eye, np.zeros((4, 4)))
        assert np.allclose(out, attention(r_i, r_t, r_t), atol=1e-15)

    def test_matches_composed_oracle(self, rng):
        r_i = rng.standard_normal((3, 4))
        r_t = rng.standard_normal((4, 5))
        w_q = rng.standard_normal((4, 3))
        w_k = rng.standard_normal((5, 3))
        w_v = rng.standard_normal((5, 2))
        w_b = rng.standard_normal((4, 2))
        att = np.array(attention_naive((r_i @ w_q).tolist(), (r_t @ w_k).tolist(), (r_t @ w_v).tolist()))
        assert np.allclose(fuse(r_i, r_t, w_q, w_k, w_v, w_b), att + r_i @ w_b, atol=1e-12)


class TestFocal:
    def test_perfect_prediction_is_tiny(self):
        p = np.array([[1.0, 0.0], [0.0, 1.0]])
        target = np.array([0, 1])
        assert focal_loss(p, target, gamma_f=2.0) <= 1e-7 * -math.log(1.0 - 1e-7) + 1e-12

    def test_gamma_zero_equals_cross_entropy(self, rng):
        p = softmax_cols(rng.standard_normal((3, 10)))
        target = rng.integers(0, 3, size=10)
        assert focal_loss(p, target, gamma_f=0.0) == pytest.approx(cross_entropy(p, target), abs=1e-12)
        assert cross_entropy(p, target) == pytest.approx(cross_entropy_scalar(p.tolist(), target.tolist()), abs=1e-12)

    def test_hand_evaluated_half_probability(self):
        p = np.array([[0.5], [0.5]])
        assert focal_loss(p, np.array([0]), gamma_f=2.0) == pytest.approx(0.25 * math.log(2.0), abs=1e-12)

    def test_alpha_weighting(self):
        p = np.array([[0.5], [0.5]])
        weighted = focal_loss(p, np.array([0]), gamma_f=2.0, alpha_f=np.array([2.0, 1.0]))
        assert weighted == pytest.approx(0.5 * math.log(2.0), abs=1e-12)


class TestDice:
    def test_perfect_prediction_near_zero(self):
        p = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        target = np.array([0, 1, 0])
        assert abs(dice_loss(p, target, epsilon=1e-6)) < 1e-6

    def test_total_miss_near_one(self):
        p = np.array([[0.0, 0.0], [1.0, 1.0]])
        target = np.array([0, 0])
        assert dice_loss(p, target) == pytest.approx(1.0, abs=1e-5)

    def test_matches_scalar_oracle(self, rng):
        p = softmax_cols(rng.standard_normal((2, 16)))
        target = rng.integers(0, 2, size=16)
        assert dice_loss(p, target) == pytest.approx(dice_scalar(p.tolist(), target.tolist()), abs=1e-12)


class TestLovasz:
    def test_perfect_prediction_zero(self):
        p = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert lovasz_loss(p, np.array([0, 1])) == 0.0

    def test_single_pixel_hand_value(self):
        # One pixel, only class 0 present, p_t = 0.3: the Jaccard gradient
        # of a length-1 run is 1, so the loss equals the error 0.7.
        p = np.array([[0.3], [0.7]])
        assert lovasz_loss(p, np.array([0])) == pytest.approx(0.7, abs=1e-12)

    def test_matches_cumulative_sum_oracle(self, rng):
        for _ in range(30):
            p = softmax_cols(rng.standard_normal((3, 8)))
            target = rng.integers(0, 3, size=8)
            assert lovasz_loss(p, target) == pytest.approx(
                lovasz_scalar(p.tolist(), target.tolist()), abs=1e-12)


class TestSegLoss:
    def test_perfect_prediction_below_tolerance(self):
        p = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        target = np.array([0, 1, 0])
        assert seg_loss(p, target) <= 1e-5

    def test_projection_onto_focal(self, rng):
        p = softmax_cols(rng.standard_normal((3, 12)))
        target = rng.integers(0, 3, size=12)
        weights = LossWeights(alpha=1.0, beta=0.0, gamma=0.0)
        assert seg_loss(p, target, weights) == pytest.approx(focal_loss(p, target), abs=1e-15)

    def test_default_weights_combination(self, rng):
        p = softmax_cols(rng.standard_normal((3, 12)))
        target = rng.integers(0, 3, size=12)
        expected = 0.4 * focal_loss(p, target) + 0.3 * dice_loss(p, target) + 0.3 * lovasz_loss(p, target)
        assert seg_loss(p, target) == pytest.approx(expected, abs=1e-14)

    def test_linear_in_weights(self, rng):
        p = softmax_cols(rng.standard_normal((3, 12)))
        target = rng.integers(0, 3, size=12)
        a = seg_loss(p, target, LossWeights(alpha=1.0, beta=0.0, gamma=0.0))
        b = seg_loss(p, target, LossWeights(alpha=0.0, beta=1.0, gamma=0.0))
        c = seg_loss(p, target, LossWeights(alpha=0.0, beta=0.0, gamma=1.0))
        mixed = seg_loss(p, target, LossWeights(alpha=0.2, beta=0.5, gamma=0.3))
        assert mixed == pytest.approx(0.2 * a + 0.5 * b + 0.3 * c, abs=1e-12)


class TestSimilarity:
    def test_identity_rows(self):
        eye = np.eye(3)
        assert np.allclose(similarity_matrix(eye, eye, tau=1.0, normalize=False), eye, atol=1e-15)

    def test_temperature_scales(self, rng):
        r_i = rng.standard_normal((4, 6))
        r_t = rng.standard_normal((4, 6))
        s1 = similarity_matrix(r_i, r_t, tau=1.0)
        s2 = similarity_matrix(r_i, r_t, tau=0.5)
        assert np.allclose(s2, 2.0 * s1, atol=1e-12)

    def test_matches_dot_product_oracle(self, rng):
        r_i = rng.standard_normal((3, 5))
        r_t = rng.standard_normal((3, 5))
        s = similarity_matrix(r_i, r_t, tau=0.7, normalize=False)
        for i in range(3):
            for j in range(3):
                expected = sum(r_i[i, a] * r_t[j, a] for a in range(5)) / 0.7
                assert s[i, j] == pytest.approx(expected, abs=1e-12)

    def test_accepts_embedding_batches(self):
        batch = EmbeddingBatch(values=np.eye(2))
        assert np.allclose(similarity_matrix(batch, batch, tau=1.0, normalize=False), np.eye(2))

    def test_rejects_bad_tau_and_shapes(self, rng):
        with pytest.raises(NonPositiveTau):
            similarity_matrix(np.eye(2), np.eye(2), tau=0.0)
        with pytest.raises(ShapeMismatch):
            similarity_matrix(np.eye(2), np.eye(3))


class TestContrastive:
    def test_batch_of_one_is_exactly_zero(self):
        losses = contrastive_loss(np.array([[3.7]]))
        assert losses.vt == 0.0 and losses.tv == 0.0 and losses.cot == 0.0

    def test_identity_closed_form(self):
        losses = contrastive_loss(np.eye(2))
        expected = math.log(1.0 + math.exp(-1.0))
        assert losses.vt == pytest.approx(expected, abs=1e-12)
        assert losses.tv == pytest.approx(expected, abs=1e-12)
        assert losses.cot == pytest.approx(expected, abs=1e-12)

    def test_symmetric_matrix_equalizes_directions(self, rng):
        s = rng.standard_normal((4, 4))
        s = 0.5 * (s + s.T)
        losses = contrastive_loss(s)
        assert losses.vt == pytest.approx(losses.tv, abs=1e-12)

    def test_matches_scalar_oracle(self, rng):
        s = rng.standard_normal((5, 5))
        vt, tv, cot = contrastive_scalar(s.tolist())
        losses = contrastive_loss(s)
        assert losses.vt == pytest.approx(vt, abs=1e-12)
        assert losses.tv == pytest.approx(tv, abs=1e-12)
        assert losses.cot == pytest.approx(cot, abs=1e-12)

    def test_shift_invariance(self, rng):
        s = rng.standard_normal((6, 6))
        base = contrastive_loss(s)
        shifted = contrastive_loss(s + 123.456)
        assert shifted.cot == pytest.approx(base.cot, abs=1e-10)
        assert shifted.vt == pytest.approx(base.vt, abs=1e-10)

    def test_non_negative_and_positive_for_finite_batches(self, rng):
        for _ in range(25):
            s = rng.standard_normal((4, 4)) * 3
            losses = contrastive_loss(s)
            assert losses.cot > 0.0

    def test_joint_permutation_invariance(self, rng):
        r_i = rng.standard_normal((5, 7))
        r_t = rng.standard_normal((5, 7))
        perm = rng.permutation(5)
        base = contrastive_loss(similarity_matrix(r_i, r_t))
        permuted = contrastive_loss(similarity_matrix(r_i[perm], r_t[perm]))
        assert permuted.cot == pytest.approx(base.cot, abs=1e-12)
        assert permuted.vt == pytest.approx(base.vt, abs=1e-12)


class TestTotal:
    def test_examples(self):
        assert total_loss(1.0, 0.0) == 1.0
        assert total_loss(0.0, 2.0) == 1.0

    def test_arithmetic_identity(self, rng):
        seg = float(rng.random())
        cot = float(rng.random())
        assert total_loss(seg, cot) == pytest.approx(seg + 0.5 * cot, abs=1e-15)


def test_validate_prob_map_contract():
    validate_prob_map(np.array([[0.25, 1.0], [0.75, 0.0]]))
    with pytest.raises(ValueError):
        validate_prob_map(np.array([[0.6, 0.6], [0.6, 0.4]]))
    with pytest.raises(ValueError):
        validate_prob_map(np.array([[-0.1, 1.0], [1.1, 0.0]]))
