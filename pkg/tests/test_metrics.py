"""
GroundKit - Metric Tests
Tests for Dice, accuracy, BLEU, METEOR and ROUGE-L against hand-computed values
"""

import math
import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from evaluation.metrics import (
    TextPair,
    accuracy,
    bleu,
    closest_reference_length,
    dice_score,
    lcs_length,
    meteor_precision,
    meteor_standard,
    metric_tokens,
    modified_precision,
    rouge_l,
    unigram_precision,
)


def square(shape=(6, 6), rows=slice(1, 4), cols=slice(1, 4)):
    mask = np.zeros(shape, dtype=np.uint8)
    mask[rows, cols] = 1
    return mask


class TestDice:
    """Test the Dice coefficient"""

    def test_identity(self):
        assert dice_score(square(), square()) == 1.0

    def test_disjoint(self):
        assert dice_score(square(rows=slice(0, 2)), square(rows=slice(4, 6))) == 0.0

    def test_partial_overlap(self):
        a = square(rows=slice(0, 1), cols=slice(0, 2))
        b = square(rows=slice(0, 1), cols=slice(1, 3))
        assert dice_score(a, b) == pytest.approx(0.5)

    def test_both_empty(self):
        empty = np.zeros((5, 5), dtype=np.uint8)
        assert dice_score(empty, empty) == 1.0

    def test_one_empty(self):
        assert dice_score(np.zeros((6, 6), np.uint8), square()) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = (rng.random((8, 8)) > 0.5).astype(np.uint8)
            b = (rng.random((8, 8)) > 0.5).astype(np.uint8)
            assert dice_score(a, b) == pytest.approx(dice_score(b, a))
            assert 0.0 <= dice_score(a, b) <= 1.0

    def test_monotone_true_positives(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            pred = (rng.random((8, 8)) > 0.6).astype(np.uint8)
            gt = (rng.random((8, 8)) > 0.5).astype(np.uint8)
            score = dice_score(pred, gt)
            for row, col in np.argwhere((gt == 1) & (pred == 0)):
                pred[row, col] = 1
                grown = dice_score(pred, gt)
                assert grown >= score - 1e-12
                score = grown

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            dice_score(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_non_binary(self):
        with pytest.raises(ValueError):
            dice_score(np.full((4, 4), 0.5), np.zeros((4, 4)))


class TestAccuracy:
    """Test exact-match accuracy"""

    def test_normalized_matches(self):
        preds = ["Lesion a", "lesion B", "no  findings", "organ a"]
        labels = ["lesion a", "Lesion b", "No findings", "lesion a"]
        assert accuracy(preds, labels) == pytest.approx(0.75)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy(["a"], ["a", "b"])

    def test_empty(self):
        with pytest.raises(ValueError):
            accuracy([], [])


class TestBleu:
    """Test BLEU-1..4"""

    def test_identity(self):
        pair = TextPair.of("lesion a with high intensity and oval shape", "lesion a with high intensity and oval shape")
        for n in range(1, 5):
            assert bleu(pair, n) == pytest.approx(1.0)

    def test_brevity_penalty(self):
        assert bleu(TextPair.of("the cat", "the cat sat"), 1) == pytest.approx(math.exp(-0.5))

    def test_zero_overlap(self):
        pair = TextPair.of("x y z", "a b c")
        assert all(bleu(pair, n) == 0.0 for n in range(1, 5))

    def test_shorter_than_order(self):
        assert bleu(TextPair.of("cat", "cat"), 2) == 0.0

    def test_add_one_smoothing(self):
        pair = TextPair.of("a b", "a c")
        assert bleu(pair, 2) == 0.0
        assert bleu(pair, 2, smoothing=True) == pytest.approx(math.sqrt(2.0 / 3.0 * 0.5))

    def test_clipped_counts(self):
        clipped, total = modified_precision(TextPair.of("the the the", "the cat"), 1)
        assert (clipped, total) == (1, 3)

    def test_closest_reference(self):
        pair = TextPair.of("a b c", "a", "a b c d", "a b")
        assert closest_reference_length(pair) == 2

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            bleu(TextPair.of("a", "a"), 5)

    def test_needs_reference(self):
        with pytest.raises(ValueError):
            TextPair.of("a")


class TestMeteor:
    """Test both METEOR variants"""

    def test_best_precision_over_hypotheses(self):
        assert meteor_precision(["a b"], ["a x", "y b c"]) == pytest.approx(0.5)

    def test_identity(self):
        assert meteor_precision(["organ a is present"], ["organ a is present"]) == pytest.approx(1.0)

    def test_no_overlap(self):
        assert meteor_precision(["a b"], ["c d"]) == 0.0

    def test_unigram_precision(self):
        assert unigram_precision(["a", "b"], ["a", "a", "c"]) == pytest.approx(1 / 3)
        assert unigram_precision(["a"], []) == 0.0

    def test_no_gold(self):
        with pytest.raises(ValueError):
            meteor_precision([], ["a"])

    def test_standard_fragmentation(self):
        assert meteor_standard(TextPair.of("a b c", "a b c")) == pytest.approx(1.0 - 0.5 / 27.0)
        assert meteor_standard(TextPair.of("x y", "a b")) == 0.0
        in_order = meteor_standard(TextPair.of("a b c d", "a b c d"))
        shuffled = meteor_standard(TextPair.of("d c b a", "a b c d"))
        assert shuffled < in_order


class TestRougeL:
    """Test LCS-based ROUGE-L"""

    def test_lcs(self):
        assert lcs_length(list("abcbdab"), list("bdcaba")) == 4
        assert lcs_length([], ["a"]) == 0

    def test_identity(self):
        assert rouge_l(TextPair.of("organ a", "organ a")) == pytest.approx((1.0, 1.0, 1.0))

    def test_zero(self):
        assert rouge_l(TextPair.of("x", "a b")) == (0.0, 0.0, 0.0)

    def test_weighted_f(self):
        recall, precision, f_score = rouge_l(TextPair.of("a b c d", "a c d"), 1.2)
        assert recall == pytest.approx(1.0)
        assert precision == pytest.approx(0.75)
        assert f_score == pytest.approx(0.8798, abs=1e-4)


class TestTokenization:
    """Test the shared metric tokenizer"""

    def test_punctuation_split(self):
        assert metric_tokens("Lesion A, oval.") == ["lesion", "a", ",", "oval", "."]

    def test_case_invariance(self):
        upper = TextPair.of("ORGAN A IS PRESENT", "organ a is present")
        assert bleu(upper, 4) == pytest.approx(1.0)
        assert rouge_l(upper)[2] == pytest.approx(1.0)
        print("✅ Metrics are case-insensitive")
