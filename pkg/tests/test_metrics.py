"""Overlap metrics against independent oracles, plus significance testing.

Expected values marked "frozen" were computed with the reference
implementations in oracles.py before being hard-coded here.
"""
from __future__ import annotations

import math
import random

import pytest
from scipy import stats as scipy_stats

from posdebias.metrics import (
    PositionRow,
    bleu_2,
    build_report,
    lcs_length,
    macro_accuracy,
    paired_t_test,
    per_position_table,
    rouge_l,
    tokenize,
)

from oracles import bleu_2_oracle, lcs_recursive, rouge_l_oracle


class TestTokenize:
    def test_lowercase_punctuation_whitespace(self):
        assert tokenize("The CAT, sat!") == ["the", "cat", "sat"]

    def test_punctuation_deleted_not_split(self):
        # "don't" collapses to "dont"; punctuation never creates a boundary.
        assert tokenize("don't stop") == ["dont", "stop"]

    def test_empty_and_punctuation_only(self):
        assert tokenize("") == []
        assert tokenize("?!...") == []


class TestLcs:
    def test_known_value(self):
        # frozen: recursive oracle gives 4 for this classic pair
        assert lcs_length(tuple("abcbdab"), tuple("bdcaba")) == 4

    def test_empty(self):
        assert lcs_length((), ("a",)) == 0
        assert lcs_length(("a",), ()) == 0

    def test_matches_recursive_oracle_random(self):
        rng = random.Random(7)
        vocab = ["a", "b", "c", "d", "e"]
        for _ in range(300):
            a = tuple(rng.choice(vocab) for _ in range(rng.randint(0, 8)))
            b = tuple(rng.choice(vocab) for _ in range(rng.randint(0, 8)))
            assert lcs_length(a, b) == lcs_recursive(a, b)


class TestRougeL:
    def test_prefix_example(self):
        # frozen: LCS 3, P 1.0, R 0.75, beta 1.2 -> 0.8356164383561644
        assert rouge_l("the cat sat", "the cat sat down") == pytest.approx(
            0.8356164383561644, abs=1e-15
        )

    def test_identical(self):
        assert rouge_l("a b c", "a b c") == 1.0

    def test_disjoint(self):
        assert rouge_l("a b", "x y") == 0.0

    def test_subsequence(self):
        # frozen: P = R = 2/3 so F = 2/3 regardless of beta
        assert rouge_l("a x c", "a b c") == pytest.approx(2 / 3, abs=1e-15)

    def test_empty_candidate_scores_zero(self):
        assert rouge_l("", "a b") == 0.0
        assert rouge_l("!!!", "a b") == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError, match="empty reference"):
            rouge_l("a b", "")

    def test_tokenizer_is_shared(self):
        assert rouge_l("The CAT sat.", "the cat sat") == 1.0

    def test_matches_oracle_random(self):
        rng = random.Random(11)
        vocab = ["a", "b", "c", "d", "e"]
        for _ in range(300):
            cand = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
            ref = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
            assert rouge_l(cand, ref) == rouge_l_oracle(
                tuple(cand.split()), tuple(ref.split())
            )


class TestBleu2:
    def test_identical(self):
        assert bleu_2("the cat sat", "the cat sat") == 1.0

    def test_shorter_candidate_brevity(self):
        # frozen: p1 = 1, p2 = (2+1)/(2+1), brevity exp(1 - 4/3)
        assert bleu_2("the cat sat", "the cat sat down") == pytest.approx(
            0.7165313105737893, abs=1e-15
        )

    def test_one_token_differs(self):
        # frozen: p1 = 2/3, p2 = (1+1)/(2+1), brevity 1 -> sqrt(4/9) = 2/3
        assert bleu_2("a b c", "a b d") == pytest.approx(2 / 3, abs=1e-15)

    def test_right_tokens_wrong_order(self):
        # frozen: p1 = 1, no bigram matches -> p2 = 1/3, score sqrt(1/3)
        assert bleu_2("cat the sat", "the cat sat") == pytest.approx(
            0.5773502691896257, abs=1e-15
        )

    def test_no_unigram_overlap(self):
        assert bleu_2("x y", "a b") == 0.0

    def test_empty_candidate(self):
        assert bleu_2("", "a b") == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError, match="empty reference"):
            bleu_2("a b", "")

    def test_matches_oracle_random(self):
        rng = random.Random(13)
        vocab = ["a", "b", "c", "d", "e"]
        for _ in range(300):
            cand = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
            ref = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
            assert bleu_2(cand, ref) == pytest.approx(
                bleu_2_oracle(tuple(cand.split()), tuple(ref.split())), abs=1e-12
            )


class TestMacroAccuracy:
    def test_hand_counted_example(self):
        # frozen: class A 2/3 correct, class B 1/1 -> (2/3 + 1)/2 = 5/6
        gold = ["A", "A", "A", "B"]
        pred = ["A", "A", "B", "B"]
        assert macro_accuracy(pred, gold) == pytest.approx(5 / 6, abs=1e-15)

    def test_perfect_and_zero(self):
        assert macro_accuracy(["x", "y"], ["x", "y"]) == 1.0
        assert macro_accuracy(["y", "x"], ["x", "y"]) == 0.0

    def test_classes_from_gold_only(self):
        # A spurious predicted class must not contribute a denominator class.
        assert macro_accuracy(["C", "A"], ["A", "A"]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            macro_accuracy(["A"], ["A", "B"])

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            macro_accuracy([], [])


class TestPerPositionTable:
    def test_grouping_and_order(self):
        rows = per_position_table([1, 0, 1, None, -2], [1.0, 0.0, 0.0, 0.5, 1.0])
        assert rows == [
            PositionRow(-2, 1.0, 1),
            PositionRow(0, 0.0, 1),
            PositionRow(1, 0.5, 2),
            PositionRow(None, 0.5, 1),
        ]

    def test_weighted_mean_matches_overall(self):
        rng = random.Random(3)
        positions = [rng.choice([None, -1, 0, 1, 2]) for _ in range(50)]
        scores = [rng.random() for _ in range(50)]
        rows = per_position_table(positions, scores)
        pooled = sum(r.mean_score * r.count for r in rows) / sum(r.count for r in rows)
        assert pooled == pytest.approx(sum(scores) / len(scores), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            per_position_table([0], [1.0, 2.0])


class TestPairedTTest:
    def test_matches_scipy_oracle(self):
        rng = random.Random(5)
        for _ in range(50):
            n = rng.randint(3, 40)
            a = [rng.gauss(0.5, 0.2) for _ in range(n)]
            b = [rng.gauss(0.45, 0.2) for _ in range(n)]
            t_stat, p_value = paired_t_test(a, b)
            expected = scipy_stats.ttest_rel(a, b)
            assert t_stat == pytest.approx(float(expected.statistic), rel=1e-10)
            assert p_value == pytest.approx(float(expected.pvalue), rel=1e-10)

    def test_large_consistent_difference_is_significant(self):
        rng = random.Random(9)
        a = [1.0 + rng.gauss(0, 0.01) for _ in range(100)]
        b = [0.5 + rng.gauss(0, 0.01) for _ in range(100)]
        _, p_value = paired_t_test(a, b)
        assert p_value < 0.001

    def test_null_p_values_uniform(self):
        # Under the null, p-values are Uniform(0,1); check via one-sample KS.
        p_values = []
        for trial in range(1000):
            rng = random.Random(10_000 + trial)
            a = [rng.gauss(0, 1) for _ in range(12)]
            b = [rng.gauss(0, 1) for _ in range(12)]
            p_values.append(paired_t_test(a, b)[1])
        ks = scipy_stats.kstest(p_values, "uniform")
        assert ks.statistic < 0.05

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="zero variance"):
            paired_t_test([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])

    def test_too_short(self):
        with pytest.raises(ValueError, match="at least two"):
            paired_t_test([1.0], [2.0])


class TestBuildReport:
    def test_aggregate_is_mean(self):
        report = build_report("accuracy", [1.0, 0.0, 1.0, 1.0])
        assert report.aggregate == 0.75
        assert report.by_position is None
        assert report.p_value is None

    def test_with_positions_and_baseline(self):
        rng = random.Random(21)
        scores = [rng.random() for _ in range(20)]
        baseline = [s - 0.3 + rng.gauss(0, 0.01) for s in scores]
        positions = [rng.choice([0, 1, 2]) for _ in range(20)]
        report = build_report("rouge_l", scores, positions=positions, baseline=baseline)
        assert sum(r.count for r in report.by_position) == 20
        assert report.p_value < 0.001

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no per-sample"):
            build_report("accuracy", [])


def test_nll_examples_are_consistent_with_math():
    # Shared arithmetic reference for the loss tests: ln 2 and ln 2 + ln 4.
    assert -math.log(0.5) == pytest.approx(0.6931471805599453, abs=1e-16)
    assert -(math.log(0.5) + math.log(0.25)) == pytest.approx(2.0794415416798357, abs=1e-15)
