"""Overlap metrics, per-position breakdowns, and paired significance testing.

All overlap metrics share one tokenizer: lowercase, ASCII punctuation
stripped, whitespace split. Keeping the tokenizer here and importing it
everywhere guarantees that splitting, alignment, and evaluation agree on
what a token is.
"""
from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from scipy import stats as _scipy_stats

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

#: Weight of recall relative to precision in the ROUGE-L F-score.
ROUGE_BETA = 1.2


def tokenize(text: str) -> list[str]:
    """Lowercase, strip ASCII punctuation, split on whitespace."""
    return text.translate(_PUNCT_TABLE).lower().split()


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence, O(len(a) * len(b))."""
    if not a or not b:
        return 0
    # Single-row dynamic program; prev holds the previous row of the table.
    prev = [0] * (len(b) + 1)
    for x in a:
        best = 0
        row = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                value = prev[j - 1] + 1
            else:
                value = max(row[-1], prev[j])
            row.append(value)
            best = max(best, value)
        prev = row
    return prev[-1]


def rouge_l(candidate: str, reference: str, beta: float = ROUGE_BETA) -> float:
    """ROUGE-L F-score between a candidate and a reference string.

    P = LCS/|candidate|, R = LCS/|reference|,
    F = (1 + beta^2) * P * R / (R + beta^2 * P).

    An empty candidate scores 0; an empty reference is an error because the
    score would be undefined.
    """
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        raise ValueError("rouge_l: empty reference")
    cand_tokens = tokenize(candidate)
    if not cand_tokens:
        return 0.0
    lcs = lcs_length(cand_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand_tokens)
    recall = lcs / len(ref_tokens)
    return ((1 + beta * beta) * precision * recall) / (recall + beta * beta * precision)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_2(candidate: str, reference: str) -> float:
    """Sentence BLEU truncated at bigrams.

    Geometric mean of unigram and bigram modified precision with a brevity
    penalty; the bigram term is add-one smoothed so that short candidates do
    not zero out the score.
    """
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        raise ValueError("bleu_2: empty reference")
    cand_tokens = tokenize(candidate)
    if not cand_tokens:
        return 0.0
    cand_uni = _ngrams(cand_tokens, 1)
    ref_uni = _ngrams(ref_tokens, 1)
    matched_uni = sum(min(c, ref_uni[g]) for g, c in cand_uni.items())
    p1 = matched_uni / len(cand_tokens)
    if p1 == 0.0:
        return 0.0
    cand_bi = _ngrams(cand_tokens, 2)
    ref_bi = _ngrams(ref_tokens, 2)
    matched_bi = sum(min(c, ref_bi[g]) for g, c in cand_bi.items())
    total_bi = max(len(cand_tokens) - 1, 0)
    p2 = (matched_bi + 1) / (total_bi + 1)
    if len(cand_tokens) > len(ref_tokens):
        brevity = 1.0
    else:
        brevity = math.exp(1 - len(ref_tokens) / len(cand_tokens))
    return brevity * math.sqrt(p1 * p2)


def macro_accuracy(predictions: Sequence[str], gold: Sequence[str]) -> float:
    """Unweighted mean of per-class accuracy over the classes observed in gold."""
    if len(predictions) != len(gold):
        raise ValueError(
            f"macro_accuracy: length mismatch ({len(predictions)} vs {len(gold)})"
        )
    if not gold:
        raise ValueError("macro_accuracy: empty inputs")
    per_class: dict[str, list[int]] = {}
    for pred, label in zip(predictions, gold):
        per_class.setdefault(label, []).append(int(pred == label))
    accuracies = [sum(hits) / len(hits) for hits in per_class.values()]
    return sum(accuracies) / len(accuracies)


@dataclass(frozen=True)
class PositionRow:
    """Mean score and support for one relative position (None = unknown)."""

    position: int | None
    mean_score: float
    count: int


def per_position_table(
    positions: Sequence[int | None], scores: Sequence[float]
) -> list[PositionRow]:
    """Group per-sample scores by relative position.

    Rows are sorted by position ascending with the unknown-position row, if
    any, last. The count-weighted mean of the rows equals the overall mean.
    """
    if len(positions) != len(scores):
        raise ValueError(
            f"per_position_table: length mismatch ({len(positions)} vs {len(scores)})"
        )
    grouped: dict[int | None, list[float]] = {}
    for pos, score in zip(positions, scores):
        grouped.setdefault(pos, []).append(score)
    keyed = sorted(
        (k for k in grouped if k is not None)
    )  # type: list[int]
    rows = [
        PositionRow(k, sum(grouped[k]) / len(grouped[k]), len(grouped[k]))
        for k in keyed
    ]
    if None in grouped:
        values = grouped[None]
        rows.append(PositionRow(None, sum(values) / len(values), len(values)))
    return rows


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test; returns (t statistic, p-value).

    The statistic is computed directly from the paired differences; only the
    Student-t tail probability is delegated to scipy. Identical difference
    vectors have no sampling variance, so they are rejected rather than
    reported as infinitely significant.
    """
    if len(a) != len(b):
        raise ValueError(f"paired_t_test: length mismatch ({len(a)} vs {len(b)})")
    n = len(a)
    if n < 2:
        raise ValueError("paired_t_test: need at least two pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        raise ValueError("paired_t_test: zero variance in differences")
    t_stat = mean / math.sqrt(var / n)
    p_value = 2.0 * float(_scipy_stats.t.sf(abs(t_stat), n - 1))
    return t_stat, p_value


@dataclass(frozen=True)
class ScoreReport:
    """Aggregate view of one metric over a set of samples."""

    metric: str
    per_sample: tuple[float, ...]
    aggregate: float
    by_position: tuple[PositionRow, ...] | None = None
    p_value: float | None = None


def build_report(
    metric: str,
    per_sample: Sequence[float],
    positions: Sequence[int | None] | None = None,
    baseline: Sequence[float] | None = None,
) -> ScoreReport:
    """Bundle per-sample scores into a report; aggregate is the arithmetic mean."""
    if not per_sample:
        raise ValueError("build_report: no per-sample scores")
    aggregate = sum(per_sample) / len(per_sample)
    table = None
    if positions is not None:
        table = tuple(per_position_table(positions, per_sample))
    p_value = None
    if baseline is not None:
        _, p_value = paired_t_test(per_sample, baseline)
    return ScoreReport(metric, tuple(per_sample), aggregate, table, p_value)
