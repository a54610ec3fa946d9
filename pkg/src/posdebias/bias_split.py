"""Bias-aware corpus partitioning.

Three notions of a position-biased sample are supported:

* relative position: the target grounds at utterance offset 0 or 1 from the
  utterance the previous answer grounds at (dialogue tasks),
* lead: the target grounds at the very first utterance (summarization-style
  tasks),
* lexical: the hypothesis contains a trigger word as a whole token (NLI).

Grounding means locating the document utterance that maximizes ROUGE-L
against a response; ties resolve to the smallest index.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .corpus import (
    Corpus,
    DIALOGUE_TASKS,
    Document,
    Sample,
    Task,
    make_document,
    render_input,
)
from .metrics import rouge_l, tokenize

#: Relative positions treated as biased unless the caller overrides them.
DEFAULT_BIASED_POSITIONS = frozenset({0, 1})


class BiasKind(str, Enum):
    RELATIVE_POSITION = "relative_position"
    LEAD = "lead"
    LEXICAL = "lexical"


@dataclass(frozen=True)
class GroundingResult:
    """Best-matching utterance index and its ROUGE-L score."""

    utterance_index: int
    score: float


@dataclass(frozen=True)
class BiasEvidence:
    """Why a sample landed in its partition side.

    Only the fields belonging to ``kind`` are populated; ``detail`` records
    degenerate cases (for example a missing anchor turn) that force a sample
    into the non-biased side.
    """

    kind: BiasKind
    biased: bool
    relative_position: int | None = None
    lead_score: float | None = None
    matched_triggers: tuple[str, ...] = ()
    detail: str | None = None


@dataclass(frozen=True)
class BiasPartition:
    """Disjoint biased/non-biased split of a corpus with per-sample evidence."""

    biased: Corpus
    non_biased: Corpus
    evidence: dict[str, BiasEvidence]


def ground_response(response: str, document: Document) -> GroundingResult:
    """Find the utterance maximizing ROUGE-L(response, utterance).

    Ties break toward the smallest index. Utterances that tokenize to nothing
    score 0 rather than erroring, so one odd utterance cannot poison a
    document.
    """
    if not tokenize(response):
        raise ValueError("ground_response: empty response")
    if len(document) == 0:
        raise ValueError("ground_response: empty document")
    best_index = 0
    best_score = -1.0
    for utt in document.utterances:
        if tokenize(utt.text):
            score = rouge_l(response, utt.text)
        else:
            score = 0.0
        if score > best_score:
            best_index = utt.index
            best_score = score
    return GroundingResult(best_index, max(best_score, 0.0))


def relative_position(sample: Sample) -> int:
    """Grounded index of the target minus grounded index of the last answer.

    Requires a document and at least one prior answered turn (the anchor).
    """
    if sample.document is None or len(sample.document) == 0:
        raise ValueError(f"relative_position: sample {sample.id!r} has no document")
    anchor = sample.last_answered_turn()
    if anchor is None:
        raise ValueError(f"relative_position: sample {sample.id!r} has no anchor turn")
    target_ground = ground_response(sample.target, sample.document)
    anchor_ground = ground_response(anchor.answer or "", sample.document)
    return target_ground.utterance_index - anchor_ground.utterance_index


def _partition(
    corpus: Corpus, flags: list[tuple[Sample, BiasEvidence]]
) -> BiasPartition:
    biased = tuple(s for s, ev in flags if ev.biased)
    non_biased = tuple(s for s, ev in flags if not ev.biased)
    return BiasPartition(
        biased=Corpus(biased, corpus.task),
        non_biased=Corpus(non_biased, corpus.task),
        evidence={s.id: ev for s, ev in flags},
    )


def split_by_relative_position(
    corpus: Corpus, biased_positions: frozenset[int] | set[int] = DEFAULT_BIASED_POSITIONS
) -> BiasPartition:
    """Partition a dialogue corpus by the relative position of each target.

    Samples whose relative position cannot be computed (no anchor turn, no
    document) are routed to the non-biased side with the reason recorded in
    the evidence.
    """
    if corpus.task not in DIALOGUE_TASKS:
        raise ValueError(
            f"split_by_relative_position: task {corpus.task.value!r} has no "
            "dialogue structure; expected one of "
            + ", ".join(t.value for t in DIALOGUE_TASKS)
        )
    if not biased_positions:
        raise ValueError("split_by_relative_position: empty biased position set")
    flags: list[tuple[Sample, BiasEvidence]] = []
    for sample in corpus:
        try:
            rel = relative_position(sample)
        except ValueError as exc:
            flags.append(
                (
                    sample,
                    BiasEvidence(
                        BiasKind.RELATIVE_POSITION, biased=False, detail=str(exc)
                    ),
                )
            )
            continue
        flags.append(
            (
                sample,
                BiasEvidence(
                    BiasKind.RELATIVE_POSITION,
                    biased=rel in biased_positions,
                    relative_position=rel,
                ),
            )
        )
    return _partition(corpus, flags)


def split_by_lead_bias(corpus: Corpus, min_lead_score: float = 0.0) -> BiasPartition:
    """Partition by whether the target grounds at the leading utterance.

    ``min_lead_score`` additionally requires the overlap with utterance 0 to
    reach a floor before a sample counts as biased; the default of 0 makes
    grounding alone decisive.
    """
    if corpus.task not in (Task.SUM, Task.KGC):
        raise ValueError(
            f"split_by_lead_bias: task {corpus.task.value!r} not lead-groundable"
        )
    flags: list[tuple[Sample, BiasEvidence]] = []
    for sample in corpus:
        if sample.document is None or len(sample.document) == 0:
            flags.append(
                (sample, BiasEvidence(BiasKind.LEAD, biased=False, detail="no document"))
            )
            continue
        grounded = ground_response(sample.target, sample.document)
        lead_utt = sample.document.utterances[0].text
        lead_score = rouge_l(sample.target, lead_utt) if tokenize(lead_utt) else 0.0
        biased = grounded.utterance_index == 0 and lead_score >= min_lead_score
        flags.append(
            (sample, BiasEvidence(BiasKind.LEAD, biased=biased, lead_score=lead_score))
        )
    return _partition(corpus, flags)


def split_by_lexical_bias(corpus: Corpus, triggers: list[str] | tuple[str, ...]) -> BiasPartition:
    """Partition NLI samples by whole-token trigger occurrence in the hypothesis."""
    if corpus.task != Task.NLI:
        raise ValueError("split_by_lexical_bias: corpus task must be nli")
    if not triggers:
        raise ValueError("split_by_lexical_bias: empty trigger list")
    trigger_tokens = [(t, tokenize(t)) for t in triggers]
    if any(not toks for _, toks in trigger_tokens):
        raise ValueError("split_by_lexical_bias: trigger tokenizes to nothing")
    flags: list[tuple[Sample, BiasEvidence]] = []
    for sample in corpus:
        hyp_tokens = tokenize(sample.nli_hypothesis or "")
        matched = tuple(
            trig
            for trig, toks in trigger_tokens
            if _contains_subsequence(hyp_tokens, toks)
        )
        flags.append(
            (
                sample,
                BiasEvidence(
                    BiasKind.LEXICAL, biased=bool(matched), matched_triggers=matched
                ),
            )
        )
    return _partition(corpus, flags)


def _contains_subsequence(tokens: list[str], phrase: list[str]) -> bool:
    """Whole-token contiguous containment; 'no' never matches inside 'nothing'."""
    if not phrase or len(phrase) > len(tokens):
        return False
    return any(
        tokens[i : i + len(phrase)] == phrase
        for i in range(len(tokens) - len(phrase) + 1)
    )


def perturb_positions(sample: Sample, seed: int) -> Sample:
    """Return a copy with document utterances uniformly permuted under seed.

    The target is untouched; the rendered input is refreshed to reflect the
    new utterance order. Single-utterance documents come back unchanged.
    """
    if sample.task == Task.NLI:
        raise ValueError("perturb_positions: nli samples have no utterance order")
    if sample.document is None:
        raise ValueError(f"perturb_positions: sample {sample.id!r} has no document")
    if len(sample.document) <= 1:
        return sample
    texts = sample.document.texts()
    rng = random.Random(seed)
    rng.shuffle(texts)
    document = make_document(texts)
    rendered = render_input(sample.task, document, sample.history)
    return replace(sample, document=document, input_text=rendered)


def write_evidence(partition: BiasPartition, path: str | Path) -> Path:
    """Dump per-sample evidence as JSONL, one record per sample id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for sample_id in sorted(partition.evidence):
            ev = partition.evidence[sample_id]
            record = {
                "id": sample_id,
                "kind": ev.kind.value,
                "biased": ev.biased,
            }
            if ev.relative_position is not None:
                record["relative_position"] = ev.relative_position
            if ev.lead_score is not None:
                record["lead_score"] = ev.lead_score
            if ev.matched_triggers:
                record["matched_triggers"] = list(ev.matched_triggers)
            if ev.detail:
                record["detail"] = ev.detail
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")
    return path
