"""Shared fixtures: small hand-built corpora with known properties."""
from __future__ import annotations

import pytest

from posdebias.corpus import (
    Corpus,
    DialogueTurn,
    Sample,
    Task,
    make_document,
    with_rendered_input,
)


def dialogue_sample(
    sample_id: str,
    utterances: list[str],
    prev_question: str,
    prev_answer: str,
    question: str,
    target: str,
    task: Task = Task.CQA,
) -> Sample:
    """One two-turn dialogue sample: an answered turn then the current turn."""
    return with_rendered_input(
        Sample(
            id=sample_id,
            task=task,
            target=target,
            document=make_document(utterances),
            history=(
                DialogueTurn(0, prev_question, prev_answer),
                DialogueTurn(1, question, None),
            ),
        )
    )


def nli_sample(sample_id: str, premise: str, hypothesis: str, label: str) -> Sample:
    return with_rendered_input(
        Sample(
            id=sample_id,
            task=Task.NLI,
            target=label,
            nli_premise=premise,
            nli_hypothesis=hypothesis,
        )
    )


@pytest.fixture
def planted_relpos_corpus() -> tuple[Corpus, set[str], dict[str, int]]:
    """Dialogue corpus with hand-planted relative positions.

    Documents use disjoint token sets per utterance so grounding is
    unambiguous. Returns (corpus, expected-biased ids, expected rel-pos).
    """
    utterances = [
        "alpha alpha one",
        "bravo bravo two",
        "carol carol three",
        "delta delta four",
        "echo echo five",
    ]
    # (id, previous answer grounded at, target grounded at)
    layout = [
        ("s0", 1, 1),  # rel 0 -> biased
        ("s1", 2, 3),  # rel +1 -> biased
        ("s2", 3, 1),  # rel -2
        ("s3", 0, 4),  # rel +4
        ("s4", 4, 0),  # rel -4
        ("s5", 2, 2),  # rel 0 -> biased
    ]
    samples = []
    expected_rel = {}
    for sid, prev_idx, tgt_idx in layout:
        samples.append(
            dialogue_sample(
                sid,
                utterances,
                prev_question="earlier question",
                prev_answer=utterances[prev_idx],
                question="current question",
                target=utterances[tgt_idx],
            )
        )
        expected_rel[sid] = tgt_idx - prev_idx
    corpus = Corpus(tuple(samples), Task.CQA)
    biased_ids = {sid for sid, rel in expected_rel.items() if rel in (0, 1)}
    return corpus, biased_ids, expected_rel
