"""Canonical data model for dialogue-grounded tasks plus JSONL ingestion.

The corpus layer is deliberately task-agnostic: every downstream stage
(splitting, generation, alignment, training) consumes the same ``Sample``
shape, with task-specific fields left unset where they do not apply.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterator


class Task(str, Enum):
    """Supported task families."""

    CQA = "cqa"
    CQG = "cqg"
    KGC = "kgc"
    SUM = "sum"
    NLI = "nli"


#: Tasks whose samples carry a document plus dialogue history.
GENERATIVE_TASKS = (Task.CQA, Task.CQG, Task.KGC, Task.SUM)

#: Tasks for which a relative position between grounded turns is defined.
DIALOGUE_TASKS = (Task.CQA, Task.CQG)


class CorpusError(ValueError):
    """Raised when a corpus file or record violates the ingestion contract."""


@dataclass(frozen=True)
class Utterance:
    """One positioned unit of a source document."""

    index: int
    text: str


@dataclass(frozen=True)
class Document:
    """An ordered sequence of utterances.

    Construction does not reject degenerate documents; ``validate_sample``
    reports them so that malformed records can still be inspected.
    """

    utterances: tuple[Utterance, ...]

    def __len__(self) -> int:
        return len(self.utterances)

    def texts(self) -> list[str]:
        return [u.text for u in self.utterances]


def make_document(texts: list[str] | tuple[str, ...]) -> Document:
    """Build a document with contiguous utterance indices starting at 0."""
    return Document(tuple(Utterance(i, t) for i, t in enumerate(texts)))


@dataclass(frozen=True)
class DialogueTurn:
    """One question/answer exchange; the answer is absent for the current turn."""

    turn_index: int
    question: str
    answer: str | None = None


@dataclass(frozen=True)
class Sample:
    """A single task instance.

    ``document``/``history`` apply to the generative tasks, the ``nli_*``
    fields to NLI. ``input_text`` is the rendered model input; it is derived
    at load time when the record does not carry one. ``split`` is an optional
    bookkeeping label (train/dev/biased/...).
    """

    id: str
    task: Task
    target: str
    document: Document | None = None
    history: tuple[DialogueTurn, ...] = ()
    input_text: str = ""
    nli_premise: str | None = None
    nli_hypothesis: str | None = None
    split: str | None = None

    def current_question(self) -> str | None:
        """Question of the latest unanswered turn, if any."""
        for turn in reversed(self.history):
            if turn.answer is None:
                return turn.question
        return None

    def last_answered_turn(self) -> DialogueTurn | None:
        """Most recent prior turn that carries an answer."""
        for turn in reversed(self.history):
            if turn.answer is not None and turn.answer.strip():
                return turn
        return None


@dataclass(frozen=True)
class Corpus:
    """A homogeneous collection of samples with unique ids."""

    samples: tuple[Sample, ...]
    task: Task

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for sample in self.samples:
            if sample.task != self.task:
                raise CorpusError(
                    f"sample {sample.id!r} has task {sample.task.value!r}, "
                    f"corpus is {self.task.value!r}"
                )
            if sample.id in seen:
                raise CorpusError(f"duplicate sample id {sample.id!r}")
            seen.add(sample.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def get(self, sample_id: str) -> Sample:
        for sample in self.samples:
            if sample.id == sample_id:
                return sample
        raise KeyError(sample_id)


def render_input(
    task: Task,
    document: Document | None = None,
    history: tuple[DialogueTurn, ...] = (),
    nli_premise: str | None = None,
    nli_hypothesis: str | None = None,
) -> str:
    """Deterministically render the model input for a sample.

    The template is fixed so that serialized corpora round-trip and repeated
    runs produce identical prompts.
    """
    if task == Task.NLI:
        return f"premise: {nli_premise or ''}\nhypothesis: {nli_hypothesis or ''}"
    parts: list[str] = []
    if document is not None and len(document) > 0:
        parts.append("document: " + " | ".join(document.texts()))
    exchanges = [
        f"q: {t.question} a: {t.answer}" for t in history if t.answer is not None
    ]
    if exchanges:
        parts.append("history: " + " | ".join(exchanges))
    for turn in reversed(history):
        if turn.answer is None:
            parts.append(f"question: {turn.question}")
            break
    return "\n".join(parts)


def with_rendered_input(sample: Sample) -> Sample:
    if sample.input_text:
        return sample
    rendered = render_input(
        sample.task,
        sample.document,
        sample.history,
        sample.nli_premise,
        sample.nli_hypothesis,
    )
    return replace(sample, input_text=rendered)


def validate_sample(sample: Sample) -> list[str]:
    """Return a list of invariant violations; empty means the sample is valid."""
    violations: list[str] = []
    if not sample.id.strip():
        violations.append("empty id")
    if not sample.target.strip():
        violations.append("empty target")
    if sample.task == Task.NLI:
        if not (sample.nli_premise or "").strip():
            violations.append("missing nli_premise")
        if not (sample.nli_hypothesis or "").strip():
            violations.append("missing nli_hypothesis")
        if sample.document is not None:
            violations.append("document present for nli sample")
    else:
        if sample.document is None:
            violations.append("missing document")
        elif len(sample.document) < 1:
            violations.append("document length >= 1 required")
        else:
            for utt in sample.document.utterances:
                if not utt.text.strip():
                    violations.append(f"empty utterance at index {utt.index}")
            indices = [u.index for u in sample.document.utterances]
            if indices != list(range(len(indices))):
                violations.append("utterance indices not contiguous from 0")
    turn_indices = [t.turn_index for t in sample.history]
    if any(b <= a for a, b in zip(turn_indices, turn_indices[1:])):
        violations.append("history turn indices not strictly increasing")
    return violations


def _sample_from_record(record: dict, task: Task, line_no: int) -> Sample:
    def fail(message: str) -> CorpusError:
        return CorpusError(f"line {line_no}: {message}")

    if not isinstance(record, dict):
        raise fail("record is not a JSON object")
    for key in ("id", "task", "target"):
        if key not in record:
            raise fail(f"missing {key!r} field")
    try:
        record_task = Task(record["task"])
    except ValueError:
        raise fail(f"unknown task {record['task']!r}") from None
    if record_task != task:
        raise fail(
            f"task mismatch: record is {record_task.value!r}, expected {task.value!r}"
        )
    if not isinstance(record["id"], str):
        raise fail("'id' must be a string")
    if not isinstance(record["target"], str):
        raise fail("'target' must be a string")

    document = None
    history: tuple[DialogueTurn, ...] = ()
    premise = hypothesis = None
    if task == Task.NLI:
        for key in ("premise", "hypothesis"):
            if not isinstance(record.get(key), str):
                raise fail(f"missing or non-string {key!r} field")
        premise = record["premise"]
        hypothesis = record["hypothesis"]
    else:
        doc = record.get("document")
        if not isinstance(doc, list) or not all(isinstance(t, str) for t in doc):
            raise fail("'document' must be a list of strings")
        document = make_document(doc)
        turns = record.get("history", [])
        if not isinstance(turns, list):
            raise fail("'history' must be a list")
        built = []
        for i, turn in enumerate(turns):
            if not isinstance(turn, dict) or "question" not in turn:
                raise fail(f"history entry {i} must be an object with 'question'")
            answer = turn.get("answer")
            if answer is not None and not isinstance(answer, str):
                raise fail(f"history entry {i}: 'answer' must be a string or null")
            built.append(DialogueTurn(turn.get("turn_index", i), turn["question"], answer))
        history = tuple(built)

    sample = Sample(
        id=record["id"],
        task=task,
        target=record["target"],
        document=document,
        history=history,
        input_text=record.get("input_text", ""),
        nli_premise=premise,
        nli_hypothesis=hypothesis,
        split=record.get("split"),
    )
    return with_rendered_input(sample)


def load_corpus(path: str | Path, task: Task) -> Corpus:
    """Load a JSONL corpus, one record per line.

    Raises ``CorpusError`` naming the offending line for malformed JSON,
    schema violations, or task mismatches; empty files and invalid UTF-8 are
    rejected outright.
    """
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: not valid UTF-8: {exc}") from exc
    samples: list[Sample] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {line_no}: malformed JSON: {exc.msg}") from exc
        sample = _sample_from_record(record, task, line_no)
        if sample.id in seen:
            raise CorpusError(f"line {line_no}: duplicate sample id {sample.id!r}")
        seen.add(sample.id)
        samples.append(sample)
    if not samples:
        raise CorpusError(f"{path}: empty corpus")
    return Corpus(tuple(samples), task)


def sample_to_record(sample: Sample) -> dict:
    """Serialize one sample to a JSON-compatible record."""
    record: dict = {"id": sample.id, "task": sample.task.value}
    if sample.task == Task.NLI:
        record["premise"] = sample.nli_premise
        record["hypothesis"] = sample.nli_hypothesis
    else:
        record["document"] = sample.document.texts() if sample.document else []
        record["history"] = [
            {"turn_index": t.turn_index, "question": t.question, "answer": t.answer}
            for t in sample.history
        ]
    record["target"] = sample.target
    if sample.input_text:
        record["input_text"] = sample.input_text
    if sample.split is not None:
        record["split"] = sample.split
    return record


def save_corpus(corpus: Corpus, path: str | Path) -> Path:
    """Write a corpus as JSONL; inverse of ``load_corpus`` on valid corpora."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for sample in corpus:
            handle.write(json.dumps(sample_to_record(sample), ensure_ascii=False))
            handle.write("\n")
    return path


def corpus_stats(corpus: Corpus) -> dict[str, int]:
    """Counts of samples per split label; unlabeled samples pool together."""
    counts = Counter(s.split if s.split is not None else "unlabeled" for s in corpus)
    return dict(sorted(counts.items()))


def relabel(sample: Sample, split: str) -> Sample:
    return replace(sample, split=split)
