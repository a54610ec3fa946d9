"""Low-bias unsupervised response generation.

A pre-trained backend is prompted without any task-specific fine-tuning, so
its responses do not inherit the position bias of the training labels. Each
task has a default prompting strategy: plain instructions for answer-style
tasks, a set of diverse question-type prompts for question generation, and
in-context exemplars only for NLI. Overriding a default is possible but must
be explicit, since accidentally swapping strategies changes the experiment.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .backends import Backend, BackendError, GenerationResult
from .corpus import Corpus, Sample, Task


def _load_defaults() -> dict:
    with resources.files("posdebias.data").joinpath("defaults.json").open(
        "r", encoding="utf-8"
    ) as handle:
        return json.load(handle)


DEFAULTS = _load_defaults()

#: Question-type prompts used by the diverse strategy; user-replaceable.
DEFAULT_DIVERSE_PROMPTS: tuple[str, ...] = tuple(DEFAULTS["diverse_prompts"])

#: Per-task instruction lines used when the caller supplies none.
DEFAULT_INSTRUCTIONS: dict[Task, str] = {
    Task(k): v for k, v in DEFAULTS["instructions"].items()
}

#: How many exemplars the in-context strategy uses by default.
DEFAULT_ICL_K = 4

#: How many candidates to draw per prompt by default.
DEFAULT_N_PER_PROMPT = 3


class PromptStrategy(str, Enum):
    INSTRUCTION_ONLY = "instruction_only"
    DIVERSE = "diverse"
    ICL = "icl"


DEFAULT_STRATEGY_BY_TASK: dict[Task, PromptStrategy] = {
    Task.CQA: PromptStrategy.INSTRUCTION_ONLY,
    Task.KGC: PromptStrategy.INSTRUCTION_ONLY,
    Task.SUM: PromptStrategy.INSTRUCTION_ONLY,
    Task.CQG: PromptStrategy.DIVERSE,
    Task.NLI: PromptStrategy.ICL,
}


@dataclass(frozen=True)
class PromptSpec:
    """Strategy plus the text pieces it needs."""

    strategy: PromptStrategy
    instruction: str = ""
    diverse_prompts: tuple[str, ...] = ()
    exemplars: tuple[tuple[str, str], ...] = ()

    def validate(self) -> None:
        if self.strategy == PromptStrategy.INSTRUCTION_ONLY and not self.instruction.strip():
            raise ValueError("PromptSpec: instruction_only strategy needs an instruction")
        if self.strategy == PromptStrategy.DIVERSE and not self.diverse_prompts:
            raise ValueError("PromptSpec: diverse strategy needs diverse_prompts")
        if self.strategy == PromptStrategy.ICL and not self.exemplars:
            raise ValueError("PromptSpec: icl strategy needs at least one exemplar")


def default_prompt_spec(task: Task, corpus: Corpus | None = None) -> PromptSpec:
    """Spec implementing each task's default strategy.

    NLI needs a corpus to draw exemplars from (the first ``DEFAULT_ICL_K``
    samples in id order).
    """
    strategy = DEFAULT_STRATEGY_BY_TASK[task]
    instruction = DEFAULT_INSTRUCTIONS[task]
    if strategy == PromptStrategy.DIVERSE:
        return PromptSpec(strategy, instruction, diverse_prompts=DEFAULT_DIVERSE_PROMPTS)
    if strategy == PromptStrategy.ICL:
        if corpus is None:
            raise ValueError("default_prompt_spec: icl strategy needs a corpus for exemplars")
        return PromptSpec(strategy, instruction, exemplars=make_icl_exemplars(corpus))
    return PromptSpec(strategy, instruction)


def make_icl_exemplars(corpus: Corpus, k: int = DEFAULT_ICL_K) -> tuple[tuple[str, str], ...]:
    """First ``k`` samples by id order as (input, target) exemplar pairs."""
    if k < 1:
        raise ValueError("make_icl_exemplars: k must be >= 1")
    chosen = sorted(corpus, key=lambda s: s.id)[:k]
    return tuple((s.input_text, s.target) for s in chosen)


def build_prompt(
    sample: Sample, spec: PromptSpec, allow_strategy_mismatch: bool = False
) -> list[str]:
    """Render the prompt(s) for one sample under a strategy.

    Instruction-only and ICL yield exactly one prompt; diverse yields one per
    diverse prompt, in their given order. Using a non-default strategy for a
    task without ``allow_strategy_mismatch`` is an error.
    """
    spec.validate()
    default = DEFAULT_STRATEGY_BY_TASK[sample.task]
    if spec.strategy != default and not allow_strategy_mismatch:
        raise ValueError(
            f"build_prompt: strategy {spec.strategy.value!r} is not the default "
            f"for task {sample.task.value!r} ({default.value!r}); pass "
            "allow_strategy_mismatch=True to override"
        )
    if spec.strategy == PromptStrategy.INSTRUCTION_ONLY:
        return [f"{spec.instruction}\n\n{sample.input_text}"]
    if spec.strategy == PromptStrategy.DIVERSE:
        head = f"{spec.instruction}\n\n" if spec.instruction.strip() else ""
        return [f"{head}{dp}\n\n{sample.input_text}" for dp in spec.diverse_prompts]
    blocks = [spec.instruction] if spec.instruction.strip() else []
    for ex_input, ex_output in spec.exemplars:
        blocks.append(f"input: {ex_input}\noutput: {ex_output}")
    blocks.append(f"input: {sample.input_text}\noutput:")
    return ["\n\n".join(blocks)]


def generate(
    prompts: list[str],
    backend: Backend,
    n_per_prompt: int = DEFAULT_N_PER_PROMPT,
    seed: int = 0,
    max_tokens: int = 16,
    max_in_flight: int = 1,
) -> list[GenerationResult]:
    """Draw ``n_per_prompt`` candidates for every prompt.

    Results come back grouped by prompt order: the k-th candidate of prompt i
    sits at index ``i * n_per_prompt + k``. Candidate k uses seed ``seed + k``
    so outputs are a pure function of (prompt, seed) and never of list
    position. ``max_in_flight`` bounds concurrent backend requests; results
    are reassembled in deterministic order regardless.
    """
    if n_per_prompt < 1:
        raise ValueError("generate: n_per_prompt must be >= 1")
    if not prompts:
        return []

    def run_one(job: tuple[int, int, str]) -> GenerationResult:
        index, k, prompt = job
        try:
            return backend.complete(prompt, max_tokens=max_tokens, seed=seed + k)
        except BackendError as exc:
            raise BackendError(
                f"prompt {index}: {exc}", retryable=exc.retryable, prompt_index=index
            ) from exc

    jobs = [(i, k, p) for i, p in enumerate(prompts) for k in range(n_per_prompt)]
    if max_in_flight <= 1:
        return [run_one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(run_one, jobs))


@dataclass(frozen=True)
class ClassDistribution:
    """A normalized distribution over NLI classes with a selection mask.

    ``masked`` is the elementwise product of ``probs`` and ``mask``;
    ``selected_index`` is the argmax over the unmasked entries with ties
    resolved to the smallest index.
    """

    classes: tuple[str, ...]
    probs: tuple[float, ...]
    mask: tuple[int, ...]
    masked: tuple[float, ...]
    selected_index: int

    def __post_init__(self) -> None:
        n = len(self.classes)
        if not (len(self.probs) == len(self.mask) == len(self.masked) == n):
            raise ValueError("ClassDistribution: parallel fields have unequal lengths")
        if n < 1:
            raise ValueError("ClassDistribution: no classes")
        if any(m not in (0, 1) for m in self.mask):
            raise ValueError("ClassDistribution: mask entries must be 0 or 1")
        if not any(self.mask):
            raise ValueError("ClassDistribution: all classes masked out")
        if any(p < 0 for p in self.probs):
            raise ValueError("ClassDistribution: negative probability")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"ClassDistribution: probs sum to {sum(self.probs)}, not 1")
        for p, m, pm in zip(self.probs, self.mask, self.masked):
            if pm != p * m:
                raise ValueError("ClassDistribution: masked != probs * mask")
        expected = _masked_argmax(self.masked, self.mask)
        if self.selected_index != expected:
            raise ValueError(
                f"ClassDistribution: selected_index {self.selected_index} "
                f"inconsistent with masked argmax {expected}"
            )

    def selected_class(self) -> str:
        return self.classes[self.selected_index]


def _masked_argmax(masked: tuple[float, ...], mask: tuple[int, ...]) -> int:
    best_index = -1
    best_value = -math.inf
    for i, (value, m) in enumerate(zip(masked, mask)):
        if m == 1 and value > best_value:
            best_index = i
            best_value = value
    return best_index


def make_class_distribution(classes: tuple[str, ...], probs: tuple[float, ...]) -> ClassDistribution:
    """Distribution with an all-ones mask (nothing excluded yet)."""
    mask = (1,) * len(classes)
    return ClassDistribution(
        classes=classes,
        probs=probs,
        mask=mask,
        masked=probs,
        selected_index=_masked_argmax(probs, mask),
    )


def nli_class_distribution(
    sample: Sample,
    classes: tuple[str, ...] | list[str],
    backend: Backend,
    prompt: str | None = None,
) -> ClassDistribution:
    """Score each class string under the backend and normalize.

    The class probability is the product of its token probabilities under
    the backend, accumulated in log space; normalization divides by the sum
    over classes, so any common scaling of the raw scores cancels.
    """
    if sample.task != Task.NLI:
        raise ValueError("nli_class_distribution: sample task must be nli")
    classes = tuple(classes)
    if not classes:
        raise ValueError("nli_class_distribution: empty class set")
    if len(set(classes)) != len(classes):
        raise ValueError("nli_class_distribution: duplicate class names")
    if prompt is None:
        instruction = DEFAULT_INSTRUCTIONS[Task.NLI]
        prompt = f"{instruction}\n\n{sample.input_text}\nanswer:"
    log_scores = []
    for cls in classes:
        result = backend.score(prompt, cls)
        log_scores.append(sum(result.token_logprobs))
    peak = max(log_scores)
    unnormalized = [math.exp(s - peak) for s in log_scores]
    total = sum(unnormalized)
    probs = tuple(u / total for u in unnormalized)
    return make_class_distribution(classes, probs)
