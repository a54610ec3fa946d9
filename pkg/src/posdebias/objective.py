"""Multi-objective loss: task negative log-likelihood plus an alignment term.

The combined loss is the convex combination

    combined = (1 - alpha) * l_target + alpha * l_align

where ``l_target`` scores the reference response and ``l_align`` scores the
kept unsupervised responses (or, for NLI, the backend-weighted selected
class). When a sample has no alignment signal the combined loss is exactly
the target loss, not a down-weighted copy of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import Task
from .lowbias_infer import ClassDistribution
from .msa_align import AlignedResponse


def default_alpha(task: Task, dataset: str | None = None) -> float:
    """Recommended alignment weight per task.

    0.2 for NLI, KGC, and CQA on the coqar dataset; 0.1 elsewhere.
    """
    if task in (Task.NLI, Task.KGC):
        return 0.2
    if task == Task.CQA and (dataset or "").lower() == "coqar":
        return 0.2
    return 0.1


@dataclass(frozen=True)
class LossConfig:
    """Weighting between the target and alignment objectives."""

    alpha: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"LossConfig: alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-sample loss terms; ``l_align`` is None when nothing aligned."""

    l_target: float
    l_align: float | None
    combined: float
    alpha: float


def nll(logprobs: Sequence[float]) -> float:
    """Negative log-likelihood of a token sequence: minus the logprob sum."""
    if len(logprobs) == 0:
        raise ValueError("nll: empty logprob sequence")
    total = 0.0
    for lp in logprobs:
        if not math.isfinite(lp):
            raise ValueError(f"nll: non-finite logprob {lp}")
        if lp > 0.0:
            raise ValueError(f"nll: positive logprob {lp}")
        total += lp
    return -total


def nll_grad(logprobs: Sequence[float]) -> list[float]:
    """Gradient of ``nll`` with respect to each logprob: -1 per position."""
    if len(logprobs) == 0:
        raise ValueError("nll_grad: empty logprob sequence")
    return [-1.0] * len(logprobs)


def loss_term_weights(config: LossConfig, align_present: bool) -> tuple[float, float]:
    """Weights (target, align) applied to the two loss terms and their gradients."""
    if not align_present:
        return 1.0, 0.0
    return 1.0 - config.alpha, config.alpha


def combined_loss(
    l_target: float, l_align: float | None, config: LossConfig
) -> LossBreakdown:
    """Convex combination of the two loss terms.

    At alpha 0 or 1 the result equals the corresponding term exactly; for
    interior alpha the result is nudged into [min, max] of the two terms so
    the convexity bound survives floating-point rounding.
    """
    if not math.isfinite(l_target):
        raise ValueError(f"combined_loss: non-finite l_target {l_target}")
    if l_align is None:
        return LossBreakdown(l_target, None, l_target, config.alpha)
    if not math.isfinite(l_align):
        raise ValueError(f"combined_loss: non-finite l_align {l_align}")
    alpha = config.alpha
    combined = (1.0 - alpha) * l_target + alpha * l_align
    low, high = min(l_target, l_align), max(l_target, l_align)
    combined = min(max(combined, low), high)
    return LossBreakdown(l_target, l_align, combined, alpha)


def nli_align_loss(dist: ClassDistribution, model_class_logprob: float) -> float:
    """Alignment loss for NLI: backend weight times model surprisal.

    The weight is the backend probability of the selected (masked-argmax)
    class before masking; the surprisal is the trained model's logprob for
    that class.
    """
    if not math.isfinite(model_class_logprob):
        raise ValueError(f"nli_align_loss: non-finite logprob {model_class_logprob}")
    if model_class_logprob > 0.0:
        raise ValueError(f"nli_align_loss: positive logprob {model_class_logprob}")
    weight = dist.probs[dist.selected_index]
    return -weight * model_class_logprob


def multi_response_align_loss(kept: Sequence[AlignedResponse]) -> float:
    """Mean NLL over kept responses scored under the current model.

    The ``token_logprobs`` on each response must be model scores (not the
    generation-time backend scores); the caller rescoring before invoking
    this is what ties the alignment term to the model being trained.
    """
    if len(kept) == 0:
        raise ValueError("multi_response_align_loss: no kept responses")
    for response in kept:
        if not response.kept:
            raise ValueError(
                f"multi_response_align_loss: response for sample "
                f"{response.sample_id!r} was rejected"
            )
    return sum(nll(r.token_logprobs) for r in kept) / len(kept)
