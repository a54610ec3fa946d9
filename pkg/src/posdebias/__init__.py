"""Self-supervised position debiasing toolkit.

Splits corpora by position-bias evidence, generates low-bias candidate
responses with prompt-side mitigations, prunes them with multi-strategy
alignment gates, and fine-tunes against a target/alignment mixture loss.
Includes a synthetic end-to-end demonstration on a toy sequence model.
"""
from .backends import (
    BackendError,
    GenerationResult,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    StubBackend,
    StubMode,
    resolve_backend,
)
from .bias_split import (
    BiasEvidence,
    BiasKind,
    BiasPartition,
    GroundingResult,
    ground_response,
    perturb_positions,
    relative_position,
    split_by_lead_bias,
    split_by_lexical_bias,
    split_by_relative_position,
    write_evidence,
)
from .corpus import (
    Corpus,
    CorpusError,
    DialogueTurn,
    Document,
    Sample,
    Task,
    Utterance,
    corpus_stats,
    load_corpus,
    make_document,
    render_input,
    save_corpus,
    validate_sample,
)
from .lowbias_infer import (
    ClassDistribution,
    PromptSpec,
    PromptStrategy,
    build_prompt,
    default_prompt_spec,
    generate,
    make_class_distribution,
    nli_class_distribution,
)
from .metrics import (
    ScoreReport,
    bleu_2,
    build_report,
    lcs_length,
    macro_accuracy,
    paired_t_test,
    per_position_table,
    rouge_l,
    tokenize,
)
from .msa_align import (
    AlignedResponse,
    AlignmentConfig,
    RejectionReason,
    align_responses,
    calibrate_threshold,
    identify_dull,
    identify_incoherent,
    identify_noncompliant,
    identify_unreliable,
    nli_mask,
)
from .objective import (
    LossBreakdown,
    LossConfig,
    combined_loss,
    default_alpha,
    multi_response_align_loss,
    nli_align_loss,
    nll,
)
from .pipeline import CONFIG_SCHEMA, PipelineConfig, PipelineError, parse_config, run_pipeline
from .toy_model import (
    SynthSpec,
    ToyModel,
    TrainingDivergedError,
    evaluate,
    finite_diff_check,
    generate_response,
    load_model,
    save_model,
    score_tokens,
    synth_corpus,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedResponse",
    "AlignmentConfig",
    "BackendError",
    "BiasEvidence",
    "BiasKind",
    "BiasPartition",
    "CONFIG_SCHEMA",
    "ClassDistribution",
    "Corpus",
    "CorpusError",
    "DialogueTurn",
    "Document",
    "GenerationResult",
    "GroundingResult",
    "HttpBackend",
    "LossBreakdown",
    "LossConfig",
    "PipelineConfig",
    "PipelineError",
    "PromptSpec",
    "PromptStrategy",
    "RecordingBackend",
    "RejectionReason",
    "ReplayBackend",
    "Sample",
    "ScoreReport",
    "StubBackend",
    "StubMode",
    "SynthSpec",
    "Task",
    "ToyModel",
    "TrainingDivergedError",
    "Utterance",
    "align_responses",
    "bleu_2",
    "build_prompt",
    "build_report",
    "calibrate_threshold",
    "combined_loss",
    "corpus_stats",
    "default_alpha",
    "default_prompt_spec",
    "evaluate",
    "finite_diff_check",
    "generate",
    "generate_response",
    "ground_response",
    "identify_dull",
    "identify_incoherent",
    "identify_noncompliant",
    "identify_unreliable",
    "lcs_length",
    "load_corpus",
    "load_model",
    "macro_accuracy",
    "make_class_distribution",
    "make_document",
    "multi_response_align_loss",
    "nli_align_loss",
    "nli_class_distribution",
    "nli_mask",
    "nll",
    "paired_t_test",
    "parse_config",
    "per_position_table",
    "perturb_positions",
    "relative_position",
    "render_input",
    "resolve_backend",
    "rouge_l",
    "run_pipeline",
    "save_corpus",
    "save_model",
    "score_tokens",
    "split_by_lead_bias",
    "split_by_lexical_bias",
    "split_by_relative_position",
    "synth_corpus",
    "tokenize",
    "train",
    "validate_sample",
    "write_evidence",
]
