"""End-to-end orchestration with a checksummed run manifest.

Two modes share the same stage machinery:

* toy mode (``synth`` configured): generate a synthetic corpus, split the
  eval pool, draw low-bias candidates from the stub backend, align them,
  train the configured systems, evaluate, and report;
* data mode (``corpus`` configured): split a user corpus, draw and align
  candidates, and report partition and alignment statistics.

Every stage appends its artifacts (with SHA-256 checksums) to
``manifest.json`` as soon as it finishes, so a failed run preserves all
artifacts produced before the failure and marks the failing stage.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import report as report_mod
from .backends import StubBackend, StubMode, resolve_backend
from .bias_split import (
    DEFAULT_BIASED_POSITIONS,
    BiasPartition,
    perturb_positions,
    split_by_lead_bias,
    split_by_lexical_bias,
    split_by_relative_position,
    write_evidence,
)
from .corpus import Corpus, Task, load_corpus, relabel, save_corpus
from .lowbias_infer import build_prompt, default_prompt_spec, generate
from .msa_align import (
    DEFAULT_LEXICAL_TRIGGERS,
    AlignedResponse,
    AlignmentConfig,
    align_responses,
    calibrate_threshold,
    gate_statistic,
)
from .objective import LossConfig
from .toy_model import (
    SynthSpec,
    ToyModel,
    build_lowbias_table,
    evaluate,
    save_model,
    synth_corpus,
    train,
)


class PipelineError(RuntimeError):
    """A stage failed; the manifest records which one."""


CONFIG_SCHEMA: dict = {
    "type": "object",
    "description": "Pipeline run configuration; exactly one of 'synth' or 'corpus' must be set.",
    "properties": {
        "out_dir": {"type": "string", "description": "Directory for artifacts and manifest."},
        "task": {"type": "string", "enum": [t.value for t in Task], "default": "cqa"},
        "synth": {
            "type": "object",
            "description": "Synthetic corpus shape (toy mode).",
            "properties": {
                "n_utterances": {"type": "integer", "default": 6},
                "n_train": {"type": "integer", "default": 500},
                "n_eval": {"type": "integer", "default": 500},
                "biased_fraction": {"type": "number", "default": 0.95},
                "vocab_size": {"type": "integer", "default": 24},
                "seed": {"type": "integer", "default": 0},
            },
        },
        "corpus": {"type": "string", "description": "JSONL corpus path (data mode)."},
        "bias": {
            "type": "string",
            "enum": ["relative_position", "lead", "lexical"],
            "default": "relative_position",
        },
        "biased_positions": {"type": "array", "items": {"type": "integer"}, "default": [0, 1]},
        "triggers": {"type": "array", "items": {"type": "string"}},
        "seeds": {"type": "array", "items": {"type": "integer"}, "default": [0]},
        "systems": {
            "type": "array",
            "items": {"type": "string", "enum": ["ft", "zoe", "rp"]},
            "default": ["ft", "zoe"],
        },
        "alphas": {"type": "array", "items": {"type": "number"}, "default": [0.2]},
        "train_sizes": {
            "type": "array",
            "items": {"type": "integer"},
            "description": "Optional training-size sweep; incompatible with a multi-alpha sweep.",
        },
        "epochs": {"type": "integer", "default": 28},
        "learning_rate": {"type": "number", "default": 0.1},
        "clip_norm": {"type": "number", "default": 1.0},
        "n_per_prompt": {"type": "integer", "default": 3},
        "max_tokens": {"type": "integer", "default": 16},
        "garbage_rate": {"type": "number", "default": 0.25},
        "metric": {"type": "string", "enum": ["accuracy", "rouge_l"], "default": "accuracy"},
        "backend": {
            "type": "string",
            "description": "Backend spec: echo | markov | table | table:FILE | replay:FILE | url:ENDPOINT. "
            "Toy mode defaults to an internally built lookup table. "
            "POSDEBIAS_BACKEND_URL overrides any configured endpoint.",
            "default": "table",
        },
        "calibrate": {"type": "boolean", "default": True},
        "align": {
            "type": "object",
            "description": "AlignmentConfig overrides.",
            "properties": {
                "instruction_keywords": {"type": "array", "items": {"type": "string"}},
                "dull_patterns": {"type": "array", "items": {"type": "string"}},
                "incoherence_threshold": {"type": "number", "default": 0.15},
                "unreliable_threshold": {"type": "number", "default": 0.15},
                "candidate_thresholds": {"type": "array", "items": {"type": "number"}, "default": [0.1, 0.15, 0.2]},
                "target_keep_fraction": {"type": "number", "default": 0.2},
            },
        },
    },
    "required": ["out_dir"],
}

_KNOWN_KEYS = set(CONFIG_SCHEMA["properties"])


@dataclass
class PipelineConfig:
    out_dir: str
    task: Task = Task.CQA
    synth: SynthSpec | None = None
    corpus: str | None = None
    bias: str = "relative_position"
    biased_positions: frozenset[int] = DEFAULT_BIASED_POSITIONS
    triggers: tuple[str, ...] = DEFAULT_LEXICAL_TRIGGERS
    seeds: tuple[int, ...] = (0,)
    systems: tuple[str, ...] = ("ft", "zoe")
    alphas: tuple[float, ...] = (0.2,)
    train_sizes: tuple[int, ...] | None = None
    epochs: int = 28
    learning_rate: float = 0.1
    clip_norm: float = 1.0
    n_per_prompt: int = 3
    max_tokens: int = 16
    garbage_rate: float = 0.25
    metric: str = "accuracy"
    backend: str = "table"
    calibrate: bool = True
    align: AlignmentConfig = field(default_factory=AlignmentConfig)


def parse_config(raw: dict) -> PipelineConfig:
    """Validate a raw config dict; fails fast on unknown keys and bad combos."""
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ValueError(f"config: unknown keys {sorted(unknown)}")
    if "out_dir" not in raw:
        raise ValueError("config: 'out_dir' is required")
    if ("synth" in raw) == ("corpus" in raw):
        raise ValueError("config: exactly one of 'synth' or 'corpus' must be set")
    synth = SynthSpec(**raw["synth"]) if "synth" in raw else None
    if raw.get("train_sizes") and len(raw.get("alphas", [0.2])) > 1:
        raise ValueError("config: sweep either alphas or train_sizes, not both")
    align = AlignmentConfig(
        **{
            k: tuple(v) if isinstance(v, list) else v
            for k, v in raw.get("align", {}).items()
        }
    )
    systems = tuple(raw.get("systems", ("ft", "zoe")))
    for system in systems:
        if system not in ("ft", "zoe", "rp"):
            raise ValueError(f"config: unknown system {system!r}")
    # The internal lookup table only makes sense for synthetic corpora.
    default_backend = "table" if "synth" in raw else "markov"
    return PipelineConfig(
        out_dir=raw["out_dir"],
        task=Task(raw.get("task", "cqa")),
        synth=synth,
        corpus=raw.get("corpus"),
        bias=raw.get("bias", "relative_position"),
        biased_positions=frozenset(raw.get("biased_positions", DEFAULT_BIASED_POSITIONS)),
        triggers=tuple(raw.get("triggers", DEFAULT_LEXICAL_TRIGGERS)),
        seeds=tuple(raw.get("seeds", (0,))),
        systems=systems,
        alphas=tuple(raw.get("alphas", (0.2,))),
        train_sizes=tuple(raw["train_sizes"]) if raw.get("train_sizes") else None,
        epochs=raw.get("epochs", 28),
        learning_rate=raw.get("learning_rate", 0.1),
        clip_norm=raw.get("clip_norm", 1.0),
        n_per_prompt=raw.get("n_per_prompt", 3),
        max_tokens=raw.get("max_tokens", 16),
        garbage_rate=raw.get("garbage_rate", 0.25),
        metric=raw.get("metric", "accuracy"),
        backend=raw.get("backend", default_backend),
        calibrate=raw.get("calibrate", True),
        align=align,
    )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Manifest:
    """Incrementally written record of stages and artifact checksums."""

    def __init__(self, out_dir: Path, config_echo: dict) -> None:
        self.out_dir = out_dir
        self.path = out_dir / "manifest.json"
        self.data: dict = {"config": config_echo, "stages": []}
        self._write()

    def _write(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            json.dumps(self.data, indent=2, sort_keys=True), encoding="utf-8"
        )

    def record(self, stage: str, status: str, artifacts: list[Path], error: str | None = None) -> None:
        entry: dict = {
            "stage": stage,
            "status": status,
            "artifacts": [
                {
                    "path": str(p.relative_to(self.out_dir)),
                    "sha256": _sha256(p),
                }
                for p in sorted(artifacts)
            ],
        }
        if error:
            entry["error"] = error
        self.data["stages"].append(entry)
        self._write()


def _config_echo(config: PipelineConfig) -> dict:
    echo = dataclasses.asdict(config)
    echo["task"] = config.task.value
    echo["biased_positions"] = sorted(config.biased_positions)
    echo["out_dir"] = "."  # keep the manifest byte-identical across run roots
    return json.loads(json.dumps(echo, sort_keys=True, default=list))


def _write_jsonl(records: list[dict], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False))
            handle.write("\n")
    return path


def _aligned_to_record(response: AlignedResponse) -> dict:
    return {
        "sample_id": response.sample_id,
        "text": response.text,
        "token_logprobs": list(response.token_logprobs),
        "kept": response.kept,
        "rejection_reasons": sorted(r.value for r in response.rejection_reasons),
    }


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute all stages; returns the manifest dict.

    Configuration problems (missing corpus file, bad mode combinations) are
    raised before any stage runs or any artifact is written.
    """
    if (config.synth is None) == (config.corpus is None):
        raise ValueError("run_pipeline: exactly one of synth/corpus must be configured")
    if config.corpus is not None and not Path(config.corpus).exists():
        raise ValueError(f"run_pipeline: corpus path {config.corpus!r} does not exist")
    out_dir = Path(config.out_dir)
    manifest = _Manifest(out_dir, _config_echo(config))
    state: dict = {}
    stages = (
        _toy_stages() if config.synth is not None else _data_stages()
    )
    for name, fn in stages:
        try:
            artifacts = fn(config, out_dir, state)
        except Exception as exc:  # noqa: BLE001 - every failure must land in the manifest
            manifest.record(name, "failed", [], error=str(exc))
            raise PipelineError(f"stage {name!r} failed: {exc}") from exc
        manifest.record(name, "ok", artifacts)
    return manifest.data


def _toy_stages():
    return [
        ("synth", _stage_synth),
        ("split", _stage_split),
        ("infer", _stage_infer),
        ("align", _stage_align),
        ("train", _stage_train),
        ("eval", _stage_eval),
        ("report", _stage_report),
    ]


def _data_stages():
    return [
        ("split", _stage_data_split),
        ("infer", _stage_infer),
        ("align", _stage_align),
        ("report", _stage_data_report),
    ]


# -- toy-mode stages -------------------------------------------------------


def _stage_synth(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    artifacts = []
    state["data"] = {}
    for seed in config.seeds:
        spec = dataclasses.replace(config.synth, seed=config.synth.seed + seed)
        train_c, eval_b, eval_n = synth_corpus(spec)
        state["data"][seed] = {"train": train_c, "eval_biased": eval_b, "eval_nonbiased": eval_n}
        seed_dir = out_dir / "data" / f"seed{seed}"
        artifacts.append(save_corpus(train_c, seed_dir / "train.jsonl"))
        artifacts.append(save_corpus(eval_b, seed_dir / "eval_biased.jsonl"))
        artifacts.append(save_corpus(eval_n, seed_dir / "eval_nonbiased.jsonl"))
    return artifacts


def _stage_split(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    """Re-derive the eval partition with the real splitter (not generator labels)."""
    artifacts = []
    for seed, data in state["data"].items():
        pool = tuple(data["eval_biased"]) + tuple(data["eval_nonbiased"])
        corpus = Corpus(pool, config.task)
        partition = split_by_relative_position(corpus, config.biased_positions)
        data["partition"] = partition
        seed_dir = out_dir / "split" / f"seed{seed}"
        biased = Corpus(tuple(relabel(s, "biased") for s in partition.biased), config.task)
        non_biased = Corpus(
            tuple(relabel(s, "non_biased") for s in partition.non_biased), config.task
        )
        artifacts.append(save_corpus(biased, seed_dir / "eval_biased.jsonl"))
        artifacts.append(save_corpus(non_biased, seed_dir / "eval_nonbiased.jsonl"))
        artifacts.append(write_evidence(partition, seed_dir / "evidence.jsonl"))
    return artifacts


def _resolve_toy_backend(config: PipelineConfig, train_corpus: Corpus, seed: int):
    if config.backend == "table":
        table = build_lowbias_table(
            train_corpus,
            garbage_rate=config.garbage_rate,
            n_candidates=config.n_per_prompt,
            seed=1009 + seed,
        )
        return StubBackend(StubMode.TABLE, table=table)
    return resolve_backend(config.backend)


def _stage_infer(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    artifacts = []
    for seed, data in state["data"].items():
        train_corpus: Corpus = data["train"] if "train" in data else data["corpus"]
        prompt_spec = default_prompt_spec(config.task, corpus=train_corpus)
        backend = _resolve_toy_backend(config, train_corpus, seed)
        records = []
        candidates: dict[str, list] = {}
        for sample in train_corpus:
            prompts = build_prompt(sample, prompt_spec)
            results = generate(
                prompts,
                backend,
                n_per_prompt=config.n_per_prompt,
                seed=seed,
                max_tokens=config.max_tokens,
            )
            candidates[sample.id] = results
            for k, result in enumerate(results):
                records.append(
                    {
                        "sample_id": sample.id,
                        "candidate_index": k,
                        "text": result.text,
                        "tokens": list(result.tokens),
                        "token_logprobs": list(result.token_logprobs),
                        "backend_id": result.backend_id,
                    }
                )
        data["candidates"] = candidates
        artifacts.append(
            _write_jsonl(records, out_dir / "infer" / f"seed{seed}" / "candidates.jsonl")
        )
    return artifacts


def _stage_align(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    artifacts = []
    for seed, data in state["data"].items():
        corpus: Corpus = data["train"] if "train" in data else data["corpus"]
        if config.task == Task.NLI:
            # NLI replaces response pruning with class-distribution masking.
            data["aligned"] = {}
            seed_dir = out_dir / "align" / f"seed{seed}"
            artifacts.append(_write_jsonl([], seed_dir / "aligned.jsonl"))
            note_path = seed_dir / "calibration.json"
            note_path.write_text(
                json.dumps({"calibrated": False, "note": "nli uses class masking"}, sort_keys=True),
                encoding="utf-8",
            )
            artifacts.append(note_path)
            continue
        candidates = data["candidates"]
        align_config = config.align
        calibration: dict = {"calibrated": False}
        if config.calibrate:
            stats = [
                gate_statistic(config.task, sample, cand)
                for sample in corpus
                for cand in candidates.get(sample.id, ())
            ]
            if stats:
                chosen = calibrate_threshold(
                    stats, align_config.candidate_thresholds, align_config.target_keep_fraction
                )
                calibration = {"calibrated": True, "threshold": chosen}
                if config.task == Task.CQG:
                    align_config = dataclasses.replace(align_config, incoherence_threshold=chosen)
                else:
                    align_config = dataclasses.replace(align_config, unreliable_threshold=chosen)
        aligned: dict[str, list[AlignedResponse]] = {}
        records = []
        for sample in corpus:
            cands = candidates.get(sample.id, ())
            if not cands:
                continue
            verdicts = align_responses(config.task, sample, list(cands), align_config)
            aligned[sample.id] = verdicts
            records.extend(_aligned_to_record(v) for v in verdicts)
        data["aligned"] = aligned
        seed_dir = out_dir / "align" / f"seed{seed}"
        artifacts.append(_write_jsonl(records, seed_dir / "aligned.jsonl"))
        calibration_path = seed_dir / "calibration.json"
        calibration_path.write_text(
            json.dumps(calibration, sort_keys=True), encoding="utf-8"
        )
        artifacts.append(calibration_path)
    return artifacts


def _sweep_points(config: PipelineConfig) -> list[dict]:
    """Cross-product of systems with the active sweep (alphas or train sizes)."""
    points = []
    sweep_alpha = len(config.alphas) > 1
    sweep_size = config.train_sizes is not None and len(config.train_sizes) > 1
    for system in config.systems:
        alphas = config.alphas if system == "zoe" else (0.0,)
        sizes = config.train_sizes or (None,)
        for alpha in alphas:
            for size in sizes:
                label = system
                if system == "zoe" and sweep_alpha:
                    label += f"@a={alpha:g}"
                if sweep_size:
                    label += f"@n={size}"
                points.append({"system": system, "alpha": alpha, "size": size, "label": label})
    return points


def _stage_train(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    artifacts = []
    state["models"] = {}
    for point in _sweep_points(config):
        for seed, data in state["data"].items():
            train_corpus: Corpus = data["train"]
            if point["size"] is not None:
                train_corpus = Corpus(train_corpus.samples[: point["size"]], config.task)
            if point["system"] == "rp":
                perturbed = tuple(
                    perturb_positions(s, seed=seed * 100003 + i)
                    for i, s in enumerate(train_corpus)
                )
                train_corpus = Corpus(perturbed, config.task)
            aligned = data["aligned"] if point["system"] == "zoe" else None
            model = ToyModel.initialize(config.synth.vocab_size, seed=seed)
            trained, trace = train(
                model,
                train_corpus,
                aligned=aligned,
                config=LossConfig(alpha=point["alpha"] if point["system"] == "zoe" else 0.0),
                epochs=config.epochs,
                learning_rate=config.learning_rate,
                seed=seed,
                clip_norm=config.clip_norm,
            )
            state["models"][(point["label"], seed)] = trained
            run_dir = out_dir / "runs" / point["label"] / f"seed{seed}"
            artifacts.append(save_model(trained, run_dir / "model.json"))
            trace_records = [
                {
                    "step": t.step,
                    "epoch": t.epoch,
                    "sample_id": t.sample_id,
                    "l_target": t.l_target,
                    "l_align": t.l_align,
                    "combined": t.combined,
                }
                for t in trace
            ]
            artifacts.append(_write_jsonl(trace_records, run_dir / "trace.jsonl"))
    return artifacts


def _pool_positions(reports: list) -> list[dict]:
    pooled: dict[int | None, tuple[float, int]] = {}
    for rep in reports:
        for row in rep.by_relative_position:
            total, count = pooled.get(row.position, (0.0, 0))
            pooled[row.position] = (total + row.mean_score * row.count, count + row.count)
    rows = [
        {"position": pos, "score": total / count, "count": count}
        for pos, (total, count) in pooled.items()
        if count
    ]
    rows.sort(key=lambda r: (r["position"] is None, r["position"] if r["position"] is not None else 0))
    return rows


def _stage_eval(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    artifacts = []
    state["evals"] = []
    for point in _sweep_points(config):
        reports = []
        for seed, data in state["data"].items():
            model = state["models"][(point["label"], seed)]
            reports.append(evaluate(model, data["partition"], metric=config.metric))
        splits = {}
        for split_name in ("biased", "non_biased"):
            sides = [getattr(r, split_name) for r in reports]
            scored = [(s.score, s.count) for s in sides if s.score is not None]
            if scored:
                total = sum(score * count for score, count in scored)
                count = sum(count for _, count in scored)
                splits[split_name] = (total / count, count)
        by_position = _pool_positions(reports)
        entry = {
            "system": point["label"],
            "alpha": point["alpha"],
            "n_train": point["size"],
            "metric": config.metric,
            "splits": {k: {"score": v[0], "count": v[1]} for k, v in splits.items()},
            "by_position": by_position,
        }
        state["evals"].append(entry)
        path = out_dir / "eval" / f"{point['label']}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(entry, indent=2, sort_keys=True), encoding="utf-8")
        artifacts.append(path)
    return artifacts


def _stage_report(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    from .metrics import PositionRow

    evals = []
    for entry in state["evals"]:
        evals.append(
            report_mod.SystemEval(
                system=entry["system"],
                metric=entry["metric"],
                splits={k: (v["score"], v["count"]) for k, v in entry["splits"].items()},
                by_position=tuple(
                    PositionRow(r["position"], r["score"], r["count"])
                    for r in entry["by_position"]
                ),
            )
        )
    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    artifacts = [
        report_mod.write_scores_csv(evals, report_dir / "report.csv"),
        report_mod.write_position_csv(evals, report_dir / "report_by_relpos.csv"),
        report_mod.write_split_chart(evals, report_dir / "splits.svg", config.metric),
        report_mod.write_position_chart(evals, report_dir / "relpos.svg", config.metric),
    ]
    if len(config.alphas) > 1:
        series = {
            "non_biased": [
                (e["alpha"], e["splits"]["non_biased"]["score"])
                for e in state["evals"]
                if e["system"].startswith("zoe")
            ],
            "biased": [
                (e["alpha"], e["splits"]["biased"]["score"])
                for e in state["evals"]
                if e["system"].startswith("zoe")
            ],
        }
        artifacts.append(
            report_mod.write_sweep_chart(
                series, report_dir / "alpha_sweep.svg",
                f"{config.metric} vs alpha", "alpha", config.metric,
            )
        )
    if config.train_sizes and len(config.train_sizes) > 1:
        series = {}
        for entry in state["evals"]:
            base = entry["system"].split("@")[0]
            series.setdefault(base, []).append(
                (float(entry["n_train"]), entry["splits"]["non_biased"]["score"])
            )
        artifacts.append(
            report_mod.write_sweep_chart(
                series, report_dir / "train_size_sweep.svg",
                f"non-biased {config.metric} vs training size", "training samples", config.metric,
            )
        )
    return artifacts


# -- data-mode stages ------------------------------------------------------


def _stage_data_split(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    corpus = load_corpus(config.corpus, config.task)
    if config.bias == "relative_position":
        partition = split_by_relative_position(corpus, config.biased_positions)
    elif config.bias == "lead":
        partition = split_by_lead_bias(corpus)
    elif config.bias == "lexical":
        partition = split_by_lexical_bias(corpus, list(config.triggers))
    else:
        raise ValueError(f"unknown bias kind {config.bias!r}")
    state["data"] = {0: {"corpus": corpus, "partition": partition}}
    split_dir = out_dir / "split"
    biased = Corpus(tuple(relabel(s, "biased") for s in partition.biased), config.task)
    non_biased = Corpus(
        tuple(relabel(s, "non_biased") for s in partition.non_biased), config.task
    )
    artifacts = []
    if len(biased):
        artifacts.append(save_corpus(biased, split_dir / "biased.jsonl"))
    if len(non_biased):
        artifacts.append(save_corpus(non_biased, split_dir / "non_biased.jsonl"))
    artifacts.append(write_evidence(partition, split_dir / "evidence.jsonl"))
    return artifacts


def _stage_data_report(config: PipelineConfig, out_dir: Path, state: dict) -> list[Path]:
    data = state["data"][0]
    partition: BiasPartition = data["partition"]
    total = len(partition.biased) + len(partition.non_biased)
    aligned = data.get("aligned", {})
    verdicts = [v for vs in aligned.values() for v in vs]
    kept = sum(1 for v in verdicts if v.kept)
    evals = [
        report_mod.SystemEval(
            system="corpus",
            metric="fraction",
            splits={
                "biased": (len(partition.biased) / total, len(partition.biased)),
                "non_biased": (len(partition.non_biased) / total, len(partition.non_biased)),
            },
        )
    ]
    if verdicts:
        evals.append(
            report_mod.SystemEval(
                system="align",
                metric="kept_fraction",
                splits={"all": (kept / len(verdicts), len(verdicts))},
            )
        )
    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    return [report_mod.write_scores_csv(evals, report_dir / "report.csv")]
