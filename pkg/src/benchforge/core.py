"""Shared domain types, run configuration, and validation rules.

Everything here is an immutable value object; instances are safe to share
between concurrent workers without synchronization.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import yaml


class TaskType(str, Enum):
    """The six benchmark task families."""

    RETRIEVAL = "retrieval"
    CLASSIFICATION = "classification"
    PAIR_CLASSIFICATION = "pair_classification"
    CLUSTERING = "clustering"
    RERANKING = "reranking"
    STS = "sts"


# Script-qualified language label, e.g. "vie_Latn", "eng_Latn".
LANG_LABEL_RE = re.compile(r"^[a-z]{3}_[A-Z][a-z]{3}$")

# Fallback label for undetectable text; never equals a real source/target
# language, so filters treat it as a mismatch.
UND_LABEL = "und_Zzzz"


def is_lang_label(code: str) -> bool:
    return bool(LANG_LABEL_RE.match(code))


def nfc(text: str) -> str:
    """Normalize to NFC. Vietnamese diacritics have multiple encodings;
    downstream metrics and ids must not depend on which one the source used."""
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class FieldPath:
    """Location of one text inside a record: a field name plus an optional
    list index for list-valued fields."""

    field: str
    index: int | None = None

    def __str__(self) -> str:
        return self.field if self.index is None else f"{self.field}[{self.index}]"

    @staticmethod
    def parse(spec: str) -> "FieldPath":
        m = re.match(r"^(\w+)(?:\[(\d+)\])?$", spec)
        if not m:
            raise ValueError(f"invalid field path: {spec!r}")
        return FieldPath(m.group(1), int(m.group(2)) if m.group(2) else None)


def unit_id_for(dataset_id: str, record_id: str, field_path: FieldPath) -> str:
    """Deterministic, collision-resistant key for one translatable text unit.

    Same (dataset_id, record_id, field_path) triple always hashes to the same
    id, across runs and processes.
    """
    if not dataset_id or not record_id or not field_path.field:
        raise ValueError("unit id components must be non-empty")
    idx = "" if field_path.index is None else str(field_path.index)
    blob = "\x1f".join([dataset_id, record_id, field_path.field, idx])
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SequenceUnit:
    """Atomic translatable text unit with provenance back into its record."""

    unit_id: str
    dataset_id: str
    record_id: str
    field_path: FieldPath
    source_text: str
    char_len: int

    @staticmethod
    def make(dataset_id: str, record_id: str, field_path: FieldPath, text: str) -> "SequenceUnit":
        return SequenceUnit(
            unit_id=unit_id_for(dataset_id, record_id, field_path),
            dataset_id=dataset_id,
            record_id=record_id,
            field_path=field_path,
            source_text=text,
            char_len=len(text),
        )


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class TranslationRecord:
    """Successful translation of one unit."""

    unit: SequenceUnit
    translated_text: str
    backend_model: str
    prompt_fingerprint: str
    token_usage: TokenUsage


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"


class FailureStage(str, Enum):
    """First pipeline stage at which a unit failed.

    ``source_lang`` is the stage-1 source-language filter and ``translation``
    a stage-2 backend failure; the remaining three are the ordered stage-3
    checks.
    """

    SOURCE_LANG = "source_lang"
    TRANSLATION = "translation"
    LANG = "lang"
    SEM = "sem"
    JUDGE = "judge"


@dataclass(frozen=True)
class ValidationVerdict:
    """Per-unit outcome of the validation gauntlet plus the keep/drop call."""

    unit_id: str
    lang_check: CheckStatus
    sem_check: CheckStatus
    judge_check: CheckStatus
    kept: bool
    sem_score: float | None = None
    judge_score: float | None = None
    failure_stage: FailureStage | None = None
    failure_reason: str | None = None

    @staticmethod
    def stage1_rejected(unit_id: str, reason: str = "source_language_mismatch") -> "ValidationVerdict":
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.SKIPPED,
            sem_check=CheckStatus.SKIPPED,
            judge_check=CheckStatus.SKIPPED,
            kept=False,
            failure_stage=FailureStage.SOURCE_LANG,
            failure_reason=reason,
        )

    @staticmethod
    def translation_failed(unit_id: str, reason: str = "backend_error") -> "ValidationVerdict":
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.SKIPPED,
            sem_check=CheckStatus.SKIPPED,
            judge_check=CheckStatus.SKIPPED,
            kept=False,
            failure_stage=FailureStage.TRANSLATION,
            failure_reason=reason,
        )


def verdict_violations(v: ValidationVerdict) -> list[str]:
    """Check the short-circuit state machine: a check may be skipped only
    because some earlier stage failed, and kept means all three passed."""
    out = []
    checks = (v.lang_check, v.sem_check, v.judge_check)
    if v.kept != all(c is CheckStatus.PASS for c in checks):
        out.append("kept: must be true iff lang, sem and judge all pass")
    pre_stage3_failure = v.failure_stage in (FailureStage.SOURCE_LANG, FailureStage.TRANSLATION)
    if (v.lang_check is CheckStatus.SKIPPED) != pre_stage3_failure:
        out.append("lang_check: skipped iff the unit failed before stage 3")
    if (v.sem_check is CheckStatus.SKIPPED) != (v.lang_check is not CheckStatus.PASS):
        out.append("sem_check: skipped iff the lang check did not pass")
    if (v.judge_check is CheckStatus.SKIPPED) != (
        v.lang_check is not CheckStatus.PASS or v.sem_check is not CheckStatus.PASS
    ):
        out.append("judge_check: skipped iff an earlier check did not pass")
    first_fail = None
    if not pre_stage3_failure:
        for stage, check in zip((FailureStage.LANG, FailureStage.SEM, FailureStage.JUDGE), checks):
            if check is CheckStatus.FAIL:
                first_fail = stage
                break
    else:
        first_fail = v.failure_stage
    if v.failure_stage != first_fail:
        out.append("failure_stage: must name the first failing stage (None when kept)")
    if v.sem_score is not None and v.sem_check is CheckStatus.SKIPPED:
        out.append("sem_score: present although the sem check never ran")
    if v.judge_score is not None and v.judge_check is CheckStatus.SKIPPED:
        out.append("judge_score: present although the judge never ran")
    if v.sem_score is not None and not -1.0 <= v.sem_score <= 1.0:
        out.append("sem_score: outside [-1, 1]")
    return out


# Judge criterion set. The weights mapping in the config defines the active
# set; these are the defaults.
DEFAULT_CRITERIA = ("grammar", "ner", "special", "fluency", "meaning")

WEIGHT_SUM_TOL = 1e-9

# Config fields that identify a run for resume purposes. Scheduling knobs
# (batch_size, max_in_flight) and the run directory itself are excluded:
# they change throughput, never results.
_FINGERPRINT_EXCLUDE = {"run_dir", "batch_size", "max_in_flight"}


def _default_weights() -> dict[str, float]:
    return {c: 1.0 / len(DEFAULT_CRITERIA) for c in DEFAULT_CRITERIA}


@dataclass
class PipelineConfig:
    """Full configuration for a translation run.

    Threshold comparisons are inclusive throughout: a score equal to its
    threshold passes.
    """

    source_lang: str = "eng_Latn"
    target_lang: str = "vie_Latn"
    sem_threshold: float = 0.8
    judge_threshold: float = 0.8
    judge_weights: dict[str, float] = field(default_factory=_default_weights)
    temperature: float = 0.0
    max_new_tokens: int = 4096
    batch_size: int = 32
    max_in_flight: int = 8
    run_dir: str = "runs/default"
    # Splits receiving the full validation gauntlet; all other splits are
    # copied through untouched unless translate_unvalidated_splits is set,
    # in which case they are translated (stages 1-2) without stage 3.
    splits: list[str] = field(default_factory=lambda: ["test"])
    translate_unvalidated_splits: bool = False
    # Skip the stage-1 source-language filter (monolingual corpora).
    stage1_bypass: bool = False
    seed: int = 42
    backend: str = "mock"
    chat_model: str = "chat-default"
    detect_model: str = "detect-default"
    judge_model: str = "judge-default"
    embed_model: str = "embed-default"
    prompt_dir: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(PipelineConfig)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return PipelineConfig(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True),
            encoding="utf-8",
        )

    @staticmethod
    def load(path: str | Path) -> "PipelineConfig":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} is not a key-value tree")
        return PipelineConfig.from_dict(data)

    def fingerprint(self) -> str:
        semantic = {
            k: v for k, v in self.to_dict().items() if k not in _FINGERPRINT_EXCLUDE
        }
        blob = json.dumps(semantic, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def with_overrides(self, **kwargs: Any) -> "PipelineConfig":
        return replace(self, **kwargs)


def validate_config(cfg: PipelineConfig) -> list[str]:
    """Return all invariant violations (empty list when the config is valid).

    Violations are reported, never raised, so a CLI can show them all at once.
    """
    out = []
    for name in ("source_lang", "target_lang"):
        code = getattr(cfg, name)
        if not is_lang_label(code):
            out.append(f"{name}: {code!r} does not match <lang>_<Script> (e.g. vie_Latn)")
    if not 0.0 <= cfg.sem_threshold <= 1.0:
        out.append(f"sem_threshold: {cfg.sem_threshold} outside [0, 1]")
    if not cfg.judge_weights:
        out.append("judge_weights: must name at least one criterion")
    else:
        bad = [c for c, w in cfg.judge_weights.items() if w < 0]
        if bad:
            out.append(f"judge_weights: negative weight for {', '.join(sorted(bad))}")
        total = sum(cfg.judge_weights.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            out.append(f"judge_weights: sum {total!r} != 1 (tolerance {WEIGHT_SUM_TOL})")
    if cfg.temperature < 0:
        out.append(f"temperature: {cfg.temperature} < 0")
    if cfg.max_new_tokens < 1:
        out.append(f"max_new_tokens: {cfg.max_new_tokens} < 1")
    if cfg.batch_size < 1:
        out.append(f"batch_size: {cfg.batch_size} < 1")
    if cfg.max_in_flight < 1:
        out.append(f"max_in_flight: {cfg.max_in_flight} < 1")
    if not cfg.splits:
        out.append("splits: must list at least one split")
    if cfg.backend not in ("mock", "openai"):
        out.append(f"backend: {cfg.backend!r} not one of mock, openai")
    return out
