"""Stage 1-3 orchestration over sequence units with a resumable journal.

Stage 1 filters units to the configured source language, stage 2 translates,
and stage 3 runs the ordered validation gauntlet: target-language check,
semantic-similarity gate, judge. The order is cheapest to most expensive, so
a failed gate saves every later call. Per-unit failures never abort a run.

Every unit-level outcome is appended to ``journal.jsonl`` under the run
directory as it happens; re-invoking a run with an identical config resumes
from the journal, re-processing only units without a terminal event.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .backends import (
    BackendError,
    BackendSuite,
    ChatBackend,
    ChatRequest,
    EmbeddingBackend,
    bounded_map,
    script_guess,
    suite_for_config,
)
from .core import (
    CheckStatus,
    FailureStage,
    PipelineConfig,
    SequenceUnit,
    TokenUsage,
    TranslationRecord,
    UND_LABEL,
    ValidationVerdict,
    is_lang_label,
    validate_config,
)
from .dataset_io import (
    TaskDataset,
    TaskType,
    decompose,
    load_dataset,
    recompose,
    record_split,
    total_records,
    write_dataset,
)
from .judge import judge_translation
from .metrics import cosine_similarity
from .prompts import fingerprint, load_template, render

logger = logging.getLogger(__name__)

DETECT_MAX_TOKENS = 1024
DETECT_PARSE_RETRIES = 3


class ConfigError(ValueError):
    pass


class JournalError(RuntimeError):
    pass


def parse_lang_response(reply: str) -> str | None:
    """Last ``LANG: <code>`` line of a detection reply, or None."""
    label = None
    for line in reply.splitlines():
        line = line.strip()
        if line.upper().startswith("LANG:"):
            candidate = line[5:].strip()
            if is_lang_label(candidate):
                label = candidate
    return label


class LanguageDetector:
    """Chain-of-thought language detection through a chat backend."""

    def __init__(
        self,
        backend: ChatBackend,
        model: str = "detect-default",
        prompt_dir: str | None = None,
        max_attempts: int = DETECT_PARSE_RETRIES,
    ):
        self.backend = backend
        self.model = model
        self.template = load_template("detect", prompt_dir)
        self.max_attempts = max_attempts

    def detect(self, text: str) -> tuple[str, TokenUsage]:
        """Detected label and token usage; unparseable replies fall back to
        the und_Zzzz label after the retry budget. Backend errors propagate
        so callers can decide between fallback and failure."""
        if not text:
            raise ValueError("cannot detect language of empty text")
        req = ChatRequest(
            model=self.model,
            messages=(("system", self.template), ("user", text)),
            temperature=0.0,
            max_tokens=DETECT_MAX_TOKENS,
        )
        usage = TokenUsage()
        for _ in range(self.max_attempts):
            reply, call_usage = self.backend.chat(req)
            usage = usage + call_usage
            label = parse_lang_response(reply)
            if label is not None:
                return label, usage
        return UND_LABEL, usage


class Translator:
    """Stage-2 translation through a chat backend."""

    def __init__(self, backend: ChatBackend, cfg: PipelineConfig):
        self.backend = backend
        self.cfg = cfg
        self.system_prompt = render(
            load_template("translate", cfg.prompt_dir),
            source_lang=cfg.source_lang,
            target_lang=cfg.target_lang,
        )
        self.prompt_fp = fingerprint(self.system_prompt)

    def translate(self, unit: SequenceUnit) -> TranslationRecord:
        req = ChatRequest(
            model=self.cfg.chat_model,
            messages=(("system", self.system_prompt), ("user", unit.source_text)),
            temperature=self.cfg.temperature,
            max_tokens=self.cfg.max_new_tokens,
        )
        text, usage = self.backend.chat(req)
        if not text:
            raise BackendError("backend returned an empty translation")
        return TranslationRecord(
            unit=unit,
            translated_text=text,
            backend_model=self.cfg.chat_model,
            prompt_fingerprint=self.prompt_fp,
            token_usage=usage,
        )


def detect_language(text: str, detector: LanguageDetector) -> str:
    """Convenience wrapper: label only, und_Zzzz on backend failure."""
    try:
        label, _ = detector.detect(text)
        return label
    except BackendError:
        return UND_LABEL


def detect_lines(
    texts: Iterable[str], detector: LanguageDetector, compare_char_model: bool = False
) -> list[dict]:
    """Per-line detection report; optionally adds the character-model
    detector's guess alongside for comparison."""
    rows = []
    for text in texts:
        if not text.strip():
            continue
        row = {"text": text, "lang": detect_language(text, detector)}
        if compare_char_model:
            row["char_model"] = script_guess(text)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Stage functions
# ---------------------------------------------------------------------------


def stage1_filter(
    units: Sequence[SequenceUnit],
    source_lang: str,
    detector: LanguageDetector,
    bypass: bool = False,
    max_in_flight: int = 1,
) -> tuple[list[SequenceUnit], list[SequenceUnit]]:
    """Keep only units whose detected language matches source_lang.

    The bypass flag skips detection entirely (monolingual corpora).
    """
    if bypass:
        return list(units), []

    def _detect(unit: SequenceUnit) -> str:
        return detect_language(unit.source_text, detector)

    labels = bounded_map(_detect, units, max_in_flight)
    kept, rejected = [], []
    for unit, label in zip(units, labels):
        (kept if label == source_lang else rejected).append(unit)
    return kept, rejected


def stage2_translate(
    units: Sequence[SequenceUnit],
    cfg: PipelineConfig,
    translator: Translator,
    max_in_flight: int = 1,
) -> tuple[list[TranslationRecord], list[tuple[SequenceUnit, str]]]:
    """Translate each unit; failures are isolated and reported per unit."""

    def _translate(unit: SequenceUnit):
        try:
            return translator.translate(unit)
        except BackendError as exc:
            return (unit, str(exc))

    results = bounded_map(_translate, units, max_in_flight)
    records = [r for r in results if isinstance(r, TranslationRecord)]
    failures = [r for r in results if not isinstance(r, TranslationRecord)]
    return records, failures


def _stage3_verdict(
    unit_id: str,
    lang_pass: bool,
    lang_reason: str | None,
    sem_score: float | None = None,
    sem_pass: bool | None = None,
    sem_reason: str | None = None,
    judge_score: float | None = None,
    judge_pass: bool | None = None,
    judge_reason: str | None = None,
) -> ValidationVerdict:
    if not lang_pass:
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.FAIL,
            sem_check=CheckStatus.SKIPPED,
            judge_check=CheckStatus.SKIPPED,
            kept=False,
            failure_stage=FailureStage.LANG,
            failure_reason=lang_reason,
        )
    if not sem_pass:
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.PASS,
            sem_check=CheckStatus.FAIL,
            judge_check=CheckStatus.SKIPPED,
            kept=False,
            sem_score=sem_score,
            failure_stage=FailureStage.SEM,
            failure_reason=sem_reason,
        )
    if not judge_pass:
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.PASS,
            sem_check=CheckStatus.PASS,
            judge_check=CheckStatus.FAIL,
            kept=False,
            sem_score=sem_score,
            judge_score=judge_score,
            failure_stage=FailureStage.JUDGE,
            failure_reason=judge_reason,
        )
    return ValidationVerdict(
        unit_id=unit_id,
        lang_check=CheckStatus.PASS,
        sem_check=CheckStatus.PASS,
        judge_check=CheckStatus.PASS,
        kept=True,
        sem_score=sem_score,
        judge_score=judge_score,
    )


def stage3_validate(
    records: Sequence[TranslationRecord],
    cfg: PipelineConfig,
    detector: LanguageDetector,
    embedder: EmbeddingBackend,
    judge_backend: ChatBackend,
) -> list[tuple[ValidationVerdict, TokenUsage]]:
    """Run the ordered gauntlet over translated records.

    Per record: (1) the translation must detect as the target language,
    (2) cosine(embed(source), embed(translation)) must reach the semantic
    threshold, (3) the judge's combined score must reach its threshold.
    Later checks are skipped as soon as one fails; a backend failure fails
    that step with reason backend_error. Threshold comparisons are inclusive.
    """
    work: list[dict] = [
        {"record": rec, "usage": TokenUsage(), "verdict": None} for rec in records
    ]

    def _lang(item: dict):
        try:
            label, usage = detector.detect(item["record"].translated_text)
            return label, usage, None
        except BackendError as exc:
            return None, TokenUsage(), f"backend_error: {exc}"

    for item, (label, usage, err) in zip(work, bounded_map(_lang, work, cfg.max_in_flight)):
        item["usage"] = item["usage"] + usage
        if err is not None:
            item["verdict"] = _stage3_verdict(item["record"].unit.unit_id, False, err)
        elif label != cfg.target_lang:
            item["verdict"] = _stage3_verdict(
                item["record"].unit.unit_id, False, f"detected {label}, expected {cfg.target_lang}"
            )

    pending = [item for item in work if item["verdict"] is None]
    if pending:
        texts: list[str] = []
        for item in pending:
            texts.append(item["record"].unit.source_text)
            texts.append(item["record"].translated_text)
        try:
            vectors = embedder.embed(texts)
        except BackendError as exc:
            for item in pending:
                item["verdict"] = _stage3_verdict(
                    item["record"].unit.unit_id, True, None,
                    sem_pass=False, sem_reason=f"backend_error: {exc}",
                )
            pending = []
        else:
            for i, item in enumerate(pending):
                src_vec, out_vec = vectors[2 * i], vectors[2 * i + 1]
                try:
                    score = cosine_similarity(src_vec.values, out_vec.values)
                except ValueError as exc:
                    item["verdict"] = _stage3_verdict(
                        item["record"].unit.unit_id, True, None,
                        sem_pass=False, sem_reason=f"backend_error: {exc}",
                    )
                    continue
                item["sem_score"] = score
                if score < cfg.sem_threshold:
                    item["verdict"] = _stage3_verdict(
                        item["record"].unit.unit_id, True, None,
                        sem_score=score, sem_pass=False,
                        sem_reason=f"cosine {score:.4f} below threshold {cfg.sem_threshold}",
                    )
            pending = [item for item in pending if item["verdict"] is None]

    def _judge(item: dict):
        try:
            return judge_translation(
                judge_backend,
                item["record"].unit.source_text,
                item["record"].translated_text,
                cfg.judge_weights,
                cfg.judge_threshold,
                model=cfg.judge_model,
                temperature=cfg.temperature,
                max_tokens=cfg.max_new_tokens,
                prompt_dir=cfg.prompt_dir,
            )
        except BackendError as exc:
            return exc

    for item, outcome in zip(pending, bounded_map(_judge, pending, cfg.max_in_flight)):
        uid = item["record"].unit.unit_id
        if isinstance(outcome, BackendError):
            item["verdict"] = _stage3_verdict(
                uid, True, None, sem_score=item["sem_score"], sem_pass=True,
                judge_pass=False, judge_reason=f"backend_error: {outcome}",
            )
            continue
        item["usage"] = item["usage"] + outcome.usage
        if outcome.decision is None:
            item["verdict"] = _stage3_verdict(
                uid, True, None, sem_score=item["sem_score"], sem_pass=True,
                judge_pass=False, judge_reason=outcome.error,
            )
        else:
            item["verdict"] = _stage3_verdict(
                uid, True, None, sem_score=item["sem_score"], sem_pass=True,
                judge_score=outcome.decision.combined, judge_pass=outcome.decision.passed,
                judge_reason=None if outcome.decision.passed else (
                    f"combined {outcome.decision.combined:.4f} below threshold {cfg.judge_threshold}"
                ),
            )

    return [(item["verdict"], item["usage"]) for item in work]


# ---------------------------------------------------------------------------
# Journal
# ---------------------------------------------------------------------------


def _verdict_to_event(v: ValidationVerdict) -> dict:
    return {
        "event": "verdict",
        "unit_id": v.unit_id,
        "lang_check": v.lang_check.value,
        "sem_check": v.sem_check.value,
        "judge_check": v.judge_check.value,
        "kept": v.kept,
        "sem_score": v.sem_score,
        "judge_score": v.judge_score,
        "failure_stage": v.failure_stage.value if v.failure_stage else None,
        "failure_reason": v.failure_reason,
    }


def _verdict_from_event(event: dict) -> ValidationVerdict:
    return ValidationVerdict(
        unit_id=event["unit_id"],
        lang_check=CheckStatus(event["lang_check"]),
        sem_check=CheckStatus(event["sem_check"]),
        judge_check=CheckStatus(event["judge_check"]),
        kept=event["kept"],
        sem_score=event.get("sem_score"),
        judge_score=event.get("judge_score"),
        failure_stage=FailureStage(event["failure_stage"]) if event.get("failure_stage") else None,
        failure_reason=event.get("failure_reason"),
    )


class RunJournal:
    """Append-only event log for one run directory.

    Replaying the journal reconstructs run state exactly; a resume attempt
    with a different config (or drifted prompt templates) is refused.
    """

    def __init__(self, path: str | Path, config_fingerprint: str, prompt_fingerprints: dict[str, str]):
        self.path = Path(path)
        self.config_fingerprint = config_fingerprint
        self.prompt_fingerprints = dict(prompt_fingerprints)
        self.detected: dict[str, str] = {}
        self.translations: dict[str, dict] = {}
        self.verdicts: dict[str, ValidationVerdict] = {}
        self.usage_by_unit: dict[str, TokenUsage] = {}
        self.resumed = False
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists() and self.path.stat().st_size > 0:
            self._replay()
            self.resumed = True
        self._handle = self.path.open("a", encoding="utf-8")
        if not self.resumed:
            self._append(
                {
                    "event": "run_config",
                    "fingerprint": config_fingerprint,
                    "prompts": self.prompt_fingerprints,
                }
            )

    def _replay(self) -> None:
        with self.path.open(encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        if not lines:
            return
        header = json.loads(lines[0])
        if header.get("event") != "run_config":
            raise JournalError(f"{self.path}: first event must be run_config")
        if header.get("fingerprint") != self.config_fingerprint:
            raise JournalError(
                f"{self.path}: journal was written under a different config "
                f"(journal {header.get('fingerprint', '')[:12]}..., "
                f"current {self.config_fingerprint[:12]}...); refusing to resume. "
                "Use a fresh run directory or restore the original config."
            )
        if header.get("prompts") != self.prompt_fingerprints:
            raise JournalError(
                f"{self.path}: prompt templates changed since this run started; refusing to resume."
            )
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JournalError(f"{self.path}:{lineno}: corrupt event ({exc.msg})")
            kind = event.get("event")
            uid = event.get("unit_id", "")
            usage = event.get("usage") or {}
            self.usage_by_unit[uid] = self.usage_by_unit.get(uid, TokenUsage()) + TokenUsage(
                usage.get("input_tokens", 0), usage.get("output_tokens", 0)
            )
            if kind == "detected":
                self.detected[uid] = event["lang"]
            elif kind == "translated":
                self.translations[uid] = event
            elif kind == "verdict":
                if uid in self.verdicts:
                    raise JournalError(f"{self.path}:{lineno}: duplicate terminal verdict for unit {uid}")
                self.verdicts[uid] = _verdict_from_event(event)
            else:
                raise JournalError(f"{self.path}:{lineno}: unknown event {kind!r}")

    def _append(self, event: dict) -> None:
        event = dict(event)
        event["ts"] = time.time()
        with self._lock:
            self._handle.write(json.dumps(event, ensure_ascii=False) + "\n")
            self._handle.flush()

    def record_detected(self, dataset_id: str, unit_id: str, lang: str, usage: TokenUsage) -> None:
        self.detected[unit_id] = lang
        self.usage_by_unit[unit_id] = self.usage_by_unit.get(unit_id, TokenUsage()) + usage
        self._append(
            {
                "event": "detected",
                "dataset_id": dataset_id,
                "unit_id": unit_id,
                "lang": lang,
                "usage": {"input_tokens": usage.input_tokens, "output_tokens": usage.output_tokens},
            }
        )

    def record_translated(self, dataset_id: str, record: TranslationRecord) -> None:
        uid = record.unit.unit_id
        event = {
            "event": "translated",
            "dataset_id": dataset_id,
            "unit_id": uid,
            "text": record.translated_text,
            "source_text": record.unit.source_text,
            "model": record.backend_model,
            "prompt_fingerprint": record.prompt_fingerprint,
            "usage": {
                "input_tokens": record.token_usage.input_tokens,
                "output_tokens": record.token_usage.output_tokens,
            },
        }
        self.translations[uid] = event
        self.usage_by_unit[uid] = self.usage_by_unit.get(uid, TokenUsage()) + record.token_usage
        self._append(event)

    def record_verdict(self, dataset_id: str, verdict: ValidationVerdict, usage: TokenUsage = TokenUsage()) -> None:
        if verdict.unit_id in self.verdicts:
            raise JournalError(f"unit {verdict.unit_id} already has a terminal verdict")
        self.verdicts[verdict.unit_id] = verdict
        self.usage_by_unit[verdict.unit_id] = (
            self.usage_by_unit.get(verdict.unit_id, TokenUsage()) + usage
        )
        event = _verdict_to_event(verdict)
        event["dataset_id"] = dataset_id
        event["usage"] = {"input_tokens": usage.input_tokens, "output_tokens": usage.output_tokens}
        self._append(event)

    def close(self) -> None:
        self._handle.close()


# ---------------------------------------------------------------------------
# Run summary
# ---------------------------------------------------------------------------

FAILURE_STAGES = tuple(stage.value for stage in FailureStage)


@dataclass
class DatasetSummary:
    dataset_id: str
    task: str
    units_total: int
    units_kept: int
    failures: dict[str, int]
    records_before: int
    records_after: int
    kept_ratio: float
    input_tokens: int
    output_tokens: int
    backend_errors: int = 0

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "task": self.task,
            "units_total": self.units_total,
            "units_kept": self.units_kept,
            "failures": self.failures,
            "records_before": self.records_before,
            "records_after": self.records_after,
            "kept_ratio": self.kept_ratio,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "backend_errors": self.backend_errors,
        }


@dataclass
class RunSummary:
    config_fingerprint: str
    seed: int
    datasets: list[DatasetSummary] = field(default_factory=list)

    @property
    def records_before(self) -> int:
        return sum(d.records_before for d in self.datasets)

    @property
    def records_after(self) -> int:
        return sum(d.records_after for d in self.datasets)

    @property
    def kept_ratio(self) -> float:
        before = self.records_before
        return self.records_after / before if before else 1.0

    def to_dict(self) -> dict:
        return {
            "config_fingerprint": self.config_fingerprint,
            "seed": self.seed,
            "datasets": [d.to_dict() for d in self.datasets],
            "totals": {
                "records_before": self.records_before,
                "records_after": self.records_after,
                "kept_ratio": self.kept_ratio,
                "units_total": sum(d.units_total for d in self.datasets),
                "units_kept": sum(d.units_kept for d in self.datasets),
                "input_tokens": sum(d.input_tokens for d in self.datasets),
                "output_tokens": sum(d.output_tokens for d in self.datasets),
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )

    @staticmethod
    def load(path: str | Path) -> "RunSummary":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        datasets = [
            DatasetSummary(
                dataset_id=d["dataset_id"],
                task=d["task"],
                units_total=d["units_total"],
                units_kept=d["units_kept"],
                failures=d["failures"],
                records_before=d["records_before"],
                records_after=d["records_after"],
                kept_ratio=d["kept_ratio"],
                input_tokens=d["input_tokens"],
                output_tokens=d["output_tokens"],
                backend_errors=d.get("backend_errors", 0),
            )
            for d in data["datasets"]
        ]
        return RunSummary(data["config_fingerprint"], data["seed"], datasets)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def _chunks(seq: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


class PipelineRunner:
    """Owns one run directory: journal, backends, and the stage loop."""

    def __init__(self, cfg: PipelineConfig, suite: BackendSuite | None = None):
        problems = validate_config(cfg)
        if problems:
            raise ConfigError("invalid config:\n" + "\n".join(f"- {p}" for p in problems))
        self.cfg = cfg
        self.suite = suite or suite_for_config(cfg)
        self.detector = LanguageDetector(self.suite.detector, cfg.detect_model, cfg.prompt_dir)
        self.translator = Translator(self.suite.translator, cfg)
        self.run_dir = Path(cfg.run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        prompt_fps = {
            name: fingerprint(load_template(name, cfg.prompt_dir))
            for name in ("detect", "translate", "judge")
        }
        self.journal = RunJournal(self.run_dir / "journal.jsonl", cfg.fingerprint(), prompt_fps)

    def close(self) -> None:
        self.journal.close()

    # -- unit bookkeeping ---------------------------------------------------

    def _classify_units(self, ds: TaskDataset) -> tuple[list[SequenceUnit], list[SequenceUnit], list[str]]:
        """(validated units, translate-only units, processed split names)."""
        processed = [s for s in self.cfg.splits if s in ds.splits]
        all_units = decompose(ds)
        if ds.task is TaskType.RETRIEVAL:
            if processed:
                return all_units, [], processed
            if self.cfg.translate_unvalidated_splits:
                return [], all_units, processed
            return [], [], processed
        in_processed = lambda u: record_split(u.record_id) in set(processed)
        validated = [u for u in all_units if in_processed(u)]
        translate_only = (
            [u for u in all_units if not in_processed(u)]
            if self.cfg.translate_unvalidated_splits
            else []
        )
        return validated, translate_only, processed

    def pending_units(self, ds: TaskDataset) -> int:
        validated, translate_only, _ = self._classify_units(ds)
        n = sum(1 for u in validated if u.unit_id not in self.journal.verdicts)
        for unit in translate_only:
            uid = unit.unit_id
            if uid in self.journal.translations or uid in self.journal.verdicts:
                continue
            if self.journal.detected.get(uid, self.cfg.source_lang) != self.cfg.source_lang:
                continue
            n += 1
        return n

    # -- stages over the journal ---------------------------------------------

    def _run_stage1(self, dataset_id: str, units: Sequence[SequenceUnit], reject_to_verdict: bool) -> None:
        if self.cfg.stage1_bypass:
            return
        if reject_to_verdict:
            # Heal the crash window between a journaled detection and its
            # rejection verdict.
            for unit in units:
                uid = unit.unit_id
                if (
                    uid in self.journal.detected
                    and uid not in self.journal.verdicts
                    and uid not in self.journal.translations
                    and self.journal.detected[uid] != self.cfg.source_lang
                ):
                    self.journal.record_verdict(dataset_id, ValidationVerdict.stage1_rejected(uid))
        todo = [
            u
            for u in units
            if u.unit_id not in self.journal.detected
            and u.unit_id not in self.journal.translations
            and u.unit_id not in self.journal.verdicts
        ]
        for batch in _chunks(todo, self.cfg.batch_size):
            def _detect(unit: SequenceUnit):
                try:
                    return self.detector.detect(unit.source_text)
                except BackendError:
                    return UND_LABEL, TokenUsage()

            results = bounded_map(_detect, batch, self.cfg.max_in_flight)
            for unit, (label, usage) in zip(batch, results):
                self.journal.record_detected(dataset_id, unit.unit_id, label, usage)
                if label != self.cfg.source_lang and reject_to_verdict:
                    self.journal.record_verdict(
                        dataset_id, ValidationVerdict.stage1_rejected(unit.unit_id)
                    )

    def _stage1_survivors(self, units: Sequence[SequenceUnit]) -> list[SequenceUnit]:
        if self.cfg.stage1_bypass:
            return [u for u in units if u.unit_id not in self.journal.verdicts]
        out = []
        for unit in units:
            if unit.unit_id in self.journal.verdicts and unit.unit_id not in self.journal.translations:
                continue  # terminal before translation (stage-1 reject or stage-2 failure)
            if unit.unit_id in self.journal.translations or unit.unit_id in self.journal.verdicts:
                out.append(unit)
                continue
            if self.journal.detected.get(unit.unit_id) == self.cfg.source_lang:
                out.append(unit)
        return out

    def _run_stage2(self, dataset_id: str, units: Sequence[SequenceUnit], fail_to_verdict: bool) -> None:
        todo = [
            u
            for u in units
            if u.unit_id not in self.journal.translations and u.unit_id not in self.journal.verdicts
        ]
        for batch in _chunks(todo, self.cfg.batch_size):
            records, failures = stage2_translate(batch, self.cfg, self.translator, self.cfg.max_in_flight)
            by_uid = {r.unit.unit_id: r for r in records}
            failed = {u.unit_id: reason for u, reason in failures}
            for unit in batch:
                if unit.unit_id in by_uid:
                    self.journal.record_translated(dataset_id, by_uid[unit.unit_id])
                elif fail_to_verdict:
                    self.journal.record_verdict(
                        dataset_id,
                        ValidationVerdict.translation_failed(
                            unit.unit_id, f"backend_error: {failed[unit.unit_id]}"
                        ),
                    )
                else:
                    logger.warning(
                        "%s: unit %s translation failed (%s); source text kept",
                        dataset_id, unit.unit_id, failed[unit.unit_id],
                    )

    def _run_stage3(self, dataset_id: str, units: Sequence[SequenceUnit]) -> None:
        todo = [
            u
            for u in units
            if u.unit_id in self.journal.translations and u.unit_id not in self.journal.verdicts
        ]
        for batch in _chunks(todo, self.cfg.batch_size):
            records = []
            for unit in batch:
                event = self.journal.translations[unit.unit_id]
                records.append(
                    TranslationRecord(
                        unit=unit,
                        translated_text=event["text"],
                        backend_model=event["model"],
                        prompt_fingerprint=event["prompt_fingerprint"],
                        token_usage=TokenUsage(),
                    )
                )
            outcomes = stage3_validate(
                records, self.cfg, self.detector, self.suite.embedder, self.suite.judge
            )
            for (verdict, usage) in outcomes:
                self.journal.record_verdict(dataset_id, verdict, usage)

    # -- per-dataset drive -----------------------------------------------------

    def process_dataset(self, ds: TaskDataset) -> tuple[TaskDataset, DatasetSummary]:
        dataset_id = ds.manifest.dataset_id
        validated, translate_only, processed = self._classify_units(ds)

        self._run_stage1(dataset_id, validated, reject_to_verdict=True)
        survivors = self._stage1_survivors(validated)
        self._run_stage2(dataset_id, survivors, fail_to_verdict=True)
        self._run_stage3(dataset_id, survivors)

        if translate_only:
            self._run_stage1(dataset_id, translate_only, reject_to_verdict=False)
            ok = [
                u
                for u in translate_only
                if self.cfg.stage1_bypass
                or self.journal.detected.get(u.unit_id) == self.cfg.source_lang
            ]
            self._run_stage2(dataset_id, ok, fail_to_verdict=False)

        translations = {
            uid: event["text"]
            for uid, event in self.journal.translations.items()
        }
        verdicts = {
            u.unit_id: self.journal.verdicts[u.unit_id]
            for u in validated
            if u.unit_id in self.journal.verdicts
        }
        out_ds, drop_log = recompose(ds, translations, verdicts, processed)
        out_ds.manifest.source_lang = self.cfg.target_lang

        failures = {name: 0 for name in FAILURE_STAGES}
        kept_units = 0
        backend_errors = 0
        usage = TokenUsage()
        for unit in validated:
            verdict = self.journal.verdicts[unit.unit_id]
            if verdict.kept:
                kept_units += 1
            else:
                if verdict.failure_stage:
                    failures[verdict.failure_stage.value] += 1
                if verdict.failure_reason and verdict.failure_reason.startswith("backend_error"):
                    backend_errors += 1
            usage = usage + self.journal.usage_by_unit.get(unit.unit_id, TokenUsage())
        for unit in translate_only:
            usage = usage + self.journal.usage_by_unit.get(unit.unit_id, TokenUsage())

        before = total_records(ds, processed or None)
        after = before - len(drop_log)
        summary = DatasetSummary(
            dataset_id=dataset_id,
            task=ds.task.value,
            units_total=len(validated),
            units_kept=kept_units,
            failures=failures,
            records_before=before,
            records_after=after,
            kept_ratio=(after / before) if before else 1.0,
            input_tokens=usage.input_tokens,
            output_tokens=usage.output_tokens,
            backend_errors=backend_errors,
        )
        return out_ds, summary

    def translate_dataset(self, ds: TaskDataset) -> dict[str, int]:
        """Stages 1-2 only; stage 3 can be run later over the same journal."""
        dataset_id = ds.manifest.dataset_id
        validated, translate_only, _ = self._classify_units(ds)
        self._run_stage1(dataset_id, validated, reject_to_verdict=True)
        survivors = self._stage1_survivors(validated)
        self._run_stage2(dataset_id, survivors, fail_to_verdict=True)
        if translate_only:
            self._run_stage1(dataset_id, translate_only, reject_to_verdict=False)
            ok = [
                u
                for u in translate_only
                if self.cfg.stage1_bypass
                or self.journal.detected.get(u.unit_id) == self.cfg.source_lang
            ]
            self._run_stage2(dataset_id, ok, fail_to_verdict=False)
        translated = rejected = failed = 0
        for unit in validated + translate_only:
            uid = unit.unit_id
            if uid in self.journal.translations:
                translated += 1
            elif uid in self.journal.verdicts:
                verdict = self.journal.verdicts[uid]
                if verdict.failure_stage is FailureStage.SOURCE_LANG:
                    rejected += 1
                else:
                    failed += 1
            elif self.journal.detected.get(uid, self.cfg.source_lang) != self.cfg.source_lang:
                rejected += 1
            else:
                failed += 1
        return {"translated": translated, "rejected": rejected, "failed": failed}


def run_pipeline(
    manifest_paths: str | Path | Sequence[str | Path],
    cfg: PipelineConfig,
    suite: BackendSuite | None = None,
) -> RunSummary:
    """Load -> decompose -> stage 1 -> stage 2 -> stage 3 -> recompose -> write.

    The journal under cfg.run_dir is written continuously; re-invocation with
    an identical config resumes, re-processing only units without terminal
    verdicts. Output datasets land under ``<run_dir>/output/<dataset_id>/``
    and the run summary at ``<run_dir>/summary.json``.
    """
    if isinstance(manifest_paths, (str, Path)):
        manifest_paths = [manifest_paths]
    runner = PipelineRunner(cfg, suite)
    try:
        if runner.journal.resumed:
            pending = sum(runner.pending_units(load_dataset(p)) for p in manifest_paths)
            logger.info("resumed: %d pending units", pending)
        summary = RunSummary(config_fingerprint=cfg.fingerprint(), seed=cfg.seed)
        for path in manifest_paths:
            ds = load_dataset(path)
            out_ds, ds_summary = runner.process_dataset(ds)
            write_dataset(out_ds, runner.run_dir / "output" / ds.manifest.dataset_id)
            summary.datasets.append(ds_summary)
        summary.save(runner.run_dir / "summary.json")
        return summary
    finally:
        runner.close()
