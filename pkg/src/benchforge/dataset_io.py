"""Reading, writing, decomposing, and recomposing the six task-dataset schemas.

On-disk layout (all files UTF-8, texts NFC-normalized on load):

* manifest.json: {"dataset_id", "task", "source_lang", "license", "splits"}
* retrieval: corpus.jsonl {"_id","title","text"}, queries.jsonl {"_id","text"},
  qrels/<split>.tsv with a ``query-id<TAB>corpus-id<TAB>score`` header
* classification: <split>.jsonl {"id","text","label"}
* clustering: <split>.jsonl {"id","sentences":[...],"labels":[...]}
* pair_classification: <split>.jsonl {"id","sentence1","sentence2","label"}
* reranking: <split>.jsonl {"id","query","positive":[...],"negative":[...]}
* sts: <split>.jsonl {"id","sentence1","sentence2","score"}

Record keys used in drop logs and unit provenance are namespaced:
``<split>/<id>`` for split-scoped records, ``corpus/<id>`` and ``query/<id>``
for the retrieval sides, which are shared across splits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .core import FieldPath, SequenceUnit, TaskType, ValidationVerdict, nfc

QRELS_HEADER = ("query-id", "corpus-id", "score")

_SCHEMA_KEYS = {
    TaskType.CLASSIFICATION: ("id", "text", "label"),
    TaskType.CLUSTERING: ("id", "sentences", "labels"),
    TaskType.PAIR_CLASSIFICATION: ("id", "sentence1", "sentence2", "label"),
    TaskType.RERANKING: ("id", "query", "positive", "negative"),
    TaskType.STS: ("id", "sentence1", "sentence2", "score"),
}


class DatasetError(Exception):
    """Schema, referential, or IO failure; message lists file/line context."""

    def __init__(self, problems: str | list[str]):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = problems
        shown = problems[:20]
        more = f"\n... and {len(problems) - 20} more" if len(problems) > 20 else ""
        super().__init__("\n".join(shown) + more)


class DropReason(str, Enum):
    UNIT_FAILED = "unit_failed"
    ORPHANED_REFERENCE = "orphaned_reference"
    EMPTY_AFTER_FILTER = "empty_after_filter"


@dataclass(frozen=True)
class DropEntry:
    record_id: str
    reason: DropReason
    stage: str


@dataclass
class DropLog:
    entries: list[DropEntry] = field(default_factory=list)

    def add(self, record_id: str, reason: DropReason, stage: str) -> None:
        self.entries.append(DropEntry(record_id, reason, stage))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class Manifest:
    dataset_id: str
    task: TaskType
    source_lang: str
    license: str
    splits: list[str]


@dataclass
class TaskDataset:
    """One dataset in one of the six task shapes.

    splits maps split name to its record rows; for retrieval the rows are
    qrel dicts and the shared corpus/queries live in their own fields.
    """

    task: TaskType
    manifest: Manifest
    splits: dict[str, list[dict]]
    corpus: dict[str, dict] | None = None
    queries: dict[str, str] | None = None


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    rows = []
    problems = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append(f"{path}:{lineno}: invalid JSON ({exc.msg})")
                continue
            if not isinstance(obj, dict):
                problems.append(f"{path}:{lineno}: row is not an object")
                continue
            rows.append((lineno, obj))
    if problems:
        raise DatasetError(problems)
    return rows


def _check_keys(obj: dict, keys: Sequence[str], where: str, problems: list[str]) -> bool:
    missing = [k for k in keys if k not in obj]
    extra = [k for k in obj if k not in keys]
    if missing:
        problems.append(f"{where}: missing field(s) {', '.join(missing)}")
    if extra:
        problems.append(f"{where}: unexpected field(s) {', '.join(extra)}")
    return not missing and not extra


def _norm_texts(obj: dict, text_keys: Sequence[str]) -> dict:
    out = dict(obj)
    for key in text_keys:
        val = out.get(key)
        if isinstance(val, str):
            out[key] = nfc(val)
        elif isinstance(val, list):
            out[key] = [nfc(x) if isinstance(x, str) else x for x in val]
    return out


def _str_list(val: Any) -> bool:
    return isinstance(val, list) and all(isinstance(x, str) for x in val)


def _validate_record(task: TaskType, obj: dict, where: str, problems: list[str]) -> dict | None:
    keys = _SCHEMA_KEYS[task]
    if not _check_keys(obj, keys, where, problems):
        return None
    ok = True

    def complain(msg: str) -> None:
        nonlocal ok
        problems.append(f"{where}: {msg}")
        ok = False

    if not isinstance(obj["id"], (str, int)):
        complain("field id: must be a string or integer")
    if task is TaskType.CLASSIFICATION:
        if not isinstance(obj["text"], str):
            complain("field text: must be a string")
    elif task is TaskType.CLUSTERING:
        if not _str_list(obj["sentences"]) or not obj["sentences"]:
            complain("field sentences: must be a non-empty list of strings")
        elif any(not s for s in obj["sentences"]):
            complain("field sentences: entries must be non-empty")
        if not isinstance(obj["labels"], list):
            complain("field labels: must be a list")
        elif isinstance(obj["sentences"], list) and len(obj["labels"]) != len(obj["sentences"]):
            complain("field labels: length differs from sentences")
    elif task is TaskType.PAIR_CLASSIFICATION:
        for key in ("sentence1", "sentence2"):
            if not isinstance(obj[key], str):
                complain(f"field {key}: must be a string")
        if obj["label"] not in (0, 1) or isinstance(obj["label"], bool):
            complain("field label: must be 0 or 1")
    elif task is TaskType.RERANKING:
        if not isinstance(obj["query"], str) or not obj["query"]:
            complain("field query: must be a non-empty string")
        if not _str_list(obj["positive"]) or not obj["positive"]:
            complain("field positive: must be a non-empty list of strings")
        if not _str_list(obj["negative"]):
            complain("field negative: must be a list of strings")
    elif task is TaskType.STS:
        for key in ("sentence1", "sentence2"):
            if not isinstance(obj[key], str):
                complain(f"field {key}: must be a string")
        score = obj["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool) or not 0 <= score <= 5:
            complain(f"field score: {score!r} not a number in [0, 5]")
    if not ok:
        return None
    return _norm_texts(obj, ("text", "sentences", "sentence1", "sentence2", "query", "positive", "negative"))


def load_manifest(manifest_path: str | Path) -> Manifest:
    path = Path(manifest_path)
    if not path.exists():
        raise DatasetError(f"{path}: manifest not found")
    data = json.loads(path.read_text(encoding="utf-8"))
    for key in ("dataset_id", "task", "source_lang", "license", "splits"):
        if key not in data:
            raise DatasetError(f"{path}: manifest missing field {key}")
    try:
        task = TaskType(data["task"])
    except ValueError:
        known = ", ".join(t.value for t in TaskType)
        raise DatasetError(f"{path}: unknown task {data['task']!r} (expected one of {known})")
    reserved = {RETRIEVAL_CORPUS_PREFIX, RETRIEVAL_QUERY_PREFIX} & set(data["splits"])
    if reserved:
        raise DatasetError(
            f"{path}: split name(s) {', '.join(sorted(reserved))} are reserved record namespaces"
        )
    return Manifest(
        dataset_id=data["dataset_id"],
        task=task,
        source_lang=data["source_lang"],
        license=data["license"],
        splits=list(data["splits"]),
    )


def _load_retrieval(root: Path, manifest: Manifest) -> TaskDataset:
    for name in ("corpus.jsonl", "queries.jsonl"):
        if not (root / name).exists():
            raise DatasetError(f"{root / name}: retrieval dataset file not found")
    problems: list[str] = []
    corpus: dict[str, dict] = {}
    for lineno, obj in _read_jsonl(root / "corpus.jsonl"):
        where = f"{root / 'corpus.jsonl'}:{lineno}"
        if not _check_keys(obj, ("_id", "title", "text"), where, problems):
            continue
        if not isinstance(obj["title"], str) or not isinstance(obj["text"], str):
            problems.append(f"{where}: title and text must be strings")
            continue
        doc_id = str(obj["_id"])
        if doc_id in corpus:
            problems.append(f"{where}: duplicate corpus id {doc_id!r}")
            continue
        corpus[doc_id] = {"title": nfc(obj["title"]), "text": nfc(obj["text"])}
    queries: dict[str, str] = {}
    for lineno, obj in _read_jsonl(root / "queries.jsonl"):
        where = f"{root / 'queries.jsonl'}:{lineno}"
        if not _check_keys(obj, ("_id", "text"), where, problems):
            continue
        if not isinstance(obj["text"], str):
            problems.append(f"{where}: text must be a string")
            continue
        query_id = str(obj["_id"])
        if query_id in queries:
            problems.append(f"{where}: duplicate query id {query_id!r}")
            continue
        queries[query_id] = nfc(obj["text"])

    splits: dict[str, list[dict]] = {}
    for split in manifest.splits:
        path = root / "qrels" / f"{split}.tsv"
        if not path.exists():
            problems.append(f"{path}: qrels file for split {split!r} not found")
            continue
        rows = []
        with path.open(encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        header = "\t".join(QRELS_HEADER)
        if not lines or lines[0] != header:
            problems.append(f"{path}:1: expected header {header!r}")
            continue
        for lineno, line in enumerate(lines[1:], 2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                problems.append(f"{path}:{lineno}: expected 3 tab-separated fields")
                continue
            qid, did, score = parts
            try:
                score_val = int(score)
            except ValueError:
                problems.append(f"{path}:{lineno}: field score: {score!r} is not an integer")
                continue
            if qid not in queries:
                problems.append(f"{path}:{lineno}: query-id {qid!r} not in queries.jsonl")
                continue
            if did not in corpus:
                problems.append(f"{path}:{lineno}: corpus-id {did!r} not in corpus.jsonl")
                continue
            rows.append({"query-id": qid, "corpus-id": did, "score": score_val})
        splits[split] = rows
    if problems:
        raise DatasetError(problems)
    return TaskDataset(TaskType.RETRIEVAL, manifest, splits, corpus=corpus, queries=queries)


def load_dataset(manifest_path: str | Path) -> TaskDataset:
    """Load and schema-validate a dataset; problems carry file:line context."""
    path = Path(manifest_path)
    manifest = load_manifest(path)
    root = path.parent
    if manifest.task is TaskType.RETRIEVAL:
        return _load_retrieval(root, manifest)

    problems: list[str] = []
    splits: dict[str, list[dict]] = {}
    for split in manifest.splits:
        split_path = root / f"{split}.jsonl"
        if not split_path.exists():
            problems.append(f"{split_path}: split file for {split!r} not found")
            continue
        records = []
        seen_ids = set()
        for lineno, obj in _read_jsonl(split_path):
            record = _validate_record(manifest.task, obj, f"{split_path}:{lineno}", problems)
            if record is None:
                continue
            rid = str(record["id"])
            if rid in seen_ids:
                problems.append(f"{split_path}:{lineno}: duplicate record id {rid!r}")
                continue
            seen_ids.add(rid)
            records.append(record)
        splits[split] = records
    if problems:
        raise DatasetError(problems)
    return TaskDataset(manifest.task, manifest, splits)


# ---------------------------------------------------------------------------
# Decompose / recompose
# ---------------------------------------------------------------------------

RETRIEVAL_CORPUS_PREFIX = "corpus"
RETRIEVAL_QUERY_PREFIX = "query"


def record_split(record_id: str) -> str | None:
    """Split a namespaced record key belongs to (None for the shared
    retrieval corpus/queries)."""
    prefix = record_id.split("/", 1)[0]
    if prefix in (RETRIEVAL_CORPUS_PREFIX, RETRIEVAL_QUERY_PREFIX):
        return None
    return prefix


def _unit_fields(task: TaskType, record: dict) -> list[FieldPath]:
    if task is TaskType.CLASSIFICATION:
        fields = [FieldPath("text")]
    elif task is TaskType.CLUSTERING:
        fields = [FieldPath("sentences", i) for i in range(len(record["sentences"]))]
    elif task in (TaskType.PAIR_CLASSIFICATION, TaskType.STS):
        fields = [FieldPath("sentence1"), FieldPath("sentence2")]
    elif task is TaskType.RERANKING:
        fields = [FieldPath("query")]
        fields += [FieldPath("positive", i) for i in range(len(record["positive"]))]
        fields += [FieldPath("negative", i) for i in range(len(record["negative"]))]
    else:
        raise ValueError(f"no unit fields for task {task}")
    return fields


def get_text(record: Mapping[str, Any], fp: FieldPath) -> str:
    val = record[fp.field]
    return val if fp.index is None else val[fp.index]


def set_text(record: dict, fp: FieldPath, text: str) -> None:
    if fp.index is None:
        record[fp.field] = text
    else:
        record[fp.field][fp.index] = text


def decompose(ds: TaskDataset, splits_filter: Sequence[str] | None = None) -> list[SequenceUnit]:
    """One unit per translatable text field, in deterministic file order.

    Labels, ids, and numeric scores never become units; empty-string fields
    (legal only for corpus titles) produce no unit. The retrieval corpus and
    queries are shared across splits, so they are decomposed regardless of
    the split filter.
    """
    did = ds.manifest.dataset_id
    units: list[SequenceUnit] = []
    if ds.task is TaskType.RETRIEVAL:
        for qid, text in (ds.queries or {}).items():
            if text:
                units.append(SequenceUnit.make(did, f"{RETRIEVAL_QUERY_PREFIX}/{qid}", FieldPath("text"), text))
        for doc_id, doc in (ds.corpus or {}).items():
            for fp in (FieldPath("title"), FieldPath("text")):
                text = doc[fp.field]
                if text:
                    units.append(SequenceUnit.make(did, f"{RETRIEVAL_CORPUS_PREFIX}/{doc_id}", fp, text))
        return units

    for split, records in ds.splits.items():
        if splits_filter is not None and split not in splits_filter:
            continue
        for record in records:
            rid = f"{split}/{record['id']}"
            for fp in _unit_fields(ds.task, record):
                text = get_text(record, fp)
                if text:
                    units.append(SequenceUnit.make(did, rid, fp, text))
    return units


class _UnitView:
    """Per-record unit outcomes resolved against translations and verdicts."""

    def __init__(
        self,
        ds: TaskDataset,
        translations: Mapping[str, str],
        verdicts: Mapping[str, ValidationVerdict],
        processed_splits: Sequence[str] | None,
    ):
        self.translations = translations
        self.verdicts = verdicts
        if processed_splits is None:
            processed_splits = list(ds.splits)
        self.processed = set(processed_splits)
        # Retrieval corpus/queries are processed whenever anything is.
        self.globals_processed = bool(self.processed)
        self.units = {u.unit_id: u for u in decompose(ds)}
        self.by_record: dict[str, list[SequenceUnit]] = {}
        for unit in self.units.values():
            self.by_record.setdefault(unit.record_id, []).append(unit)

    def _is_processed(self, unit: SequenceUnit) -> bool:
        split = record_split(unit.record_id)
        return self.globals_processed if split is None else split in self.processed

    def outcome(self, unit: SequenceUnit) -> tuple[bool, str, str]:
        """(kept, new_text, failure_stage) for one unit."""
        if not self._is_processed(unit):
            return True, self.translations.get(unit.unit_id, unit.source_text), ""
        verdict = self.verdicts.get(unit.unit_id)
        if verdict is None:
            raise DatasetError(
                f"unit {unit.unit_id} ({unit.record_id} {unit.field_path}) has no verdict "
                "but its split was processed"
            )
        if not verdict.kept:
            stage = verdict.failure_stage.value if verdict.failure_stage else "unknown"
            return False, "", stage
        if unit.unit_id not in self.translations:
            raise DatasetError(
                f"unit {unit.unit_id} ({unit.record_id} {unit.field_path}) was kept "
                "but has no translation"
            )
        return True, self.translations[unit.unit_id], ""

    def record_outcomes(self, record_id: str) -> list[tuple[SequenceUnit, bool, str, str]]:
        out = []
        for unit in self.by_record.get(record_id, []):
            kept, text, stage = self.outcome(unit)
            out.append((unit, kept, text, stage))
        return out


def _recompose_retrieval(ds: TaskDataset, view: _UnitView, log: DropLog) -> TaskDataset:
    corpus: dict[str, dict] = {}
    for doc_id, doc in (ds.corpus or {}).items():
        rid = f"{RETRIEVAL_CORPUS_PREFIX}/{doc_id}"
        outcomes = view.record_outcomes(rid)
        if all(kept for _, kept, _, _ in outcomes):
            new_doc = dict(doc)
            for unit, _, text, _ in outcomes:
                new_doc[unit.field_path.field] = text
            corpus[doc_id] = new_doc
        else:
            stage = next(s for _, kept, _, s in outcomes if not kept)
            log.add(rid, DropReason.UNIT_FAILED, stage)

    queries: dict[str, str] = {}
    failed_queries: dict[str, str] = {}
    for qid, text in (ds.queries or {}).items():
        rid = f"{RETRIEVAL_QUERY_PREFIX}/{qid}"
        outcomes = view.record_outcomes(rid)
        if all(kept for _, kept, _, _ in outcomes):
            queries[qid] = outcomes[0][2] if outcomes else text
        else:
            failed_queries[qid] = next(s for _, kept, _, s in outcomes if not kept)

    qrels_before: dict[str, int] = {}
    qrels_after: dict[str, int] = {}
    splits: dict[str, list[dict]] = {}
    for split, rows in ds.splits.items():
        kept_rows = []
        for row in rows:
            qrels_before[row["query-id"]] = qrels_before.get(row["query-id"], 0) + 1
            if row["query-id"] in queries and row["corpus-id"] in corpus:
                kept_rows.append(dict(row))
                qrels_after[row["query-id"]] = qrels_after.get(row["query-id"], 0) + 1
        splits[split] = kept_rows

    for qid, stage in failed_queries.items():
        log.add(f"{RETRIEVAL_QUERY_PREFIX}/{qid}", DropReason.UNIT_FAILED, stage)
    # A query that lost every qrel it had carries no evaluable signal.
    orphaned = [q for q in queries if qrels_before.get(q, 0) > 0 and qrels_after.get(q, 0) == 0]
    for qid in orphaned:
        del queries[qid]
        log.add(f"{RETRIEVAL_QUERY_PREFIX}/{qid}", DropReason.ORPHANED_REFERENCE, "recompose")
        for split, rows in splits.items():
            splits[split] = [r for r in rows if r["query-id"] != qid]
    return TaskDataset(ds.task, ds.manifest, splits, corpus=corpus, queries=queries)


def recompose(
    ds: TaskDataset,
    translations: Mapping[str, str],
    verdicts: Mapping[str, ValidationVerdict],
    processed_splits: Sequence[str] | None = None,
) -> tuple[TaskDataset, DropLog]:
    """Replace kept units' texts with their translations and apply the
    per-task drop policy.

    Every unit in a processed split must have a verdict; units in other
    splits pass through (translated when a translation is present). The
    output dataset satisfies all schema invariants, and dropped records are
    logged exactly once.
    """
    log = DropLog()
    view = _UnitView(ds, translations, verdicts, processed_splits)
    if ds.task is TaskType.RETRIEVAL:
        return _recompose_retrieval(ds, view, log), log

    splits: dict[str, list[dict]] = {}
    for split, records in ds.splits.items():
        kept_records = []
        for record in records:
            rid = f"{split}/{record['id']}"
            outcomes = view.record_outcomes(rid)
            new_record = json.loads(json.dumps(record))  # deep copy, JSON types only
            failed = [(unit, stage) for unit, kept, _, stage in outcomes if not kept]

            if ds.task in (TaskType.CLASSIFICATION, TaskType.PAIR_CLASSIFICATION, TaskType.STS):
                if failed:
                    log.add(rid, DropReason.UNIT_FAILED, failed[0][1])
                    continue
                for unit, _, text, _ in outcomes:
                    set_text(new_record, unit.field_path, text)
                kept_records.append(new_record)
            elif ds.task is TaskType.CLUSTERING:
                keep_idx = []
                texts = {}
                for unit, kept, text, _ in outcomes:
                    if kept:
                        keep_idx.append(unit.field_path.index)
                        texts[unit.field_path.index] = text
                if not keep_idx:
                    log.add(rid, DropReason.EMPTY_AFTER_FILTER, "recompose")
                    continue
                keep_idx.sort()
                new_record["sentences"] = [texts[i] for i in keep_idx]
                new_record["labels"] = [record["labels"][i] for i in keep_idx]
                kept_records.append(new_record)
            elif ds.task is TaskType.RERANKING:
                by_field: dict[str, dict[int | None, tuple[bool, str, str]]] = {}
                for unit, kept, text, stage in outcomes:
                    by_field.setdefault(unit.field_path.field, {})[unit.field_path.index] = (kept, text, stage)
                query_kept, query_text, query_stage = by_field["query"][None]
                if not query_kept:
                    log.add(rid, DropReason.UNIT_FAILED, query_stage)
                    continue
                positives = [
                    text for i, (kept, text, _) in sorted(by_field.get("positive", {}).items()) if kept
                ]
                negatives = [
                    text for i, (kept, text, _) in sorted(by_field.get("negative", {}).items()) if kept
                ]
                if not positives:
                    log.add(rid, DropReason.EMPTY_AFTER_FILTER, "recompose")
                    continue
                new_record["query"] = query_text
                new_record["positive"] = positives
                new_record["negative"] = negatives
                kept_records.append(new_record)
        splits[split] = kept_records
    return TaskDataset(ds.task, ds.manifest, splits), log


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def _dump_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def write_dataset(ds: TaskDataset, out_dir: str | Path) -> Path:
    """Write the dataset in its task schema; returns the manifest path.

    load_dataset(write_dataset(ds)) round-trips to an equal dataset.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    try:
        if ds.task is TaskType.RETRIEVAL:
            _dump_jsonl(
                root / "corpus.jsonl",
                ({"_id": i, "title": d["title"], "text": d["text"]} for i, d in (ds.corpus or {}).items()),
            )
            _dump_jsonl(
                root / "queries.jsonl",
                ({"_id": i, "text": t} for i, t in (ds.queries or {}).items()),
            )
            qrels_dir = root / "qrels"
            qrels_dir.mkdir(exist_ok=True)
            for split, rows in ds.splits.items():
                with (qrels_dir / f"{split}.tsv").open("w", encoding="utf-8") as handle:
                    handle.write("\t".join(QRELS_HEADER) + "\n")
                    for row in rows:
                        handle.write(f"{row['query-id']}\t{row['corpus-id']}\t{row['score']}\n")
        else:
            keys = _SCHEMA_KEYS[ds.task]
            for split, records in ds.splits.items():
                _dump_jsonl(root / f"{split}.jsonl", ({k: r[k] for k in keys} for r in records))
        manifest_path = root / "manifest.json"
        manifest_path.write_text(
            json.dumps(
                {
                    "dataset_id": ds.manifest.dataset_id,
                    "task": ds.manifest.task.value,
                    "source_lang": ds.manifest.source_lang,
                    "license": ds.manifest.license,
                    "splits": list(ds.splits),
                },
                ensure_ascii=False,
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise DatasetError(f"{exc.filename or out_dir}: {exc.strerror or exc}") from exc
    return manifest_path


def record_counts(ds: TaskDataset) -> dict[str, int]:
    """Record count per split; retrieval adds the shared corpus/queries
    under pseudo-split names."""
    counts = {split: len(records) for split, records in ds.splits.items()}
    if ds.task is TaskType.RETRIEVAL:
        counts[RETRIEVAL_CORPUS_PREFIX] = len(ds.corpus or {})
        counts[RETRIEVAL_QUERY_PREFIX] = len(ds.queries or {})
    return counts


def total_records(ds: TaskDataset, splits: Sequence[str] | None = None) -> int:
    """Record population size for kept-ratio bookkeeping.

    For retrieval this is corpus docs + queries (qrel rows are references,
    not records); for the other tasks it is the record count over the given
    splits (all splits when None).
    """
    if ds.task is TaskType.RETRIEVAL:
        return len(ds.corpus or {}) + len(ds.queries or {})
    names = list(ds.splits) if splits is None else [s for s in splits if s in ds.splits]
    return sum(len(ds.splits[s]) for s in names)
