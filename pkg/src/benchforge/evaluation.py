"""Embedding-model evaluation over the six task types, with MTEB-style
metric choices and results-table aggregation.

Embeddings are L2-normalized at the provider boundary, so every downstream
computation (including the logistic-regression and k-means stages) sees unit
vectors and all metrics are invariant under positive rescaling of the raw
embeddings.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml
from sklearn.exceptions import ConvergenceWarning
from sklearn.cluster import KMeans
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import accuracy_score, completeness_score, f1_score, homogeneity_score

from .backends import EmbeddingBackend
from .core import TaskType, nfc
from .dataset_io import TaskDataset
from . import metrics

logger = logging.getLogger(__name__)

MAIN_METRIC = {
    TaskType.RETRIEVAL: "ndcg_at_10",
    TaskType.CLASSIFICATION: "accuracy",
    TaskType.PAIR_CLASSIFICATION: "average_precision",
    TaskType.CLUSTERING: "v_measure",
    TaskType.RERANKING: "map",
    TaskType.STS: "spearman",
}

# Column order of the aggregated results table.
TASK_ORDER = (
    TaskType.RETRIEVAL,
    TaskType.CLASSIFICATION,
    TaskType.PAIR_CLASSIFICATION,
    TaskType.CLUSTERING,
    TaskType.RERANKING,
    TaskType.STS,
)

TASK_HEADERS = {
    TaskType.RETRIEVAL: "Retr.",
    TaskType.CLASSIFICATION: "Class.",
    TaskType.PAIR_CLASSIFICATION: "PairClass.",
    TaskType.CLUSTERING: "Clust.",
    TaskType.RERANKING: "Rerank.",
    TaskType.STS: "STS",
}


class EvalError(Exception):
    pass


@dataclass
class ModelCard:
    """Metadata for one embedding model, including the taxonomy columns of
    the results table (parameter count, dimension, positional encoding,
    instruct tuning)."""

    name: str
    params: int
    dim: int
    pos_encoding: str = "APE"  # APE | RoPE
    instruct_tuned: bool = False
    task_instructions: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise EvalError(f"model {self.name}: dim must be >= 1")
        if self.pos_encoding not in ("APE", "RoPE"):
            raise EvalError(f"model {self.name}: pos_encoding must be APE or RoPE")

    def instruction_for(self, task: TaskType) -> str | None:
        # Instructions apply only to instruct-tuned models.
        if not self.instruct_tuned:
            return None
        return self.task_instructions.get(task.value)

    @staticmethod
    def load(path: str | Path) -> "ModelCard":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        return ModelCard(
            name=data["name"],
            params=int(data["params"]),
            dim=int(data["dim"]),
            pos_encoding=data.get("pos_encoding", "APE"),
            instruct_tuned=bool(data.get("instruct_tuned", False)),
            task_instructions=dict(data.get("task_instructions", {})),
        )

    def display_name(self) -> str:
        return self.name + ("*" if self.instruct_tuned else "")


def format_params(params: int) -> str:
    if params >= 1_000_000_000:
        return f"{params / 1e9:g}B"
    if params >= 1_000_000:
        return f"{params / 1e6:g}M"
    return str(params)


@dataclass
class EvalConfig:
    """Metric constants (MTEB-convention defaults, overridable)."""

    ndcg_k: int = 10
    recall_k: int = 100
    mrr_k: int = 10
    logreg_max_iter: int = 100
    logreg_c: float = 1.0  # inverse L2 strength
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300
    seed: int = 42
    eval_split: str = "test"
    train_split: str = "train"


def text_key(text: str) -> str:
    """Stable id for one text, used by precomputed-embedding files."""
    return hashlib.sha256(nfc(text).encode("utf-8")).hexdigest()


def load_embedding_file(path: str | Path) -> dict[str, np.ndarray]:
    """Read a line-delimited {"id", "vector"} embedding file."""
    table: dict[str, np.ndarray] = {}
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                table[row["id"]] = np.asarray(row["vector"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise EvalError(f"{path}:{lineno}: bad embedding row ({exc})")
    return table


def write_embedding_file(path: str | Path, texts: Sequence[str], backend: EmbeddingBackend) -> int:
    """Precompute embeddings for texts into the {"id","vector"} file format."""
    seen = set()
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for text in texts:
            key = text_key(text)
            if key in seen:
                continue
            seen.add(key)
            vec = backend.embed([text])[0]
            handle.write(json.dumps({"id": key, "vector": list(vec.values)}) + "\n")
            count += 1
    return count


class EmbeddingProvider:
    """L2-normalized embeddings from a live backend or a precomputed table."""

    def __init__(
        self,
        backend: EmbeddingBackend | None = None,
        table: Mapping[str, np.ndarray] | None = None,
        batch_size: int = 64,
    ):
        if backend is None and table is None:
            raise EvalError("provider needs a backend or a precomputed table")
        self.backend = backend
        self.table = table
        self.batch_size = batch_size

    def vectors(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            raise EvalError("no texts to embed")
        if self.table is not None:
            rows = []
            for text in texts:
                key = text_key(text)
                if key not in self.table:
                    raise EvalError(f"precomputed embeddings missing id {key} for text {text[:60]!r}")
                rows.append(self.table[key])
            matrix = np.vstack(rows)
        else:
            rows = []
            for start in range(0, len(texts), self.batch_size):
                for vec in self.backend.embed(list(texts[start : start + self.batch_size])):
                    rows.append(vec.array())
            matrix = np.vstack(rows)
        return metrics.normalize_rows(matrix)


def _instructed(card: ModelCard, task: TaskType, texts: Sequence[str]) -> list[str]:
    """Prepend the per-task instruction to query-side texts."""
    instruction = card.instruction_for(task)
    if not instruction:
        return list(texts)
    return [f"{instruction} {t}" for t in texts]


@dataclass(frozen=True)
class TaskResult:
    task: TaskType
    dataset_id: str
    main_metric: float
    main_metric_name: str
    auxiliary: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "dataset_id": self.dataset_id,
            "main_metric": self.main_metric,
            "main_metric_name": self.main_metric_name,
            "auxiliary": self.auxiliary,
        }


def evaluate_retrieval(
    provider: EmbeddingProvider, ds: TaskDataset, card: ModelCard, cfg: EvalConfig | None = None
) -> TaskResult:
    """Rank the corpus per query by cosine and average nDCG@10 over queries."""
    cfg = cfg or EvalConfig()
    rows = ds.splits.get(cfg.eval_split)
    if rows is None:
        raise EvalError(f"{ds.manifest.dataset_id}: no qrels for split {cfg.eval_split!r}")
    rels: dict[str, dict[str, int]] = {}
    for row in rows:
        rels.setdefault(row["query-id"], {})[row["corpus-id"]] = row["score"]

    doc_ids = list(ds.corpus or {})
    doc_texts = [f"{d['title']} {d['text']}".strip() for d in (ds.corpus or {}).values()]
    query_ids = []
    for qid in ds.queries or {}:
        if any(score > 0 for score in rels.get(qid, {}).values()):
            query_ids.append(qid)
        else:
            logger.warning(
                "%s: query %s has no positive qrels on split %s; excluded",
                ds.manifest.dataset_id, qid, cfg.eval_split,
            )
    if not query_ids:
        raise EvalError(f"{ds.manifest.dataset_id}: no evaluable queries")

    query_texts = _instructed(card, TaskType.RETRIEVAL, [ds.queries[q] for q in query_ids])
    q_mat = provider.vectors(query_texts)
    d_mat = provider.vectors(doc_texts)
    sims = q_mat @ d_mat.T

    ndcg_scores = {k: [] for k in (1, 3, 5, cfg.ndcg_k)}
    ap_scores, recall_scores = [], []
    for qi, qid in enumerate(query_ids):
        order = metrics.rank_order(sims[qi])
        judged = rels[qid]
        ranked_rels = [judged.get(doc_ids[i], 0) for i in order]
        ranked_binary = [1 if r > 0 else 0 for r in ranked_rels]
        total_relevant = sum(1 for r in judged.values() if r > 0)
        for k in ndcg_scores:
            ndcg_scores[k].append(metrics.ndcg_at_k(ranked_rels, list(judged.values()), k))
        ap_scores.append(metrics.average_precision(ranked_binary))
        recall_scores.append(metrics.recall_at_k(ranked_binary, total_relevant, cfg.recall_k))

    aux = {f"ndcg_at_{k}": float(np.mean(v)) for k, v in ndcg_scores.items() if k != cfg.ndcg_k}
    aux["map"] = float(np.mean(ap_scores))
    aux[f"recall_at_{cfg.recall_k}"] = float(np.mean(recall_scores))
    return TaskResult(
        TaskType.RETRIEVAL,
        ds.manifest.dataset_id,
        float(np.mean(ndcg_scores[cfg.ndcg_k])),
        f"ndcg_at_{cfg.ndcg_k}",
        aux,
    )


def evaluate_classification(
    provider: EmbeddingProvider, ds: TaskDataset, card: ModelCard, cfg: EvalConfig | None = None
) -> TaskResult:
    """Logistic regression on train-split embeddings, accuracy on test."""
    cfg = cfg or EvalConfig()
    for split in (cfg.train_split, cfg.eval_split):
        if split not in ds.splits or not ds.splits[split]:
            raise EvalError(f"{ds.manifest.dataset_id}: split {split!r} missing or empty")
    train, test = ds.splits[cfg.train_split], ds.splits[cfg.eval_split]
    train_labels = [r["label"] for r in train]
    test_labels = [r["label"] for r in test]
    unseen = set(map(str, test_labels)) - set(map(str, train_labels))
    if unseen:
        raise EvalError(f"{ds.manifest.dataset_id}: test labels never seen in train: {sorted(unseen)}")

    x_train = provider.vectors(_instructed(card, TaskType.CLASSIFICATION, [r["text"] for r in train]))
    x_test = provider.vectors(_instructed(card, TaskType.CLASSIFICATION, [r["text"] for r in test]))
    clf = LogisticRegression(
        C=cfg.logreg_c, max_iter=cfg.logreg_max_iter, random_state=cfg.seed
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf.fit(x_train, [str(l) for l in train_labels])
    predicted = clf.predict(x_test)
    gold = [str(l) for l in test_labels]
    return TaskResult(
        TaskType.CLASSIFICATION,
        ds.manifest.dataset_id,
        float(accuracy_score(gold, predicted)),
        "accuracy",
        {"f1_macro": float(f1_score(gold, predicted, average="macro"))},
    )


def _best_threshold(sims: np.ndarray, labels: Sequence[int]) -> tuple[float, float]:
    """(best F1, best accuracy) over all similarity cut points."""
    candidates = sorted(set(sims.tolist()))
    thresholds = [candidates[0] - 1.0]
    thresholds += [(a + b) / 2 for a, b in zip(candidates, candidates[1:])]
    thresholds += [candidates[-1] + 1.0]
    gold = np.asarray(labels)
    best_f1 = best_acc = 0.0
    for t in thresholds:
        pred = (sims >= t).astype(int)
        tp = int(np.sum((pred == 1) & (gold == 1)))
        fp = int(np.sum((pred == 1) & (gold == 0)))
        fn = int(np.sum((pred == 0) & (gold == 1)))
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        acc = float(np.mean(pred == gold))
        best_f1 = max(best_f1, f1)
        best_acc = max(best_acc, acc)
    return best_f1, best_acc


def evaluate_pair_classification(
    provider: EmbeddingProvider, ds: TaskDataset, card: ModelCard, cfg: EvalConfig | None = None
) -> TaskResult:
    """Average precision of pair cosine similarity against binary gold labels."""
    cfg = cfg or EvalConfig()
    records = ds.splits.get(cfg.eval_split)
    if not records:
        raise EvalError(f"{ds.manifest.dataset_id}: split {cfg.eval_split!r} missing or empty")
    labels = [r["label"] for r in records]
    if len(set(labels)) < 2:
        raise EvalError(f"{ds.manifest.dataset_id}: single-class gold labels, AP undefined")
    left = provider.vectors(_instructed(card, TaskType.PAIR_CLASSIFICATION, [r["sentence1"] for r in records]))
    right = provider.vectors(_instructed(card, TaskType.PAIR_CLASSIFICATION, [r["sentence2"] for r in records]))
    sims = np.sum(left * right, axis=1)
    order = metrics.rank_order(sims)
    ap = metrics.average_precision([labels[i] for i in order])
    best_f1, best_acc = _best_threshold(sims, labels)
    return TaskResult(
        TaskType.PAIR_CLASSIFICATION,
        ds.manifest.dataset_id,
        ap,
        "average_precision",
        {"best_f1": best_f1, "best_accuracy": best_acc},
    )


def evaluate_clustering(
    provider: EmbeddingProvider, ds: TaskDataset, card: ModelCard, cfg: EvalConfig | None = None
) -> TaskResult:
    """k-means per record with k = distinct gold labels; V-measure vs gold."""
    cfg = cfg or EvalConfig()
    records = ds.splits.get(cfg.eval_split)
    if not records:
        raise EvalError(f"{ds.manifest.dataset_id}: split {cfg.eval_split!r} missing or empty")
    v_scores, hom_scores, com_scores = [], [], []
    for record in records:
        gold = record["labels"]
        k = len(set(map(str, gold)))
        if len(record["sentences"]) < k:
            logger.warning(
                "%s: record %s has %d sentences for %d clusters; skipped",
                ds.manifest.dataset_id, record["id"], len(record["sentences"]), k,
            )
            continue
        x = provider.vectors(_instructed(card, TaskType.CLUSTERING, record["sentences"]))
        km = KMeans(
            n_clusters=k,
            init="k-means++",
            n_init=cfg.kmeans_restarts,
            max_iter=cfg.kmeans_max_iter,
            random_state=cfg.seed,
        )
        pred = km.fit_predict(x)
        gold_str = [str(g) for g in gold]
        v_scores.append(metrics.v_measure(gold_str, pred))
        hom_scores.append(float(homogeneity_score(gold_str, pred)))
        com_scores.append(float(completeness_score(gold_str, pred)))
    if not v_scores:
        raise EvalError(f"{ds.manifest.dataset_id}: no evaluable clustering records")
    return TaskResult(
        TaskType.CLUSTERING,
        ds.manifest.dataset_id,
        float(np.mean(v_scores)),
        "v_measure",
        {"homogeneity": float(np.mean(hom_scores)), "completeness": float(np.mean(com_scores))},
    )


def evaluate_reranking(
    provider: EmbeddingProvider, ds: TaskDataset, card: ModelCard, cfg: EvalConfig | None = None
) -> TaskResult:
    """Rank positives+negatives per query by cosine; MAP over queries."""
    cfg = cfg or EvalConfig()
    records = ds.splits.get(cfg.eval_split)
    if not records:
        raise EvalError(f"{ds.manifest.dataset_id}: split {cfg.eval_split!r} missing or empty")
    ap_scores, rr_scores = [], []
    for record in records:
        docs = list(record["positive"]) + list(record["negative"])
        labels = [1] * len(record["positive"]) + [0] * len(record["negative"])
        q_vec = provider.vectors(_instructed(card, TaskType.RERANKING, [record["query"]]))
        d_mat = provider.vectors(docs)
        sims = (q_vec @ d_mat.T)[0]
        ranked = [labels[i] for i in metrics.rank_order(sims)]
        ap_scores.append(metrics.average_precision(ranked))
        rr_scores.append(metrics.reciprocal_rank(ranked, cfg.mrr_k))
    return TaskResult(
        TaskType.RERANKING,
        ds.manifest.dataset_id,
        float(np.mean(ap_scores)),
        "map",
        {f"mrr_at_{cfg.mrr_k}": float(np.mean(rr_scores))},
    )


def evaluate_sts(
    provider: EmbeddingProvider, ds: TaskDataset, card: ModelCard, cfg: EvalConfig | None = None
) -> TaskResult:
    """Spearman correlation of pair cosine similarity with gold scores."""
    cfg = cfg or EvalConfig()
    records = ds.splits.get(cfg.eval_split)
    if not records:
        raise EvalError(f"{ds.manifest.dataset_id}: split {cfg.eval_split!r} missing or empty")
    if len(records) < 2:
        raise EvalError(f"{ds.manifest.dataset_id}: need at least 2 pairs for correlation")
    left = provider.vectors(_instructed(card, TaskType.STS, [r["sentence1"] for r in records]))
    right = provider.vectors(_instructed(card, TaskType.STS, [r["sentence2"] for r in records]))
    sims = np.sum(left * right, axis=1)
    gold = [float(r["score"]) for r in records]
    try:
        rho = metrics.spearman(sims, gold)
        r = metrics.pearson(sims, gold)
    except ValueError as exc:
        raise EvalError(f"{ds.manifest.dataset_id}: {exc}")
    return TaskResult(TaskType.STS, ds.manifest.dataset_id, rho, "spearman", {"pearson": r})


_EVALUATORS = {
    TaskType.RETRIEVAL: evaluate_retrieval,
    TaskType.CLASSIFICATION: evaluate_classification,
    TaskType.PAIR_CLASSIFICATION: evaluate_pair_classification,
    TaskType.CLUSTERING: evaluate_clustering,
    TaskType.RERANKING: evaluate_reranking,
    TaskType.STS: evaluate_sts,
}


def evaluate_dataset(
    provider: EmbeddingProvider, ds: TaskDataset, card: ModelCard, cfg: EvalConfig | None = None
) -> TaskResult:
    return _EVALUATORS[ds.task](provider, ds, card, cfg)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class ReportRow:
    """One model's line in the results table (percentages)."""

    model: ModelCard
    per_task: dict[TaskType, float]
    overall: float
    dataset_count: int

    def to_dict(self) -> dict:
        return {
            "model": self.model.name,
            "size": format_params(self.model.params),
            "dim": self.model.dim,
            "type": self.model.pos_encoding,
            "instruct_tuned": self.model.instruct_tuned,
            "per_task": {t.value: v for t, v in self.per_task.items()},
            "avg": self.overall,
            "dataset_count": self.dataset_count,
        }


def _stable_mean(values: Sequence[float]) -> float:
    # Summing in sorted order makes the mean permutation-invariant at float
    # precision, not just mathematically.
    ordered = sorted(values)
    return sum(ordered) / len(ordered)


def aggregate(results: Sequence[TaskResult], card: ModelCard) -> ReportRow:
    """Per-task averages over datasets, then the unweighted mean of those
    averages, reported as percentages (full precision retained)."""
    if not results:
        raise EvalError("no results to aggregate")
    by_task: dict[TaskType, list[float]] = {}
    for result in results:
        by_task.setdefault(result.task, []).append(result.main_metric * 100.0)
    per_task = {task: _stable_mean(vals) for task, vals in by_task.items()}
    overall = _stable_mean([per_task[t] for t in TASK_ORDER if t in per_task])
    return ReportRow(card, per_task, overall, len(results))


@dataclass
class BenchmarkReport:
    """Per-model result rows plus their rendered table."""

    rows: list[ReportRow]

    def sorted_by_overall(self) -> "BenchmarkReport":
        return BenchmarkReport(sorted(self.rows, key=lambda row: -row.overall))

    def to_dict(self) -> dict:
        return {"rows": [row.to_dict() for row in self.rows]}

    def render(self) -> str:
        return render_table(self.rows)


def render_table(rows: Sequence[ReportRow]) -> str:
    """Aligned-text results table (Size, Dim, Type, six tasks, Avg)."""
    headers = ["Model", "Size", "Dim", "Type"] + [TASK_HEADERS[t] for t in TASK_ORDER] + ["Avg."]
    body = []
    for row in rows:
        cells = [
            row.model.display_name(),
            format_params(row.model.params),
            str(row.model.dim),
            row.model.pos_encoding,
        ]
        for task in TASK_ORDER:
            cells.append(f"{row.per_task[task]:.2f}" if task in row.per_task else "-")
        cells.append(f"{row.overall:.2f}")
        body.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for cells in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
    return "\n".join(lines)
