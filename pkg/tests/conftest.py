"""Shared fixtures: small in-memory datasets of each task shape, plus
verdict constructors for recomposition tests."""

from __future__ import annotations

import random

import pytest

from benchforge.core import (
    CheckStatus,
    FailureStage,
    PipelineConfig,
    ValidationVerdict,
)
from benchforge.dataset_io import Manifest, TaskDataset, TaskType, write_dataset


def make_manifest(dataset_id: str, task: TaskType, splits: list[str]) -> Manifest:
    return Manifest(
        dataset_id=dataset_id,
        task=task,
        source_lang="eng_Latn",
        license="cc-by-4.0",
        splits=splits,
    )


def build_classification(n: int = 4, split: str = "test", dataset_id: str = "cls-fix") -> TaskDataset:
    records = [{"id": str(i), "text": f"classification sample {i}", "label": i % 2} for i in range(n)]
    return TaskDataset(
        TaskType.CLASSIFICATION,
        make_manifest(dataset_id, TaskType.CLASSIFICATION, [split]),
        {split: records},
    )


def build_sts(n: int = 4, split: str = "test", dataset_id: str = "sts-fix") -> TaskDataset:
    records = [
        {
            "id": str(i),
            "sentence1": f"first sentence {i}",
            "sentence2": f"second sentence {i}",
            "score": float(i % 6),
        }
        for i in range(n)
    ]
    return TaskDataset(TaskType.STS, make_manifest(dataset_id, TaskType.STS, [split]), {split: records})


def build_pair_classification(n: int = 4, split: str = "test", dataset_id: str = "pc-fix") -> TaskDataset:
    records = [
        {
            "id": str(i),
            "sentence1": f"left sentence {i}",
            "sentence2": f"right sentence {i}",
            "label": i % 2,
        }
        for i in range(n)
    ]
    return TaskDataset(
        TaskType.PAIR_CLASSIFICATION,
        make_manifest(dataset_id, TaskType.PAIR_CLASSIFICATION, [split]),
        {split: records},
    )


def build_clustering(n: int = 3, sentences_per: int = 4, split: str = "test", dataset_id: str = "clu-fix") -> TaskDataset:
    records = [
        {
            "id": str(i),
            "sentences": [f"cluster sentence {i}-{j}" for j in range(sentences_per)],
            "labels": [j % 2 for j in range(sentences_per)],
        }
        for i in range(n)
    ]
    return TaskDataset(
        TaskType.CLUSTERING, make_manifest(dataset_id, TaskType.CLUSTERING, [split]), {split: records}
    )


def build_reranking(n: int = 3, split: str = "test", dataset_id: str = "rr-fix") -> TaskDataset:
    records = [
        {
            "id": str(i),
            "query": f"rerank query {i}",
            "positive": [f"good answer {i}-{j}" for j in range(2)],
            "negative": [f"bad answer {i}-{j}" for j in range(3)],
        }
        for i in range(n)
    ]
    return TaskDataset(
        TaskType.RERANKING, make_manifest(dataset_id, TaskType.RERANKING, [split]), {split: records}
    )


def build_retrieval(
    n_docs: int = 3, n_queries: int = 2, split: str = "test", dataset_id: str = "ret-fix"
) -> TaskDataset:
    corpus = {f"d{i}": {"title": f"document title {i}", "text": f"document body {i}"} for i in range(n_docs)}
    queries = {f"q{i}": f"retrieval query {i}" for i in range(n_queries)}
    qrels = [
        {"query-id": f"q{i}", "corpus-id": f"d{i % n_docs}", "score": 1}
        for i in range(n_queries)
    ]
    return TaskDataset(
        TaskType.RETRIEVAL,
        make_manifest(dataset_id, TaskType.RETRIEVAL, [split]),
        {split: qrels},
        corpus=corpus,
        queries=queries,
    )


BUILDERS = {
    TaskType.CLASSIFICATION: build_classification,
    TaskType.STS: build_sts,
    TaskType.PAIR_CLASSIFICATION: build_pair_classification,
    TaskType.CLUSTERING: build_clustering,
    TaskType.RERANKING: build_reranking,
    TaskType.RETRIEVAL: build_retrieval,
}


def random_dataset(task: TaskType, rng: random.Random, dataset_id: str = "rand") -> TaskDataset:
    """Small randomized dataset of the given shape."""
    if task is TaskType.RETRIEVAL:
        n_docs = rng.randint(2, 6)
        n_queries = rng.randint(1, 4)
        corpus = {
            f"d{i}": {"title": f"t{i} {rng.random():.3f}", "text": f"body {i} {rng.random():.3f}"}
            for i in range(n_docs)
        }
        queries = {f"q{i}": f"query {i} {rng.random():.3f}" for i in range(n_queries)}
        qrels = []
        for qi in range(n_queries):
            for di in range(n_docs):
                if rng.random() < 0.5:
                    qrels.append({"query-id": f"q{qi}", "corpus-id": f"d{di}", "score": rng.randint(1, 2)})
        if not qrels:
            qrels.append({"query-id": "q0", "corpus-id": "d0", "score": 1})
        return TaskDataset(
            task, make_manifest(dataset_id, task, ["test"]), {"test": qrels}, corpus=corpus, queries=queries
        )
    n = rng.randint(2, 6)
    if task is TaskType.CLASSIFICATION:
        ds = build_classification(n, dataset_id=dataset_id)
    elif task is TaskType.STS:
        ds = build_sts(n, dataset_id=dataset_id)
    elif task is TaskType.PAIR_CLASSIFICATION:
        ds = build_pair_classification(n, dataset_id=dataset_id)
    elif task is TaskType.CLUSTERING:
        ds = build_clustering(n, sentences_per=rng.randint(2, 5), dataset_id=dataset_id)
    else:
        ds = build_reranking(n, dataset_id=dataset_id)
    return ds


def kept_verdict(unit_id: str, sem: float = 0.95, judge: float = 1.0) -> ValidationVerdict:
    return ValidationVerdict(
        unit_id=unit_id,
        lang_check=CheckStatus.PASS,
        sem_check=CheckStatus.PASS,
        judge_check=CheckStatus.PASS,
        kept=True,
        sem_score=sem,
        judge_score=judge,
    )


def failed_verdict(unit_id: str, stage: FailureStage = FailureStage.SEM) -> ValidationVerdict:
    if stage in (FailureStage.SOURCE_LANG, FailureStage.TRANSLATION):
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.SKIPPED,
            sem_check=CheckStatus.SKIPPED,
            judge_check=CheckStatus.SKIPPED,
            kept=False,
            failure_stage=stage,
        )
    if stage is FailureStage.LANG:
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.FAIL,
            sem_check=CheckStatus.SKIPPED,
            judge_check=CheckStatus.SKIPPED,
            kept=False,
            failure_stage=stage,
        )
    if stage is FailureStage.SEM:
        return ValidationVerdict(
            unit_id=unit_id,
            lang_check=CheckStatus.PASS,
            sem_check=CheckStatus.FAIL,
            judge_check=CheckStatus.SKIPPED,
            kept=False,
            sem_score=0.1,
            failure_stage=stage,
        )
    return ValidationVerdict(
        unit_id=unit_id,
        lang_check=CheckStatus.PASS,
        sem_check=CheckStatus.PASS,
        judge_check=CheckStatus.FAIL,
        kept=False,
        sem_score=0.95,
        judge_score=0.3,
        failure_stage=FailureStage.JUDGE,
    )


def identity_translations(units) -> dict[str, str]:
    return {u.unit_id: u.source_text for u in units}


@pytest.fixture
def mock_config(tmp_path) -> PipelineConfig:
    return PipelineConfig(run_dir=str(tmp_path / "run"))


@pytest.fixture
def classification_manifest(tmp_path):
    ds = build_classification(10)
    return write_dataset(ds, tmp_path / "cls")
