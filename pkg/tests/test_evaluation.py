import json
import math
import random

import numpy as np
import pytest

from conftest import build_clustering, build_retrieval, make_manifest

from benchforge.backends import MockEmbeddingBackend
from benchforge.dataset_io import TaskDataset, TaskType
from benchforge.evaluation import (
    EmbeddingProvider,
    EvalConfig,
    EvalError,
    ModelCard,
    TaskResult,
    aggregate,
    evaluate_classification,
    evaluate_clustering,
    evaluate_dataset,
    evaluate_pair_classification,
    evaluate_reranking,
    evaluate_retrieval,
    evaluate_sts,
    format_params,
    load_embedding_file,
    render_table,
    text_key,
    write_embedding_file,
)

CARD = ModelCard(name="toy-model", params=1_000_000, dim=8)
DIM = 8


def basis(i, scale=1.0, dim=DIM):
    vec = [0.0] * dim
    vec[i] = scale
    return vec


def blend(i, j, wi, wj, dim=DIM):
    vec = [0.0] * dim
    vec[i], vec[j] = wi, wj
    return vec


def forced_provider(assignments):
    emb = MockEmbeddingBackend(dim=DIM)
    for text, vec in assignments.items():
        emb.force_vector(text, vec)
    return EmbeddingProvider(backend=emb)


def retrieval_ds(qrels, queries, corpus):
    return TaskDataset(
        TaskType.RETRIEVAL,
        make_manifest("ret-eval", TaskType.RETRIEVAL, ["test"]),
        {"test": qrels},
        corpus=corpus,
        queries=queries,
    )


class TestRetrieval:
    def test_perfect_ranking(self):
        corpus = {"A": {"title": "", "text": "doc A"}, "B": {"title": "", "text": "doc B"}}
        ds = retrieval_ds(
            [{"query-id": "q", "corpus-id": "A", "score": 1}],
            {"q": "the query"},
            corpus,
        )
        provider = forced_provider({"the query": basis(0), "doc A": basis(0), "doc B": basis(1)})
        result = evaluate_retrieval(provider, ds, CARD)
        assert result.main_metric == pytest.approx(1.0, abs=1e-12)
        assert result.auxiliary["map"] == pytest.approx(1.0, abs=1e-12)

    def test_relevant_at_rank_two(self):
        corpus = {"A": {"title": "", "text": "doc A"}, "B": {"title": "", "text": "doc B"}}
        ds = retrieval_ds(
            [{"query-id": "q", "corpus-id": "A", "score": 1}],
            {"q": "the query"},
            corpus,
        )
        provider = forced_provider(
            {"the query": basis(0), "doc A": blend(0, 1, 0.6, 0.8), "doc B": basis(0)}
        )
        result = evaluate_retrieval(provider, ds, CARD)
        assert result.main_metric == pytest.approx(1 / math.log2(3), abs=1e-12)
        assert result.auxiliary["map"] == pytest.approx(0.5, abs=1e-12)

    def test_title_concatenated_into_doc_text(self):
        corpus = {"A": {"title": "Title", "text": "body"}}
        ds = retrieval_ds(
            [{"query-id": "q", "corpus-id": "A", "score": 1}], {"q": "q text"}, corpus
        )
        provider = forced_provider({"q text": basis(0), "Title body": basis(0)})
        assert evaluate_retrieval(provider, ds, CARD).main_metric == pytest.approx(1.0)

    def test_query_without_positive_qrels_excluded(self, caplog):
        corpus = {"A": {"title": "", "text": "doc A"}}
        ds = retrieval_ds(
            [{"query-id": "q1", "corpus-id": "A", "score": 1}, {"query-id": "q2", "corpus-id": "A", "score": 0}],
            {"q1": "covered query", "q2": "empty query"},
            corpus,
        )
        provider = forced_provider({"covered query": basis(0), "empty query": basis(1), "doc A": basis(0)})
        with caplog.at_level("WARNING"):
            result = evaluate_retrieval(provider, ds, CARD)
        assert result.main_metric == pytest.approx(1.0)
        assert any("no positive qrels" in m for m in caplog.messages)

    def test_graded_gains(self):
        corpus = {
            "A": {"title": "", "text": "doc A"},
            "B": {"title": "", "text": "doc B"},
        }
        ds = retrieval_ds(
            [
                {"query-id": "q", "corpus-id": "A", "score": 1},
                {"query-id": "q", "corpus-id": "B", "score": 2},
            ],
            {"q": "the query"},
            corpus,
        )
        # ranking: A (rel 1) first, B (rel 2) second -> suboptimal
        provider = forced_provider(
            {"the query": basis(0), "doc A": basis(0), "doc B": blend(0, 1, 0.6, 0.8)}
        )
        result = evaluate_retrieval(provider, ds, CARD)
        expected = (1.0 + 3.0 / math.log2(3)) / (3.0 + 1.0 / math.log2(3))
        assert result.main_metric == pytest.approx(expected, abs=1e-12)


class TestClassification:
    @staticmethod
    def _ds(train_texts, train_labels, test_texts, test_labels):
        return TaskDataset(
            TaskType.CLASSIFICATION,
            make_manifest("cls-eval", TaskType.CLASSIFICATION, ["train", "test"]),
            {
                "train": [
                    {"id": f"tr{i}", "text": t, "label": l}
                    for i, (t, l) in enumerate(zip(train_texts, train_labels))
                ],
                "test": [
                    {"id": f"te{i}", "text": t, "label": l}
                    for i, (t, l) in enumerate(zip(test_texts, test_labels))
                ],
            },
        )

    def _separable(self):
        train_texts = [f"pos {i}" for i in range(4)] + [f"neg {i}" for i in range(4)]
        train_labels = [1] * 4 + [0] * 4
        test_texts = ["pos t0", "pos t1", "neg t0", "neg t1"]
        assignments = {}
        for t in train_texts + test_texts:
            assignments[t] = basis(0) if t.startswith("pos") else basis(1)
        return train_texts, train_labels, test_texts, assignments

    def test_linearly_separable(self):
        train_texts, train_labels, test_texts, assignments = self._separable()
        ds = self._ds(train_texts, train_labels, test_texts, [1, 1, 0, 0])
        result = evaluate_classification(forced_provider(assignments), ds, CARD)
        assert result.main_metric == 1.0
        assert result.auxiliary["f1_macro"] == 1.0

    def test_flipped_labels_zero(self):
        train_texts, train_labels, test_texts, assignments = self._separable()
        ds = self._ds(train_texts, train_labels, test_texts, [0, 0, 1, 1])
        result = evaluate_classification(forced_provider(assignments), ds, CARD)
        assert result.main_metric == 0.0

    def test_constant_embeddings_chance_level(self):
        train_texts = [f"t{i}" for i in range(8)]
        test_texts = [f"s{i}" for i in range(4)]
        assignments = {t: basis(0) for t in train_texts + test_texts}
        ds = self._ds(train_texts, [0, 1] * 4, test_texts, [0, 1, 0, 1])
        result = evaluate_classification(forced_provider(assignments), ds, CARD)
        assert result.main_metric == 0.5

    def test_unseen_test_label(self):
        ds = self._ds(["a", "b"], [0, 0], ["c"], [1])
        with pytest.raises(EvalError, match="never seen"):
            evaluate_classification(forced_provider({t: basis(0) for t in "abc"}), ds, CARD)

    def test_missing_train_split(self):
        ds = TaskDataset(
            TaskType.CLASSIFICATION,
            make_manifest("cls-eval", TaskType.CLASSIFICATION, ["test"]),
            {"test": [{"id": "0", "text": "x", "label": 0}]},
        )
        with pytest.raises(EvalError, match="train"):
            evaluate_classification(forced_provider({"x": basis(0)}), ds, CARD)


class TestPairClassification:
    @staticmethod
    def _ds(labels):
        return TaskDataset(
            TaskType.PAIR_CLASSIFICATION,
            make_manifest("pc-eval", TaskType.PAIR_CLASSIFICATION, ["test"]),
            {
                "test": [
                    {"id": str(i), "sentence1": f"L{i}", "sentence2": f"R{i}", "label": l}
                    for i, l in enumerate(labels)
                ]
            },
        )

    def test_separated_perfect_ap(self):
        emb = MockEmbeddingBackend(dim=DIM)
        labels = [1, 1, 0, 0]
        for i, l in enumerate(labels):
            emb.force_pair(f"L{i}", f"R{i}", 0.9 if l else 0.1)
        result = evaluate_pair_classification(EmbeddingProvider(backend=emb), self._ds(labels), CARD)
        assert result.main_metric == 1.0
        assert result.auxiliary["best_f1"] == 1.0
        assert result.auxiliary["best_accuracy"] == 1.0

    def test_inverted_pair(self):
        emb = MockEmbeddingBackend(dim=DIM)
        emb.force_pair("L0", "R0", 0.2)
        emb.force_pair("L1", "R1", 0.9)
        result = evaluate_pair_classification(EmbeddingProvider(backend=emb), self._ds([1, 0]), CARD)
        assert result.main_metric == 0.5

    def test_single_class_error(self):
        emb = MockEmbeddingBackend(dim=DIM)
        with pytest.raises(EvalError, match="single-class"):
            evaluate_pair_classification(EmbeddingProvider(backend=emb), self._ds([1, 1]), CARD)


class TestClustering:
    def test_ideal_separated(self):
        ds = TaskDataset(
            TaskType.CLUSTERING,
            make_manifest("clu-eval", TaskType.CLUSTERING, ["test"]),
            {
                "test": [
                    {
                        "id": "0",
                        "sentences": ["a0", "a1", "b0", "b1"],
                        "labels": ["x", "x", "y", "y"],
                    }
                ]
            },
        )
        provider = forced_provider(
            {"a0": basis(0), "a1": basis(0), "b0": basis(1), "b1": basis(1)}
        )
        result = evaluate_clustering(provider, ds, CARD)
        assert result.main_metric == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.filterwarnings("ignore::sklearn.exceptions.ConvergenceWarning")
    def test_identical_points_zero(self):
        ds = TaskDataset(
            TaskType.CLUSTERING,
            make_manifest("clu-eval", TaskType.CLUSTERING, ["test"]),
            {"test": [{"id": "0", "sentences": ["s0", "s1", "s2", "s3"], "labels": [0, 0, 1, 1]}]},
        )
        provider = forced_provider({f"s{i}": basis(0) for i in range(4)})
        result = evaluate_clustering(provider, ds, CARD)
        assert result.main_metric == pytest.approx(0.0, abs=1e-12)

    def test_record_with_fewer_sentences_than_clusters_skipped(self, caplog):
        # the "tiny" record (constructed in memory, past load validation)
        # asks for 3 clusters from one sentence: skipped with a warning,
        # the healthy record still scores
        ds = TaskDataset(
            TaskType.CLUSTERING,
            make_manifest("clu-eval", TaskType.CLUSTERING, ["test"]),
            {
                "test": [
                    {"id": "ok", "sentences": ["a0", "a1", "b0", "b1"], "labels": [0, 0, 1, 1]},
                    {"id": "tiny", "sentences": ["x0"], "labels": [0, 1, 2]},
                ]
            },
        )
        provider = forced_provider(
            {"a0": basis(0), "a1": basis(0), "b0": basis(1), "b1": basis(1), "x0": basis(2)}
        )
        with caplog.at_level("WARNING"):
            result = evaluate_clustering(provider, ds, CARD)
        assert result.main_metric == pytest.approx(1.0, abs=1e-12)
        assert any("skipped" in m for m in caplog.messages)

    def test_all_records_skipped_is_error(self):
        ds = TaskDataset(
            TaskType.CLUSTERING,
            make_manifest("clu-eval", TaskType.CLUSTERING, ["test"]),
            {"test": [{"id": "tiny", "sentences": ["x0"], "labels": [0, 1, 2]}]},
        )
        with pytest.raises(EvalError, match="no evaluable"):
            evaluate_clustering(forced_provider({"x0": basis(2)}), ds, CARD)


class TestReranking:
    @staticmethod
    def _ds(positive, negative):
        return TaskDataset(
            TaskType.RERANKING,
            make_manifest("rr-eval", TaskType.RERANKING, ["test"]),
            {"test": [{"id": "0", "query": "Q", "positive": positive, "negative": negative}]},
        )

    def test_positive_first(self):
        provider = forced_provider({"Q": basis(0), "good": basis(0), "bad": basis(1)})
        result = evaluate_reranking(provider, self._ds(["good"], ["bad"]), CARD)
        assert result.main_metric == 1.0
        assert result.auxiliary["mrr_at_10"] == 1.0

    def test_positive_second_of_three(self):
        provider = forced_provider(
            {
                "Q": basis(0),
                "good": blend(0, 1, 0.8, 0.6),
                "bad1": basis(0),
                "bad2": basis(1),
            }
        )
        result = evaluate_reranking(provider, self._ds(["good"], ["bad1", "bad2"]), CARD)
        assert result.main_metric == pytest.approx(0.5, abs=1e-12)

    def test_two_positives_ranks_one_and_three(self):
        provider = forced_provider(
            {
                "Q": basis(0),
                "p1": basis(0),
                "p2": blend(0, 1, 0.6, 0.8),
                "n1": blend(0, 1, 0.8, 0.6),
            }
        )
        result = evaluate_reranking(provider, self._ds(["p1", "p2"], ["n1"]), CARD)
        assert result.main_metric == pytest.approx((1.0 + 2 / 3) / 2, abs=1e-12)


class TestSts:
    @staticmethod
    def _ds(gold):
        return TaskDataset(
            TaskType.STS,
            make_manifest("sts-eval", TaskType.STS, ["test"]),
            {
                "test": [
                    {"id": str(i), "sentence1": f"A{i}", "sentence2": f"B{i}", "score": g}
                    for i, g in enumerate(gold)
                ]
            },
        )

    def _provider(self, sims):
        emb = MockEmbeddingBackend(dim=DIM)
        for i, s in enumerate(sims):
            emb.force_pair(f"A{i}", f"B{i}", s)
        return EmbeddingProvider(backend=emb)

    def test_monotone_increasing(self):
        result = evaluate_sts(self._provider([0.1, 0.4, 0.7, 0.9]), self._ds([0.0, 1.5, 3.0, 5.0]), CARD)
        assert result.main_metric == pytest.approx(1.0, abs=1e-12)

    def test_monotone_decreasing(self):
        result = evaluate_sts(self._provider([0.9, 0.7, 0.4, 0.1]), self._ds([0.0, 1.5, 3.0, 5.0]), CARD)
        assert result.main_metric == pytest.approx(-1.0, abs=1e-12)

    def test_tie_fixture_matches_oracle(self):
        from oracles import oracle_spearman

        sims = [0.1, 0.5, 0.5, 0.8, 0.9]
        gold = [0.0, 2.0, 3.0, 4.0, 5.0]
        result = evaluate_sts(self._provider(sims), self._ds(gold), CARD)
        assert result.main_metric == pytest.approx(oracle_spearman(sims, gold), abs=1e-9)
        assert "pearson" in result.auxiliary

    def test_too_few_pairs(self):
        with pytest.raises(EvalError, match="2 pairs"):
            evaluate_sts(self._provider([0.5]), self._ds([1.0]), CARD)


class TestInstructions:
    def test_instruction_changes_query_embedding(self):
        corpus = {"A": {"title": "", "text": "doc A"}, "B": {"title": "", "text": "doc B"}}
        qrels = [{"query-id": "q", "corpus-id": "A", "score": 1}]
        assignments = {
            "q text": basis(1),              # uninstructed query ranks B first
            "Search: q text": basis(0),      # instructed query ranks A first
            "doc A": basis(0),
            "doc B": basis(1),
        }
        instruct_card = ModelCard(
            name="inst", params=1, dim=DIM, instruct_tuned=True,
            task_instructions={"retrieval": "Search:"},
        )
        plain_card = ModelCard(
            name="plain", params=1, dim=DIM, instruct_tuned=False,
            task_instructions={"retrieval": "Search:"},
        )
        ds = retrieval_ds(qrels, {"q": "q text"}, corpus)
        with_instr = evaluate_retrieval(forced_provider(assignments), ds, instruct_card)
        without = evaluate_retrieval(forced_provider(assignments), ds, plain_card)
        assert with_instr.main_metric == pytest.approx(1.0, abs=1e-12)
        assert without.main_metric == pytest.approx(1 / math.log2(3), abs=1e-12)

    def test_instruction_never_applies_to_corpus(self):
        card = ModelCard(
            name="inst", params=1, dim=DIM, instruct_tuned=True,
            task_instructions={"retrieval": "Search:"},
        )
        assert card.instruction_for(TaskType.RETRIEVAL) == "Search:"
        assert card.instruction_for(TaskType.STS) is None


class TestAggregation:
    @staticmethod
    def _results(values):
        order = [
            TaskType.RETRIEVAL,
            TaskType.CLASSIFICATION,
            TaskType.PAIR_CLASSIFICATION,
            TaskType.CLUSTERING,
            TaskType.RERANKING,
            TaskType.STS,
        ]
        return [
            TaskResult(task, f"{task.value}-ds", v / 100.0, "m", {})
            for task, v in zip(order, values)
        ]

    def test_paper_row(self):
        row = aggregate(self._results([40.88, 73.39, 84.47, 52.96, 73.28, 82.94]), CARD)
        assert abs(row.overall - 67.99) <= 0.005

    def test_single_task(self):
        results = [TaskResult(TaskType.STS, "only", 0.5, "spearman", {})]
        assert aggregate(results, CARD).overall == pytest.approx(50.0, abs=1e-9)

    def test_multiple_datasets_per_task_averaged_first(self):
        results = [
            TaskResult(TaskType.STS, "a", 0.2, "m", {}),
            TaskResult(TaskType.STS, "b", 0.4, "m", {}),
            TaskResult(TaskType.RERANKING, "c", 0.9, "m", {}),
        ]
        row = aggregate(results, CARD)
        assert row.per_task[TaskType.STS] == pytest.approx(30.0, abs=1e-9)
        assert row.overall == pytest.approx(60.0, abs=1e-9)

    def test_permutation_invariant_bitwise(self):
        rng = random.Random(3)
        results = [
            TaskResult(rng.choice(list(TaskType)), f"d{i}", rng.random(), "m", {})
            for i in range(24)
        ]
        base = aggregate(results, CARD)
        for _ in range(10):
            rng.shuffle(results)
            row = aggregate(results, CARD)
            assert row.overall == base.overall
            assert row.per_task == base.per_task

    def test_render_table(self):
        card = ModelCard(name="big-model", params=7_000_000_000, dim=3584, pos_encoding="RoPE", instruct_tuned=True)
        row = aggregate(self._results([46.05, 70.76, 72.09, 53.15, 74.28, 78.73]), card)
        table = render_table([row])
        assert "big-model*" in table
        assert "7B" in table
        assert "65.84" in table
        assert "Retr." in table and "Avg." in table

    def test_benchmark_report_sorted_and_serializable(self):
        from benchforge.evaluation import BenchmarkReport

        low = aggregate(self._results([10, 10, 10, 10, 10, 10]), ModelCard(name="low", params=1, dim=1))
        high = aggregate(self._results([90, 90, 90, 90, 90, 90]), ModelCard(name="high", params=1, dim=1))
        report = BenchmarkReport([low, high]).sorted_by_overall()
        assert [r.model.name for r in report.rows] == ["high", "low"]
        assert report.to_dict()["rows"][0]["model"] == "high"
        assert "high" in report.render()


class TestScaleInvariance:
    def test_all_tasks_invariant_under_power_of_two_scaling(self):
        rng = np.random.default_rng(7)
        texts = {}
        # one fixture per task, embedded via a shared precomputed table
        from conftest import BUILDERS

        for task, builder in BUILDERS.items():
            ds = builder()
            if task is TaskType.CLASSIFICATION:
                ds.splits["train"] = [
                    {"id": f"tr{i}", "text": f"train text {i}", "label": i % 2} for i in range(6)
                ]
            for unit_texts in _dataset_texts(ds):
                texts[unit_texts] = None
        table = {text_key(t): rng.standard_normal(DIM) for t in texts}
        scaled = {k: v * 4.0 for k, v in table.items()}
        for task, builder in BUILDERS.items():
            ds = builder()
            if task is TaskType.CLASSIFICATION:
                ds.splits["train"] = [
                    {"id": f"tr{i}", "text": f"train text {i}", "label": i % 2} for i in range(6)
                ]
            base = evaluate_dataset(EmbeddingProvider(table=table), ds, CARD)
            scaled_result = evaluate_dataset(EmbeddingProvider(table=scaled), ds, CARD)
            assert scaled_result.main_metric == pytest.approx(base.main_metric, abs=1e-12), task


def _dataset_texts(ds):
    out = []
    if ds.task is TaskType.RETRIEVAL:
        out += list(ds.queries.values())
        out += [f"{d['title']} {d['text']}".strip() for d in ds.corpus.values()]
        return out
    for records in ds.splits.values():
        for r in records:
            for key in ("text", "sentence1", "sentence2", "query"):
                if key in r:
                    out.append(r[key])
            for key in ("sentences", "positive", "negative"):
                if key in r:
                    out.extend(r[key])
    return out


class TestEmbeddingFiles:
    def test_write_then_load_round_trip(self, tmp_path):
        emb = MockEmbeddingBackend(dim=DIM)
        texts = ["first text", "second text", "first text"]
        path = tmp_path / "vectors.jsonl"
        count = write_embedding_file(path, texts, emb)
        assert count == 2  # deduplicated
        table = load_embedding_file(path)
        provider = EmbeddingProvider(table=table)
        direct = emb.embed(["first text"])[0].array()
        from_file = provider.vectors(["first text"])[0]
        assert np.allclose(from_file, direct / np.linalg.norm(direct))

    def test_missing_text_error(self, tmp_path):
        path = tmp_path / "vectors.jsonl"
        path.write_text(json.dumps({"id": "nope", "vector": [1.0, 0.0]}) + "\n")
        provider = EmbeddingProvider(table=load_embedding_file(path))
        with pytest.raises(EvalError, match="missing id"):
            provider.vectors(["unknown text"])

    def test_bad_row_error(self, tmp_path):
        path = tmp_path / "vectors.jsonl"
        path.write_text('{"id": "x"}\n')
        with pytest.raises(EvalError, match="bad embedding row"):
            load_embedding_file(path)

    def test_provider_requires_source(self):
        with pytest.raises(EvalError):
            EmbeddingProvider()


class TestModelCard:
    def test_load_yaml(self, tmp_path):
        path = tmp_path / "card.yaml"
        path.write_text(
            "name: my-model\nparams: 560000000\ndim: 1024\npos_encoding: APE\n"
            "instruct_tuned: true\ntask_instructions:\n  retrieval: 'Find:'\n"
        )
        card = ModelCard.load(path)
        assert card.params == 560_000_000
        assert card.instruction_for(TaskType.RETRIEVAL) == "Find:"
        assert card.display_name() == "my-model*"

    def test_validation(self):
        with pytest.raises(EvalError):
            ModelCard(name="x", params=1, dim=0)
        with pytest.raises(EvalError):
            ModelCard(name="x", params=1, dim=4, pos_encoding="ALiBi")

    def test_format_params(self):
        assert format_params(7_000_000_000) == "7B"
        assert format_params(560_000_000) == "560M"
        assert format_params(33_400_000) == "33.4M"
        assert format_params(1234) == "1234"
