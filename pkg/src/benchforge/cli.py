"""Command-line entry point.

Exit codes: 0 success; 1 invalid usage, config, or data; 2 the run finished
but some units hard-failed on backend errors; 3 unexpected runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import BackendError, suite_for_config
from .core import PipelineConfig, validate_config
from .dataset_io import DatasetError, decompose, load_dataset, record_split
from .evaluation import (
    BenchmarkReport,
    EvalConfig,
    EvalError,
    EmbeddingProvider,
    ModelCard,
    TaskResult,
    TaskType,
    aggregate,
    evaluate_dataset,
    load_embedding_file,
)
from .pipeline import (
    ConfigError,
    JournalError,
    LanguageDetector,
    PipelineRunner,
    RunSummary,
    detect_lines,
    run_pipeline,
)
from .reporting import calibrate_threshold, estimate_cost, kept_ratio_report, word_length_stats

logger = logging.getLogger(__name__)

USAGE_ERROR, BACKEND_FAILURES, RUNTIME_ERROR = 1, 2, 3


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    if getattr(args, "run_dir", None):
        overrides["run_dir"] = args.run_dir
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "backend", None):
        overrides["backend"] = args.backend
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    problems = validate_config(cfg)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        raise ConfigError("invalid config")
    return cfg


def _persist_run_inputs(cfg: PipelineConfig, manifests: list[str]) -> None:
    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    config_path = run_dir / "config.yaml"
    if not config_path.exists():
        cfg.save(config_path)
    (run_dir / "manifests.json").write_text(
        json.dumps([str(Path(m).resolve()) for m in manifests], indent=2) + "\n",
        encoding="utf-8",
    )


def _dry_run(cfg: PipelineConfig, manifests: list[str]) -> int:
    for manifest in manifests:
        ds = load_dataset(manifest)
        units = decompose(ds)
        processed = [s for s in cfg.splits if s in ds.splits]
        if ds.task.value == "retrieval":
            validated = len(units) if processed else 0
        else:
            validated = sum(1 for u in units if record_split(u.record_id) in set(processed))
        print(f"{ds.manifest.dataset_id} ({ds.task.value}):")
        for split, records in ds.splits.items():
            marker = " [processed]" if split in processed else ""
            print(f"  split {split}: {len(records)} records{marker}")
        print(f"  units: {len(units)} total, {validated} on the validation path")
    print("dry run: config and datasets valid, no backend calls made")
    return 0


def _summary_failures(summary: RunSummary) -> int:
    return sum(d.backend_errors for d in summary.datasets)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        return _dry_run(cfg, args.manifests)
    _persist_run_inputs(cfg, args.manifests)
    summary = run_pipeline(args.manifests, cfg)
    for ds in summary.datasets:
        print(
            f"{ds.dataset_id}: kept {ds.records_after}/{ds.records_before} records "
            f"(ratio {ds.kept_ratio:.3f}), units {ds.units_kept}/{ds.units_total}"
        )
    print(f"summary: {Path(cfg.run_dir) / 'summary.json'}")
    return BACKEND_FAILURES if _summary_failures(summary) else 0


def cmd_translate(args) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        return _dry_run(cfg, args.manifests)
    _persist_run_inputs(cfg, args.manifests)
    runner = PipelineRunner(cfg)
    try:
        for manifest in args.manifests:
            ds = load_dataset(manifest)
            counts = runner.translate_dataset(ds)
            print(
                f"{ds.manifest.dataset_id}: translated {counts['translated']} units "
                f"({counts['rejected']} filtered by language, {counts['failed']} failed)"
            )
    finally:
        runner.close()
    print(f"journal: {runner.journal.path}; run `benchforge validate {cfg.run_dir}` for stage 3")
    return 0


def cmd_validate(args) -> int:
    run_dir = Path(args.run_dir)
    config_path = run_dir / "config.yaml"
    manifest_path = run_dir / "manifests.json"
    if not config_path.exists() or not manifest_path.exists():
        print(f"{run_dir}: not a run directory (missing config.yaml/manifests.json)", file=sys.stderr)
        return USAGE_ERROR
    cfg = PipelineConfig.load(config_path)
    manifests = json.loads(manifest_path.read_text(encoding="utf-8"))
    summary = run_pipeline(manifests, cfg)
    for ds in summary.datasets:
        print(
            f"{ds.dataset_id}: kept {ds.records_after}/{ds.records_before} records "
            f"(ratio {ds.kept_ratio:.3f})"
        )
    return BACKEND_FAILURES if _summary_failures(summary) else 0


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    suite = suite_for_config(cfg)
    detector = LanguageDetector(suite.detector, cfg.detect_model, cfg.prompt_dir)
    lines = Path(args.file).read_text(encoding="utf-8").splitlines()
    rows = detect_lines(lines, detector, compare_char_model=args.compare)
    for row in rows:
        cells = [row["lang"]]
        if args.compare:
            cells.append(row["char_model"])
        cells.append(row["text"])
        print("\t".join(cells))
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    pairs_dir = Path(args.pairs_dir)
    pair_sets = {}
    for path in sorted(pairs_dir.glob("*.jsonl")):
        pairs = []
        with path.open(encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    row = json.loads(line)
                    pairs.append((row["text_a"], row["text_b"]))
        pair_sets[path.stem] = pairs
    if not pair_sets:
        print(f"{pairs_dir}: no <category>.jsonl pair files found", file=sys.stderr)
        return USAGE_ERROR
    suite = suite_for_config(cfg)
    result = calibrate_threshold(pair_sets, suite.embedder)
    out_path = Path(args.out) if args.out else pairs_dir / "distributions.csv"
    out_path.write_text(result.to_csv(), encoding="utf-8")
    print(f"distributions: {out_path}")
    for dist in result.distributions:
        kind = "positive" if dist.category in ("vi_label", "syn_eng") else "negative"
        print(f"  {dist.category} ({kind}, n={dist.count}): bins {[round(p, 1) for p in dist.percentages]}")
    if result.overlap_warning:
        print("warning: positive and negative score regions overlap")
    print(f"suggested threshold: {result.suggested_tau}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    card = ModelCard.load(args.model_card)
    eval_cfg = EvalConfig(seed=cfg.seed, eval_split=args.split, train_split=args.train_split)
    if args.embeddings:
        provider = EmbeddingProvider(table=load_embedding_file(args.embeddings))
    else:
        provider = EmbeddingProvider(backend=suite_for_config(cfg).embedder)
    results = []
    for manifest in args.manifests:
        ds = load_dataset(manifest)
        result = evaluate_dataset(provider, ds, card, eval_cfg)
        results.append(result)
        print(
            f"{result.dataset_id} ({result.task.value}): "
            f"{result.main_metric_name} = {result.main_metric * 100:.2f}"
        )
    payload = {
        "model_card": {
            "name": card.name,
            "params": card.params,
            "dim": card.dim,
            "pos_encoding": card.pos_encoding,
            "instruct_tuned": card.instruct_tuned,
        },
        "results": [r.to_dict() for r in results],
    }
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"results: {args.out}")
    else:
        print(json.dumps(payload, indent=2))
    return 0


def cmd_benchtable(args) -> int:
    rows = []
    for path in args.results:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        card = ModelCard(**data["model_card"])
        results = [
            TaskResult(
                task=TaskType(r["task"]),
                dataset_id=r["dataset_id"],
                main_metric=r["main_metric"],
                main_metric_name=r["main_metric_name"],
                auxiliary=r.get("auxiliary", {}),
            )
            for r in data["results"]
        ]
        rows.append(aggregate(results, card))
    report = BenchmarkReport(rows).sorted_by_overall()
    print(report.render())
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        print(f"table data: {args.out}")
    return 0


def cmd_report(args) -> int:
    summaries = []
    pairs = []
    for run_dir in args.run_dirs:
        summary_path = Path(run_dir) / "summary.json"
        if not summary_path.exists():
            print(f"{run_dir}: no summary.json (run not finished?)", file=sys.stderr)
            return USAGE_ERROR
        summaries.extend(RunSummary.load(summary_path).datasets)
        journal_path = Path(run_dir) / "journal.jsonl"
        if journal_path.exists():
            with journal_path.open(encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    event = json.loads(line)
                    if event.get("event") == "translated":
                        pairs.append((event.get("source_text", ""), event["text"]))
    report = kept_ratio_report(summaries)
    print(report.render())
    if len(pairs) >= 2:
        stats = word_length_stats(pairs)
        print()
        if stats.pearson_r is None:
            print(f"word-length correlation over {len(pairs)} pairs: {stats.note}")
        else:
            print(f"word-length correlation over {len(pairs)} pairs: r = {stats.pearson_r:.4f}")
    if args.out:
        payload = report.to_dict()
        if len(pairs) >= 2:
            payload["word_length"] = {
                "pairs": len(pairs),
                "pearson_r": stats.pearson_r,
                "histogram_src": stats.histogram_src,
                "histogram_tgt": stats.histogram_tgt,
                "bin_width": stats.bin_width,
            }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"report data: {args.out}")
    return 0


def cmd_estimate_cost(args) -> int:
    estimate = estimate_cost(
        total_tokens=args.tokens,
        rate_tokens_per_sec=args.rate,
        gpus=args.gpus,
        watts_per_gpu=args.watts,
        duplex_factor=args.duplex_factor,
    )
    print(estimate.render())
    if args.json:
        print(json.dumps(vars(estimate), indent=2))
    return 0


def _common_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config file (YAML); flags override its values")
    parser.add_argument("--seed", type=int, help="seed for all randomness (default 42, recorded in outputs)")
    parser.add_argument("--backend", choices=["mock", "openai"], help="backend kind override")


_SCHEMA_HELP = """\
file schemas:
  manifest.json                {"dataset_id","task","source_lang","license","splits"}
  <split>.jsonl                classification {"id","text","label"} | clustering
                               {"id","sentences":[...],"labels":[...]} | pair_classification
                               {"id","sentence1","sentence2","label"} | reranking
                               {"id","query","positive":[...],"negative":[...]} | sts
                               {"id","sentence1","sentence2","score"}
  corpus.jsonl / queries.jsonl retrieval {"_id","title","text"} / {"_id","text"}
  qrels/<split>.tsv            retrieval qrels: query-id<TAB>corpus-id<TAB>score, with header
  <run_dir>/journal.jsonl      append-only run events (resume state)
  <run_dir>/summary.json       per-dataset counts, kept ratios, token totals
  embeddings file              line-delimited {"id": sha256(text), "vector": [...]}
  model card (YAML)            name, params, dim, pos_encoding (APE|RoPE), instruct_tuned,
                               task_instructions
  calibration pairs            <category>.jsonl with {"text_a","text_b"} rows

environment:
  BENCHFORGE_CHAT_URL / BENCHFORGE_EMBED_URL / BENCHFORGE_API_KEY  (backend=openai)
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="benchforge",
        description="Translate benchmark datasets through quality gates and evaluate embedding models.",
        epilog=_SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: filter, translate, validate, recompose (resumable)")
    p.add_argument("manifests", nargs="+", help="dataset manifest.json paths")
    p.add_argument("--run-dir", help="run directory override (journal, outputs)")
    p.add_argument("--dry-run", action="store_true", help="validate config/datasets and count units; no backend calls")
    _common_config_flags(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("translate", help="stages 1-2 only; finish later with `validate`")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--run-dir")
    p.add_argument("--dry-run", action="store_true")
    _common_config_flags(p)
    p.set_defaults(handler=cmd_translate)

    p = sub.add_parser("validate", help="stage 3 over an existing run directory")
    p.add_argument("run_dir")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("detect", help="per-line language detection report for a text file")
    p.add_argument("file")
    p.add_argument("--compare", action="store_true", help="also show the character-model detector's guess")
    _common_config_flags(p)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("calibrate", help="bin cosine scores per pair category and suggest a threshold")
    p.add_argument("pairs_dir", help="directory of <category>.jsonl files with {text_a, text_b} rows")
    p.add_argument("--out", help="CSV output path (default <pairs_dir>/distributions.csv)")
    _common_config_flags(p)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("evaluate", help="evaluate an embedding model on datasets")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--model-card", required=True, help="model card YAML/JSON file")
    p.add_argument("--embeddings", help="precomputed {id, vector} JSONL for offline evaluation")
    p.add_argument("--split", default="test", help="evaluation split (default test)")
    p.add_argument("--train-split", default="train", help="classification train split (default train)")
    p.add_argument("--out", help="write results JSON here")
    _common_config_flags(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("report", help="kept-ratio and word-length reports over run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", help="write report JSON here")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("benchtable", help="aggregate evaluate outputs into the results table")
    p.add_argument("results", nargs="+", help="JSON files produced by `evaluate --out`")
    p.add_argument("--out", help="write table rows JSON here")
    p.set_defaults(handler=cmd_benchtable)

    p = sub.add_parser("estimate-cost", help="time/energy estimate from token totals")
    p.add_argument("--tokens", type=int, required=True)
    p.add_argument("--rate", type=float, required=True, help="output tokens per second")
    p.add_argument("--gpus", type=int, default=1)
    p.add_argument("--watts", type=float, default=700.0)
    p.add_argument("--duplex-factor", type=float, default=2.0)
    p.add_argument("--json", action="store_true", help="also print machine-readable JSON")
    p.set_defaults(handler=cmd_estimate_cost)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DatasetError, JournalError, EvalError, BackendError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
