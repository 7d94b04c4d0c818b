"""Kept-ratio tables, word-length distribution analysis, semantic-threshold
calibration binning, and the time/energy cost estimator."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .backends import EmbeddingBackend
from .core import nfc
from .metrics import cosine_similarity
from .pipeline import DatasetSummary

logger = logging.getLogger(__name__)

# Calibration categories: gold-aligned pairs and paraphrases score high,
# contradictions and unrelated pairs score low. Unknown category names are
# treated as negatives (custom).
KNOWN_CATEGORIES = ("vi_label", "contra_vi", "unre_vi", "syn_eng", "custom")
POSITIVE_CATEGORIES = ("vi_label", "syn_eng")

NUM_BINS = 10


@dataclass(frozen=True)
class KeptRatioRow:
    dataset_id: str
    task: str
    records_before: int
    records_after: int
    kept_pct: float


@dataclass
class KeptRatioReport:
    rows: list[KeptRatioRow]
    task_means: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "rows": [vars(r) for r in self.rows],
            "task_means": self.task_means,
        }

    def render(self) -> str:
        lines = [f"{'dataset':<32} {'task':<20} {'before':>8} {'after':>8} {'kept%':>7}"]
        for r in self.rows:
            lines.append(
                f"{r.dataset_id:<32} {r.task:<20} {r.records_before:>8} {r.records_after:>8} {r.kept_pct:>7.2f}"
            )
        lines.append("")
        lines.append("mean kept% per task:")
        for task, mean in self.task_means.items():
            lines.append(f"  {task:<20} {mean:.2f}")
        return "\n".join(lines)


def kept_ratio_report(summaries: Sequence[DatasetSummary]) -> KeptRatioReport:
    """Per-dataset kept percentages plus the unweighted per-task means."""
    rows = []
    by_task: dict[str, list[float]] = {}
    for s in summaries:
        if s.records_before <= 0:
            raise ValueError(f"{s.dataset_id}: records_before must be > 0")
        if not 0 <= s.records_after <= s.records_before:
            raise ValueError(f"{s.dataset_id}: records_after outside [0, records_before]")
        pct = 100.0 * s.records_after / s.records_before
        rows.append(KeptRatioRow(s.dataset_id, s.task, s.records_before, s.records_after, pct))
        by_task.setdefault(s.task, []).append(pct)
    means = {task: sum(vals) / len(vals) for task, vals in by_task.items()}
    return KeptRatioReport(rows, means)


@dataclass
class WordLengthStats:
    histogram_src: list[int]
    histogram_tgt: list[int]
    bin_width: int
    pearson_r: float | None
    note: str = ""


def word_count(text: str) -> int:
    """Whitespace-token count after NFC normalization."""
    return len(nfc(text).split())


def word_length_stats(
    pairs: Sequence[tuple[str, str]], max_words: int = 512, bin_width: int = 8
) -> WordLengthStats:
    """Histogram the word counts of source/translation pairs and correlate
    them; counts past the range clamp into the last bin so no pair is ever
    dropped."""
    if len(pairs) < 2:
        raise ValueError("need at least 2 pairs")
    n_bins = max_words // bin_width
    hist_src = [0] * n_bins
    hist_tgt = [0] * n_bins
    src_counts, tgt_counts = [], []
    for source, target in pairs:
        s, t = word_count(source), word_count(target)
        src_counts.append(s)
        tgt_counts.append(t)
        hist_src[min(s // bin_width, n_bins - 1)] += 1
        hist_tgt[min(t // bin_width, n_bins - 1)] += 1
    src_arr = np.asarray(src_counts, dtype=float)
    tgt_arr = np.asarray(tgt_counts, dtype=float)
    if np.std(src_arr) == 0.0 or np.std(tgt_arr) == 0.0:
        return WordLengthStats(hist_src, hist_tgt, bin_width, None, "correlation undefined: constant counts")
    r = float(np.corrcoef(src_arr, tgt_arr)[0, 1])
    return WordLengthStats(hist_src, hist_tgt, bin_width, r)


@dataclass
class ScoreDistribution:
    """Cosine scores of one pair category binned into ten 0.1-wide buckets
    over [0, 1] (last bin right-inclusive), as percentages."""

    category: str
    percentages: list[float]
    count: int

    def lowest_bin(self) -> int:
        return next(i for i, p in enumerate(self.percentages) if p > 0)

    def highest_bin(self) -> int:
        return max(i for i, p in enumerate(self.percentages) if p > 0)


def _bin_index(score: float) -> int:
    # Cosine can dip below 0; everything left of the range lands in bin 0,
    # and 1.0 is right-inclusive in the last bin.
    return min(max(int(score * NUM_BINS), 0), NUM_BINS - 1)


@dataclass
class CalibrationResult:
    distributions: list[ScoreDistribution]
    suggested_tau: float
    overlap_warning: bool
    positive_low_edge: float
    negative_high_edge: float

    def to_csv(self) -> str:
        lines = ["bin_start,bin_end,category,percentage"]
        for dist in self.distributions:
            for i, pct in enumerate(dist.percentages):
                lines.append(f"{i / NUM_BINS:.1f},{(i + 1) / NUM_BINS:.1f},{dist.category},{pct!r}")
        return "\n".join(lines) + "\n"


def calibrate_threshold(
    pair_sets: Mapping[str, Sequence[tuple[str, str]]],
    embedder: EmbeddingBackend,
) -> CalibrationResult:
    """Embed pair categories, bin their cosine scores, and suggest a
    similarity threshold.

    The suggestion is the midpoint between the positive categories' lowest
    occupied decile (lower edge) and the negative categories' highest
    occupied decile (upper edge); overlapping regions raise a warning flag.
    The operator picks the final threshold from the distributions.
    """
    if len(pair_sets) < 2:
        raise ValueError("need at least 2 categories (one positive, one negative)")
    if not any(c in POSITIVE_CATEGORIES for c in pair_sets):
        raise ValueError(f"need at least one positive category ({', '.join(POSITIVE_CATEGORIES)})")
    if not any(c not in POSITIVE_CATEGORIES for c in pair_sets):
        raise ValueError("need at least one negative category")

    distributions = []
    pos_low_edge = 1.0
    neg_high_edge = 0.0
    for category, pairs in pair_sets.items():
        if not pairs:
            raise ValueError(f"category {category!r} is empty")
        texts: list[str] = []
        for a, b in pairs:
            texts.extend((a, b))
        vectors = embedder.embed(texts)
        counts = [0] * NUM_BINS
        for i in range(len(pairs)):
            score = cosine_similarity(vectors[2 * i].values, vectors[2 * i + 1].values)
            counts[_bin_index(score)] += 1
        pct = [100.0 * c / len(pairs) for c in counts]
        dist = ScoreDistribution(category, pct, len(pairs))
        distributions.append(dist)
        if category in POSITIVE_CATEGORIES:
            pos_low_edge = min(pos_low_edge, dist.lowest_bin() / NUM_BINS)
        else:
            neg_high_edge = max(neg_high_edge, (dist.highest_bin() + 1) / NUM_BINS)

    overlap = neg_high_edge > pos_low_edge
    if overlap:
        logger.warning(
            "calibration: negative scores reach %.1f but positives start at %.1f; "
            "regions overlap, threshold suggestion is unreliable",
            neg_high_edge, pos_low_edge,
        )
    tau = (pos_low_edge + neg_high_edge) / 2
    return CalibrationResult(distributions, tau, overlap, pos_low_edge, neg_high_edge)


@dataclass(frozen=True)
class CostEstimate:
    total_tokens: int
    rate_tokens_per_sec: float
    duplex_factor: float
    seconds: float
    hours: float
    days: float
    gpus: int
    watts_per_gpu: float
    energy_kwh: float

    def render(self) -> str:
        return (
            f"tokens:  {self.total_tokens:,}\n"
            f"rate:    {self.rate_tokens_per_sec:,.0f} tok/s x{self.duplex_factor:g} duplex\n"
            f"time:    {self.seconds:,.2f} s = {self.hours:,.2f} h = {self.days:,.2f} days\n"
            f"energy:  {self.energy_kwh:,.2f} kWh ({self.gpus} GPU x {self.watts_per_gpu:g} W)"
        )


def estimate_cost(
    total_tokens: int,
    rate_tokens_per_sec: float,
    gpus: int = 1,
    watts_per_gpu: float = 700.0,
    duplex_factor: float = 2.0,
) -> CostEstimate:
    """Wall-time and energy estimate from token totals.

    The output-token rate is doubled (duplex factor) because processing
    counts both input and output tokens.
    """
    if rate_tokens_per_sec <= 0:
        raise ValueError("rate must be > 0")
    if total_tokens < 0:
        raise ValueError("total_tokens must be >= 0")
    seconds = duplex_factor * total_tokens / rate_tokens_per_sec
    return CostEstimate(
        total_tokens=total_tokens,
        rate_tokens_per_sec=rate_tokens_per_sec,
        duplex_factor=duplex_factor,
        seconds=seconds,
        hours=seconds / 3600.0,
        days=seconds / 86400.0,
        gpus=gpus,
        watts_per_gpu=watts_per_gpu,
        energy_kwh=seconds * gpus * watts_per_gpu / 3.6e6,
    )
