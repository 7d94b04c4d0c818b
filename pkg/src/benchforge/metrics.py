"""Ranking and correlation metrics with deterministic tie handling.

Rankings break score ties by original index (stable), so repeated runs over
identical inputs produce identical metric values. Correlations delegate to
scipy; clustering agreement delegates to scikit-learn's V-measure.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from scipy import stats
from sklearn.metrics import v_measure_score as _sk_v_measure


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    """u.v / (|u||v|), in [-1, 1]. Zero-norm or mismatched inputs are errors."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    # Rounding can push self-similarity an ulp past 1; keep the contract.
    return min(1.0, max(-1.0, float(a.dot(b) / (norm_a * norm_b))))


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize zero vectors")
    return matrix / norms


def rank_order(scores: Sequence[float]) -> list[int]:
    """Indices sorted by descending score; ties broken by original index."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def dcg(gains: Sequence[float], k: int | None = None) -> float:
    """Discounted cumulative gain with log2(rank+1) discounts, ranks 1-based."""
    top = gains if k is None else gains[:k]
    return sum(g / math.log2(rank + 1) for rank, g in enumerate(top, start=1))


def ndcg_at_k(ranked_relevances: Sequence[float], all_relevances: Sequence[float], k: int) -> float:
    """nDCG@k with exponential gains 2^rel - 1.

    ranked_relevances: relevance of each retrieved item in rank order.
    all_relevances: the full judged relevance pool, used for the ideal ranking.
    """
    gains = [2.0**r - 1.0 for r in ranked_relevances]
    ideal = sorted((2.0**r - 1.0 for r in all_relevances), reverse=True)
    idcg = dcg(ideal, k)
    if idcg == 0.0:
        return 0.0
    return dcg(gains, k) / idcg


def average_precision(ranked_labels: Sequence[int]) -> float:
    """AP over a binary ranking: mean precision at each relevant position."""
    hits = 0
    total = 0.0
    for rank, label in enumerate(ranked_labels, start=1):
        if label:
            hits += 1
            total += hits / rank
    if hits == 0:
        return 0.0
    return total / hits


def reciprocal_rank(ranked_labels: Sequence[int], k: int | None = None) -> float:
    top = ranked_labels if k is None else ranked_labels[:k]
    for rank, label in enumerate(top, start=1):
        if label:
            return 1.0 / rank
    return 0.0


def recall_at_k(ranked_labels: Sequence[int], total_relevant: int, k: int) -> float:
    if total_relevant <= 0:
        return 0.0
    return sum(1 for label in ranked_labels[:k] if label) / total_relevant


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need two equal-length sequences of length >= 2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", stats.ConstantInputWarning)
        value = stats.spearmanr(x, y).statistic
    if math.isnan(value):
        raise ValueError("spearman undefined (constant input)")
    return float(value)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need two equal-length sequences of length >= 2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", stats.ConstantInputWarning)
        value = stats.pearsonr(x, y).statistic
    if math.isnan(value):
        raise ValueError("pearson undefined (constant input)")
    return float(value)


def v_measure(labels_true: Sequence, labels_pred: Sequence) -> float:
    """Harmonic mean of homogeneity and completeness."""
    return float(_sk_v_measure(labels_true, labels_pred))
