"""Retrieval quality metrics: average precision, MAP, PR curves.

Relevance follows the share-at-least-one-label rule. Queries with no
relevant gallery item have no defined average precision; they raise
UndefinedQueryError at the single-query level and are excluded (and
counted) when aggregating to MAP. MAP is computed over the full ranking,
no cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CodeMatrix, label_overlap
from .retrieval import RetrievalIndex, rank_gallery

__all__ = [
    "RetrievalEvaluation",
    "UndefinedQueryError",
    "average_precision",
    "evaluate_rankings",
    "evaluate_retrieval",
    "macro_pr_curve",
    "mean_average_precision",
    "precision_recall_curve",
    "relevance_judgments",
    "top_k_precision",
]


class UndefinedQueryError(ValueError):
    """Raised for a query with zero relevant gallery items."""


def _checked(ranking, relevance):
    rel = np.asarray(relevance, dtype=bool)
    if rel.ndim != 1:
        raise ValueError(f"relevance must be 1-D, got shape {rel.shape}")
    ranking = np.asarray(ranking, dtype=np.int64)
    n = rel.shape[0]
    if ranking.shape != (n,) or not np.array_equal(np.sort(ranking), np.arange(n)):
        raise ValueError("ranking must be a permutation of the gallery ids")
    return ranking, rel


def average_precision(ranking, relevance) -> float:
    """Mean precision over the ranks holding relevant items.

    ranking: gallery ids ordered best-first, a permutation of 0..N_g-1.
    relevance: per-id boolean judgments.
    """
    ranking, rel = _checked(ranking, relevance)
    hits = rel[ranking]
    total = int(hits.sum())
    if total == 0:
        raise UndefinedQueryError("query has no relevant gallery item")
    cum = np.cumsum(hits)
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(cum[hits] / ranks))


def mean_average_precision(queries) -> float:
    """Mean AP over queries with at least one relevant item.

    queries: iterable of (ranking, relevance) pairs. Zero-relevance
    queries are skipped; an input with no valid query is an error.
    """
    aps = []
    for ranking, relevance in queries:
        try:
            aps.append(average_precision(ranking, relevance))
        except UndefinedQueryError:
            continue
    if not aps:
        raise UndefinedQueryError("no query has a relevant gallery item")
    return float(np.mean(aps))


def precision_recall_curve(ranking, relevance) -> np.ndarray:
    """Per-rank (recall, precision) points as an (N_g, 2) array."""
    ranking, rel = _checked(ranking, relevance)
    hits = rel[ranking]
    total = int(hits.sum())
    if total == 0:
        raise UndefinedQueryError("query has no relevant gallery item")
    cum = np.cumsum(hits)
    ranks = np.arange(1, len(ranking) + 1)
    return np.column_stack([cum / total, cum / ranks])


def top_k_precision(ranking, relevance, k: int) -> float:
    """Fraction of the top k ranked items that are relevant."""
    ranking, rel = _checked(ranking, relevance)
    if not 1 <= k <= len(ranking):
        raise ValueError(f"k must be in [1, {len(ranking)}], got {k}")
    return float(rel[ranking[:k]].sum() / k)


def relevance_judgments(query_labels, gallery_labels) -> np.ndarray:
    """Boolean (N_q, N_g) matrix: query q relevant to gallery item g."""
    return label_overlap(query_labels, gallery_labels).astype(bool)


@dataclass(frozen=True)
class RetrievalEvaluation:
    """MAP plus per-query APs and the count of skipped (undefined) queries."""

    map: float
    average_precisions: np.ndarray
    skipped: int

    @property
    def n_queries(self) -> int:
        return len(self.average_precisions) + self.skipped


def evaluate_rankings(rankings, relevance) -> RetrievalEvaluation:
    """Score a list of rankings against an (N_q, N_g) relevance matrix."""
    relevance = np.asarray(relevance, dtype=bool)
    if len(rankings) != relevance.shape[0]:
        raise ValueError(
            f"{len(rankings)} rankings for {relevance.shape[0]} relevance rows"
        )
    aps = []
    skipped = 0
    for ranking, rel in zip(rankings, relevance):
        try:
            aps.append(average_precision(ranking, rel))
        except UndefinedQueryError:
            skipped += 1
    if not aps:
        raise UndefinedQueryError("no query has a relevant gallery item")
    aps = np.asarray(aps)
    return RetrievalEvaluation(float(aps.mean()), aps, skipped)


def evaluate_retrieval(
    query_codes: CodeMatrix, query_labels, index: RetrievalIndex
) -> RetrievalEvaluation:
    """Rank every query against the index and aggregate MAP."""
    if len(query_labels) != query_codes.count:
        raise ValueError(
            f"{len(query_labels)} query label sets for {query_codes.count} codes"
        )
    rankings = [
        rank_gallery(index, query_codes.column(i))[0]
        for i in range(query_codes.count)
    ]
    relevance = relevance_judgments(query_labels, index.labels)
    return evaluate_rankings(rankings, relevance)


def macro_pr_curve(rankings, relevance) -> np.ndarray:
    """Rank-wise mean of per-query PR curves, skipping undefined queries.

    All rankings must cover the same gallery; the result is an (N_g, 2)
    array of (mean recall, mean precision) per rank, the aggregate curve
    written by the command-line eval.
    """
    relevance = np.asarray(relevance, dtype=bool)
    curves = []
    for ranking, rel in zip(rankings, relevance):
        try:
            curves.append(precision_recall_curve(ranking, rel))
        except UndefinedQueryError:
            continue
    if not curves:
        raise UndefinedQueryError("no query has a relevant gallery item")
    return np.mean(curves, axis=0)
