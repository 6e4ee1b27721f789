"""Rank-aware retrieval evaluation: nDCG and mAP in both directions.

Video-to-text treats each similarity row as a query over captions;
text-to-video treats each column as a query over videos. Both metrics
depend only on the induced ranking: ties are broken deterministically by
ascending original index, and any strictly increasing transform of the
scores leaves the results unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .matrices import SimilarityMatrix, check_aligned
from .relevance import RelevanceMatrix

REPORT_FIELDS = (
    "ndcg_v2t",
    "ndcg_t2v",
    "ndcg_avg",
    "map_v2t",
    "map_t2v",
    "map_avg",
    "n_queries_v2t",
    "n_queries_t2v",
)


@dataclass
class MetricsReport:
    """Both-direction nDCG and mAP with their means, plus query counts."""

    ndcg_v2t: float
    ndcg_t2v: float
    ndcg_avg: float
    map_v2t: float
    map_t2v: float
    map_avg: float
    n_queries_v2t: int
    n_queries_t2v: int

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in REPORT_FIELDS}

    def to_text(self) -> str:
        """Flat ``key = value`` lines, one per field; parseable and readable."""
        lines = [f"{name} = {getattr(self, name)!r}" for name in REPORT_FIELDS]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        try:
            return cls(**{name: data[name] for name in REPORT_FIELDS})
        except KeyError as exc:
            raise DataError(f"metrics record is missing field {exc.args[0]!r}") from exc


def dcg(gains_in_rank_order) -> float:
    """Discounted cumulative gain of non-negative gains listed best rank first.

    Rank r (1-based) is discounted by 1/log2(r + 1).
    """
    gains = np.asarray(gains_in_rank_order, dtype=np.float64)
    if gains.ndim != 1 or gains.size == 0:
        raise DataError("dcg requires a non-empty 1-d gain sequence")
    if (gains < 0).any():
        raise DataError("dcg gains must be non-negative")
    ranks = np.arange(1, gains.size + 1, dtype=np.float64)
    return float(np.sum(gains / np.log2(ranks + 1.0)))


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorting scores descending; equal scores keep ascending index order."""
    n = scores.shape[0]
    return np.lexsort((np.arange(n), -scores))


def ndcg(scores, relevances) -> float:
    """Normalized DCG of ranking `relevances` by descending `scores`.

    The ideal ranking sorts the relevances themselves descending. A query
    whose relevances are all zero has no ranking signal and scores 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevances = np.asarray(relevances, dtype=np.float64)
    if scores.shape != relevances.shape or scores.ndim != 1:
        raise DataError(
            f"scores and relevances must be 1-d of equal length, got {scores.shape} and {relevances.shape}"
        )
    if scores.size == 0:
        raise DataError("ndcg requires at least one item")
    if (relevances < 0).any() or (relevances > 1).any():
        raise DataError("relevances must lie in [0, 1]")
    ideal = dcg(np.sort(relevances)[::-1])
    if ideal == 0.0:
        return 1.0
    return dcg(relevances[rank_order(scores)]) / ideal


def average_precision(scores, relevances, pos_threshold: float = 0.0) -> float | None:
    """AP of the descending-score ranking under binarized relevance.

    An item is positive when its relevance strictly exceeds `pos_threshold`.
    Returns None when the query has no positive item (AP undefined).
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevances = np.asarray(relevances, dtype=np.float64)
    if scores.shape != relevances.shape or scores.ndim != 1:
        raise DataError(
            f"scores and relevances must be 1-d of equal length, got {scores.shape} and {relevances.shape}"
        )
    if pos_threshold < 0:
        raise DataError(f"pos_threshold must be non-negative, got {pos_threshold}")
    positive = relevances[rank_order(scores)] > pos_threshold
    n_pos = int(positive.sum())
    if n_pos == 0:
        return None
    hits = np.cumsum(positive)
    precisions = hits[positive] / (np.flatnonzero(positive) + 1.0)
    return float(precisions.sum() / n_pos)


def _direction_metrics(sim: np.ndarray, rel: np.ndarray, pos_threshold: float) -> tuple[float, float]:
    ndcg_values = []
    ap_values = []
    for i in range(sim.shape[0]):
        ndcg_values.append(ndcg(sim[i], rel[i]))
        ap = average_precision(sim[i], rel[i], pos_threshold)
        if ap is not None:
            ap_values.append(ap)
    if not ap_values:
        raise DataError("mAP undefined: no query has a positive item")
    return float(np.mean(ndcg_values)), float(np.mean(ap_values))


def evaluate(sim: SimilarityMatrix, rel: RelevanceMatrix, pos_threshold: float = 0.0) -> MetricsReport:
    """Full two-direction evaluation of a similarity matrix against relevance.

    Per direction, nDCG is the mean over all queries and mAP the mean over
    queries with at least one positive; the averaged columns are the
    arithmetic mean of the two directions.
    """
    check_aligned(sim, rel)
    ndcg_v2t, map_v2t = _direction_metrics(sim.values, rel.values, pos_threshold)
    ndcg_t2v, map_t2v = _direction_metrics(sim.values.T, rel.values.T, pos_threshold)
    return MetricsReport(
        ndcg_v2t=ndcg_v2t,
        ndcg_t2v=ndcg_t2v,
        ndcg_avg=(ndcg_v2t + ndcg_t2v) / 2.0,
        map_v2t=map_v2t,
        map_t2v=map_t2v,
        map_avg=(map_v2t + map_t2v) / 2.0,
        n_queries_v2t=sim.rows,
        n_queries_t2v=sim.cols,
    )
