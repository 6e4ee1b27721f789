"""Semantic relevance between caption annotations.

Relevance of a caption pair is the average of two set-IoU terms: the verb
classes (treated as singleton sets, so the term is 0 or 1) and the noun
class sets. The result lives in [0, 1]; it is exactly 1 when verb and noun
sets match, and exactly 0 when the verbs differ and the noun sets are
disjoint. These values are the ground truth consumed by both the metrics
and the training losses.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

# Row-parallel kernels read their worker count from this variable. Results
# are identical for any value: workers write disjoint rows.
THREADS_ENV_VAR = "RANKFUSE_THREADS"

_PARALLEL_MIN_ROWS = 256


@dataclass(frozen=True)
class CaptionAnnotation:
    """A pre-classed caption: one verb class and a non-empty set of noun classes."""

    id: str
    verb_class: int
    noun_classes: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "noun_classes", frozenset(int(n) for n in self.noun_classes))
        if not self.id:
            raise DataError("annotation id must be a non-empty string")
        if self.verb_class < 0:
            raise DataError(f"verb_class must be non-negative, got {self.verb_class}")
        if not self.noun_classes:
            raise DataError(f"annotation {self.id!r}: noun_classes must be non-empty")
        if any(n < 0 for n in self.noun_classes):
            raise DataError(f"annotation {self.id!r}: noun classes must be non-negative")


@dataclass
class RelevanceMatrix:
    """Pairwise query-gallery relevance values in [0, 1] with aligned ids."""

    values: np.ndarray
    row_ids: list[str]
    col_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"relevance values must be a 2-d matrix, got ndim={self.values.ndim}")
        self.row_ids = list(self.row_ids)
        self.col_ids = list(self.col_ids)
        rows, cols = self.values.shape
        if len(self.row_ids) != rows or len(self.col_ids) != cols:
            raise DataError(
                f"id counts ({len(self.row_ids)}, {len(self.col_ids)}) do not match "
                f"matrix shape {self.values.shape}"
            )
        if len(set(self.row_ids)) != rows or len(set(self.col_ids)) != cols:
            raise DataError("relevance matrix ids must be unique per axis")
        if not np.isfinite(self.values).all():
            raise DataError("relevance values must be finite")
        if (self.values < 0).any() or (self.values > 1).any():
            raise DataError("relevance values must lie in [0, 1]")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def pair_relevance(a: CaptionAnnotation, b: CaptionAnnotation) -> float:
    """Relevance of an annotation pair: mean of verb IoU and noun-set IoU.

    Symmetric, total on valid annotations, and always in [0, 1].
    """
    verb_iou = 1.0 if a.verb_class == b.verb_class else 0.0
    inter = len(a.noun_classes & b.noun_classes)
    union = len(a.noun_classes | b.noun_classes)
    return 0.5 * (verb_iou + inter / union)


def _check_unique_ids(annotations: Sequence[CaptionAnnotation], label: str) -> None:
    seen: set[str] = set()
    for ann in annotations:
        if ann.id in seen:
            raise DataError(f"duplicate annotation id {ann.id!r} in {label}")
        seen.add(ann.id)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def relevance_matrix(
    queries: Iterable[CaptionAnnotation],
    gallery: Iterable[CaptionAnnotation],
) -> RelevanceMatrix:
    """Dense matrix of pair_relevance over every (query, gallery) pair.

    Rows may be computed by a small thread pool (``RANKFUSE_THREADS``); the
    result is independent of the worker count because each worker fills
    disjoint rows of a preallocated array.
    """
    queries = list(queries)
    gallery = list(gallery)
    if not queries or not gallery:
        raise DataError("relevance_matrix requires non-empty query and gallery sequences")
    _check_unique_ids(queries, "queries")
    _check_unique_ids(gallery, "gallery")

    out = np.empty((len(queries), len(gallery)), dtype=np.float64)

    def fill_row(i: int) -> None:
        q = queries[i]
        for j, g in enumerate(gallery):
            out[i, j] = pair_relevance(q, g)

    workers = _thread_count()
    if workers > 1 and len(queries) >= _PARALLEL_MIN_ROWS:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_row, range(len(queries))))
    else:
        for i in range(len(queries)):
            fill_row(i)

    return RelevanceMatrix(out, [q.id for q in queries], [g.id for g in gallery])
