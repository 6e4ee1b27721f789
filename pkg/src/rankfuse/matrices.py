"""Dense score matrices with row/column identifiers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .relevance import RelevanceMatrix


@dataclass
class SimilarityMatrix:
    """Model-predicted scores for every (video, caption) pair.

    Rows are videos, columns are captions; ids are unique per axis and
    entries are finite.
    """

    values: np.ndarray
    row_ids: list[str]
    col_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"similarity values must be a 2-d matrix, got ndim={self.values.ndim}")
        self.row_ids = list(self.row_ids)
        self.col_ids = list(self.col_ids)
        rows, cols = self.values.shape
        if len(self.row_ids) != rows or len(self.col_ids) != cols:
            raise DataError(
                f"id counts ({len(self.row_ids)}, {len(self.col_ids)}) do not match "
                f"matrix shape {self.values.shape}"
            )
        if len(set(self.row_ids)) != rows or len(set(self.col_ids)) != cols:
            raise DataError("similarity matrix ids must be unique per axis")
        if not np.isfinite(self.values).all():
            raise DataError("similarity values must be finite")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _first_mismatch(a: list[str], b: list[str]) -> str:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return f"index {i}: {x!r} vs {y!r}"
    return f"length {len(a)} vs {len(b)}"


def check_aligned(sim: SimilarityMatrix, rel: RelevanceMatrix) -> None:
    """Raise DataError unless sim and rel share dimensions and id order."""
    if sim.values.shape != rel.values.shape:
        raise DataError(
            f"similarity shape {sim.values.shape} does not match relevance shape {rel.values.shape}"
        )
    if sim.row_ids != rel.row_ids:
        raise DataError(f"row id mismatch at {_first_mismatch(sim.row_ids, rel.row_ids)}")
    if sim.col_ids != rel.col_ids:
        raise DataError(f"column id mismatch at {_first_mismatch(sim.col_ids, rel.col_ids)}")
