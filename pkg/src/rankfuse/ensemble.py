"""Late fusion of models by averaging their similarity matrices."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DataError
from .matrices import SimilarityMatrix, _first_mismatch


def mean_similarity(matrices: Sequence[SimilarityMatrix]) -> SimilarityMatrix:
    """Entry-wise arithmetic mean of aligned similarity matrices.

    All inputs must share dimensions and identically-ordered ids. Summands
    are accumulated in a canonical content-derived order, so a permutation
    of the input sequence produces a bit-identical result; the mean of a
    single matrix (or of identical matrices) is exact.
    """
    matrices = list(matrices)
    if not matrices:
        raise DataError("mean_similarity requires at least one matrix")
    first = matrices[0]
    for other in matrices[1:]:
        if other.values.shape != first.values.shape:
            raise DataError(
                f"matrix shape {other.values.shape} does not match {first.values.shape}"
            )
        if other.row_ids != first.row_ids:
            raise DataError(f"row id mismatch at {_first_mismatch(first.row_ids, other.row_ids)}")
        if other.col_ids != first.col_ids:
            raise DataError(
                f"column id mismatch at {_first_mismatch(first.col_ids, other.col_ids)}"
            )
    if len(matrices) == 1:
        return SimilarityMatrix(first.values.copy(), list(first.row_ids), list(first.col_ids))
    order = sorted(range(len(matrices)), key=lambda i: matrices[i].values.tobytes())
    total = np.zeros_like(first.values)
    for i in order:
        total += matrices[i].values
    return SimilarityMatrix(total / len(matrices), list(first.row_ids), list(first.col_ids))
