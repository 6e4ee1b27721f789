"""Tests for similarity-matrix late fusion."""

import numpy as np
import pytest

from rankfuse.ensemble import mean_similarity
from rankfuse.errors import DataError
from rankfuse.matrices import SimilarityMatrix


def sim(values, rows=None, cols=None):
    values = np.asarray(values, dtype=np.float64)
    rows = rows or [f"v{i}" for i in range(values.shape[0])]
    cols = cols or [f"t{j}" for j in range(values.shape[1])]
    return SimilarityMatrix(values, rows, cols)


class TestMeanSimilarity:
    def test_single_matrix_returned_unchanged(self):
        m = sim(np.array([[0.25, -0.5]]))
        out = mean_similarity([m])
        np.testing.assert_array_equal(out.values, m.values)
        assert out.row_ids == m.row_ids and out.col_ids == m.col_ids

    def test_two_matrix_hand_value(self):
        out = mean_similarity([sim([[1.0]]), sim([[0.0]])])
        np.testing.assert_array_equal(out.values, [[0.5]])

    def test_matches_naive_entrywise_oracle(self):
        rng = np.random.default_rng(501)
        mats = [sim(rng.normal(size=(3, 3))) for _ in range(3)]
        out = mean_similarity(mats)
        for i in range(3):
            for j in range(3):
                want = sum(m.values[i, j] for m in mats) / 3
                assert abs(out.values[i, j] - want) < 1e-15

    def test_idempotent_on_identical_inputs(self):
        rng = np.random.default_rng(503)
        m = sim(rng.normal(size=(4, 5)))
        out = mean_similarity([m, m])
        np.testing.assert_array_equal(out.values, m.values)

    def test_order_invariant_bit_exact(self):
        rng = np.random.default_rng(505)
        mats = [sim(rng.normal(size=(4, 4))) for _ in range(4)]
        forward = mean_similarity(mats)
        shuffled = mean_similarity([mats[2], mats[0], mats[3], mats[1]])
        np.testing.assert_array_equal(forward.values, shuffled.values)

    def test_entries_bounded_by_inputs(self):
        rng = np.random.default_rng(507)
        mats = [sim(rng.normal(size=(5, 5))) for _ in range(3)]
        out = mean_similarity(mats)
        stacked = np.stack([m.values for m in mats])
        assert (out.values >= stacked.min(axis=0) - 1e-12).all()
        assert (out.values <= stacked.max(axis=0) + 1e-12).all()

    def test_empty_sequence_rejected(self):
        with pytest.raises(DataError):
            mean_similarity([])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DataError):
            mean_similarity([sim(np.ones((2, 2))), sim(np.ones((2, 3)))])

    def test_id_mismatch_names_first_difference(self):
        a = sim(np.ones((2, 2)), rows=["x", "y"])
        b = sim(np.ones((2, 2)), rows=["x", "z"])
        with pytest.raises(DataError, match=r"index 1.*'y'.*'z'"):
            mean_similarity([a, b])
