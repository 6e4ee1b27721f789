"""Tests for the two-tower encoders, cosine similarity, and Adam."""

import numpy as np
import pytest

from rankfuse.errors import DataError
from rankfuse.model import (
    AdamConfig,
    AdamState,
    TwoTowerModel,
    adam_step,
    encode,
    encode_backward,
    init_model,
    similarity,
)

FD_STEP = 1e-6


def encode_oracle(features, weights, bias):
    """Independent projection + row normalization."""
    out = np.array([[sum(f * w for f, w in zip(row, col)) for col in weights.T] for row in features])
    out = out + bias
    for i in range(out.shape[0]):
        norm = np.sqrt((out[i] ** 2).sum())
        if norm > 0:
            out[i] = out[i] / norm
    return out


class TestEncode:
    def test_identity_on_unit_row(self):
        row = np.array([[0.6, 0.8]])
        out = encode(row, np.eye(2), np.zeros(2))
        np.testing.assert_allclose(out, row, atol=1e-15)

    def test_rows_have_unit_norm(self):
        rng = np.random.default_rng(201)
        out = encode(rng.normal(size=(10, 7)), rng.normal(size=(7, 4)), rng.normal(size=4))
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(203)
        features = rng.normal(size=(5, 6))
        weights = rng.normal(size=(6, 3))
        bias = rng.normal(size=3)
        np.testing.assert_allclose(
            encode(features, weights, bias), encode_oracle(features, weights, bias), atol=1e-10
        )

    def test_zero_projection_row_stays_zero(self):
        out = encode(np.zeros((2, 3)), np.ones((3, 4)), np.zeros(4))
        np.testing.assert_array_equal(out, np.zeros((2, 4)))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DataError):
            encode(np.ones((2, 3)), np.ones((4, 2)), np.zeros(2))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(207)
        features = rng.normal(size=(4, 5))
        weights = rng.normal(size=(5, 3))
        bias = rng.normal(size=3)
        coeffs = rng.normal(size=(4, 3))

        def scalar(w, b):
            return float((encode(features, w, b) * coeffs).sum())

        dw, db = encode_backward(features, weights, bias, coeffs)
        fd_w = np.zeros_like(weights)
        for idx in np.ndindex(weights.shape):
            w = weights.copy()
            w[idx] += FD_STEP
            hi = scalar(w, bias)
            w[idx] -= 2 * FD_STEP
            lo = scalar(w, bias)
            fd_w[idx] = (hi - lo) / (2 * FD_STEP)
        np.testing.assert_allclose(dw, fd_w, rtol=1e-5, atol=1e-9)
        fd_b = np.zeros_like(bias)
        for i in range(bias.size):
            b = bias.copy()
            b[i] += FD_STEP
            hi = scalar(weights, b)
            b[i] -= 2 * FD_STEP
            lo = scalar(weights, b)
            fd_b[i] = (hi - lo) / (2 * FD_STEP)
        np.testing.assert_allclose(db, fd_b, rtol=1e-5, atol=1e-9)


class TestSimilarity:
    def test_identical_unit_vectors(self):
        emb = np.array([[1.0, 0.0]])
        sim = similarity(emb, emb)
        np.testing.assert_array_equal(sim.values, [[1.0]])

    def test_orthogonal_unit_vectors(self):
        sim = similarity(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
        assert sim.values[0, 0] == 0.0

    def test_matches_dot_products(self):
        rng = np.random.default_rng(211)
        video = rng.normal(size=(3, 4))
        video /= np.linalg.norm(video, axis=1, keepdims=True)
        text = rng.normal(size=(5, 4))
        text /= np.linalg.norm(text, axis=1, keepdims=True)
        sim = similarity(video, text)
        for i in range(3):
            for j in range(5):
                assert sim.values[i, j] == pytest.approx(float(video[i] @ text[j]), abs=1e-12)
        assert (np.abs(sim.values) <= 1 + 1e-12).all()

    def test_ids_default_and_custom(self):
        emb = np.eye(2)
        sim = similarity(emb, emb, row_ids=["a", "b"], col_ids=["c", "d"])
        assert sim.row_ids == ["a", "b"] and sim.col_ids == ["c", "d"]
        assert similarity(emb, emb).row_ids == ["v0", "v1"]

    def test_embed_dim_mismatch_rejected(self):
        with pytest.raises(DataError):
            similarity(np.ones((1, 2)), np.ones((1, 3)))


class TestAdamStep:
    def params(self, value):
        return {"w": np.array([value], dtype=np.float64)}

    def test_zero_gradient_zero_state_is_identity(self):
        params = self.params(1.5)
        state = AdamState.zeros_like(params)
        new_params, _ = adam_step(params, {"w": np.zeros(1)}, state, 1, AdamConfig())
        np.testing.assert_array_equal(new_params["w"], params["w"])

    def test_first_step_hand_value(self):
        params = self.params(0.0)
        state = AdamState.zeros_like(params)
        cfg = AdamConfig(learning_rate=0.1)
        new_params, _ = adam_step(params, {"w": np.ones(1)}, state, 1, cfg)
        assert new_params["w"][0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-12)

    def test_two_steps_match_hand_unrolled_trace(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        cfg = AdamConfig(lr, b1, b2, eps)
        params = self.params(0.0)
        state = AdamState.zeros_like(params)
        g = 1.0
        p, m, v = 0.0, 0.0, 0.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
            params, state = adam_step(params, {"w": np.array([g])}, state, t, cfg)
            assert params["w"][0] == pytest.approx(p, abs=1e-15)

    def test_shape_mismatch_rejected(self):
        params = self.params(0.0)
        state = AdamState.zeros_like(params)
        with pytest.raises(DataError):
            adam_step(params, {"w": np.zeros(2)}, state, 1, AdamConfig())

    def test_step_index_must_be_positive(self):
        params = self.params(0.0)
        state = AdamState.zeros_like(params)
        with pytest.raises(DataError):
            adam_step(params, {"w": np.zeros(1)}, state, 0, AdamConfig())


class TestModelInit:
    def test_deterministic_given_seed(self):
        a = init_model(5, 4, 3, np.random.default_rng(99))
        b = init_model(5, 4, 3, np.random.default_rng(99))
        np.testing.assert_array_equal(a.video_weights, b.video_weights)
        np.testing.assert_array_equal(a.text_weights, b.text_weights)

    def test_bounds_and_zero_biases(self):
        model = init_model(16, 9, 4, np.random.default_rng(7))
        assert (np.abs(model.video_weights) <= 1 / 4).all()
        assert (np.abs(model.text_weights) <= 1 / 3).all()
        np.testing.assert_array_equal(model.video_bias, np.zeros(4))

    def test_mismatched_towers_rejected(self):
        with pytest.raises(DataError):
            TwoTowerModel(np.ones((3, 2)), np.zeros(2), np.ones((4, 5)), np.zeros(5))
