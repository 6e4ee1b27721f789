"""Two-tower projection model, cosine similarity, and the Adam update.

Each tower is a linear projection plus bias whose output rows are
L2-normalized, so the dot product of two embeddings is their cosine
similarity. Backward passes are hand-written (including the normalization
Jacobian) and checked against finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .matrices import SimilarityMatrix

PARAM_KEYS = ("video_weights", "video_bias", "text_weights", "text_bias")


@dataclass
class TwoTowerModel:
    """Per-modality projection weights producing unit-norm embeddings."""

    video_weights: np.ndarray
    video_bias: np.ndarray
    text_weights: np.ndarray
    text_bias: np.ndarray

    def __post_init__(self):
        for key in PARAM_KEYS:
            setattr(self, key, np.asarray(getattr(self, key), dtype=np.float64))
        if self.video_weights.ndim != 2 or self.text_weights.ndim != 2:
            raise DataError("tower weights must be 2-d matrices")
        embed = self.video_weights.shape[1]
        if embed < 1:
            raise DataError("embedding dimension must be >= 1")
        if self.text_weights.shape[1] != embed:
            raise DataError(
                f"towers disagree on embedding dimension: "
                f"{embed} vs {self.text_weights.shape[1]}"
            )
        if self.video_bias.shape != (embed,) or self.text_bias.shape != (embed,):
            raise DataError("bias shapes must match the embedding dimension")
        for key in PARAM_KEYS:
            if not np.isfinite(getattr(self, key)).all():
                raise DataError(f"{key} contains non-finite values")

    @property
    def video_dim(self) -> int:
        return self.video_weights.shape[0]

    @property
    def text_dim(self) -> int:
        return self.text_weights.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.video_weights.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {key: getattr(self, key) for key in PARAM_KEYS}

    def encode_video(self, features: np.ndarray) -> np.ndarray:
        return encode(features, self.video_weights, self.video_bias)

    def encode_text(self, features: np.ndarray) -> np.ndarray:
        return encode(features, self.text_weights, self.text_bias)


def init_model(video_dim: int, text_dim: int, embed_dim: int, rng: np.random.Generator) -> TwoTowerModel:
    """Seeded uniform init in [-1/sqrt(D), 1/sqrt(D)] per tower, zero biases."""
    if video_dim < 1 or text_dim < 1 or embed_dim < 1:
        raise DataError("model dimensions must be >= 1")
    bound_v = 1.0 / np.sqrt(video_dim)
    bound_t = 1.0 / np.sqrt(text_dim)
    return TwoTowerModel(
        video_weights=rng.uniform(-bound_v, bound_v, size=(video_dim, embed_dim)),
        video_bias=np.zeros(embed_dim),
        text_weights=rng.uniform(-bound_t, bound_t, size=(text_dim, embed_dim)),
        text_bias=np.zeros(embed_dim),
    )


def encode(features, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Project rows and L2-normalize them; all-zero projections stay zero."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DataError(f"features must be 2-d, got ndim={features.ndim}")
    if features.shape[1] != weights.shape[0]:
        raise DataError(
            f"feature dimension {features.shape[1]} does not match tower input {weights.shape[0]}"
        )
    projected = features @ weights + bias
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    safe = np.where(norms == 0, 1.0, norms)
    return projected / safe


def encode_backward(
    features: np.ndarray, weights: np.ndarray, bias: np.ndarray, dembeddings: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients (dweights, dbias) of a scalar through encode.

    Rows with an all-zero projection are the documented degenerate case and
    propagate no gradient.
    """
    projected = features @ weights + bias
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    safe = np.where(norms == 0, 1.0, norms)
    normalized = projected / safe
    dprojected = (dembeddings - (dembeddings * normalized).sum(axis=1, keepdims=True) * normalized) / safe
    dprojected = np.where(norms == 0, 0.0, dprojected)
    return features.T @ dprojected, dprojected.sum(axis=0)


def similarity(
    video_emb: np.ndarray,
    text_emb: np.ndarray,
    row_ids=None,
    col_ids=None,
) -> SimilarityMatrix:
    """Cosine similarity of unit-norm embedding rows as a SimilarityMatrix.

    Ids default to positional ``v{i}`` / ``t{j}`` labels.
    """
    video_emb = np.asarray(video_emb, dtype=np.float64)
    text_emb = np.asarray(text_emb, dtype=np.float64)
    if video_emb.ndim != 2 or text_emb.ndim != 2:
        raise DataError("embeddings must be 2-d")
    if video_emb.shape[1] != text_emb.shape[1]:
        raise DataError(
            f"embedding dimensions differ: {video_emb.shape[1]} vs {text_emb.shape[1]}"
        )
    values = video_emb @ text_emb.T
    if row_ids is None:
        row_ids = [f"v{i}" for i in range(video_emb.shape[0])]
    if col_ids is None:
        col_ids = [f"t{j}" for j in range(text_emb.shape[0])]
    return SimilarityMatrix(values, row_ids, col_ids)


@dataclass
class AdamConfig:
    """Step size and moment decay of the Adam update."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise DataError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise DataError("beta1 and beta2 must lie in [0, 1)")
        if not (self.eps > 0):
            raise DataError(f"eps must be positive, got {self.eps}")


@dataclass
class AdamState:
    """First and second moment accumulators, one array per parameter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    cfg: AdamConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if t < 1:
        raise DataError(f"step index must be >= 1, got {t}")
    if set(params) != set(grads):
        raise DataError("params and grads must cover the same keys")
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise DataError(f"gradient shape {g.shape} does not match parameter {key} {p.shape}")
        m = cfg.beta1 * state.m[key] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[key] + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        new_params[key] = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(m=new_m, v=new_v)
