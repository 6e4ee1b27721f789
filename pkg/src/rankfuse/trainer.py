"""Bidirectional training loop for the two-tower model.

One seeded generator drives weight init, epoch shuffles, augmentation, and
any sampling inside the loss, consumed in a fixed documented order, so a
(dataset, config, seed) triple always reproduces the same weights and
history bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .errors import DataError
from .matrices import SimilarityMatrix
from .metrics import evaluate
from .model import (
    AdamConfig,
    AdamState,
    TwoTowerModel,
    adam_step,
    encode,
    encode_backward,
    init_model,
)
from .neuralsort import NdcgLossConfig, neural_ndcg_batch_loss
from .relevance import relevance_matrix
from .triplet import AugmentConfig, FeatureBatch, TripletConfig, sample_augmented_batch, triplet_ranp_loss

LOSS_MODES = ("augmented_triplet", "neural_ndcg")


@dataclass
class TrainConfig:
    """Optimization settings plus the embedded loss/augmentation configs."""

    loss_mode: str
    epochs: int = 50
    learning_rate: float = 1e-4
    batch_size: int = 64
    embed_dim: int = 32
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    triplet: TripletConfig = field(default_factory=TripletConfig)
    augment: AugmentConfig | None = None
    ndcg_loss: NdcgLossConfig = field(default_factory=NdcgLossConfig)

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise DataError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        min_batch = 2 if self.loss_mode == "augmented_triplet" else 1
        if self.batch_size < min_batch:
            raise DataError(
                f"batch_size must be >= {min_batch} for {self.loss_mode}, got {self.batch_size}"
            )
        if self.embed_dim < 1:
            raise DataError(f"embed_dim must be >= 1, got {self.embed_dim}")
        # Delegate range checks on the optimizer fields.
        self.adam_config()

    def adam_config(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_eps)


@dataclass
class EpochRecord:
    """Loss and validation metrics after one epoch (epoch 0 is the untrained model)."""

    epoch: int
    train_loss: float
    val_ndcg_avg: float
    val_map_avg: float


@dataclass
class TrainHistory:
    """Per-epoch records; epoch 0 holds the untrained baseline with NaN loss."""

    records: list[EpochRecord]

    def __post_init__(self):
        epochs = [r.epoch for r in self.records]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise DataError("history epochs must be strictly increasing")

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]

    def to_text(self) -> str:
        """Tab-separated text, one epoch per line: epoch, loss, ndcg, map."""
        lines = [
            f"{r.epoch}\t{r.train_loss!r}\t{r.val_ndcg_avg!r}\t{r.val_map_avg!r}"
            for r in self.records
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainHistory":
        records = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"history line {lineno}: expected 4 tab-separated fields")
            try:
                records.append(
                    EpochRecord(int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]))
                )
            except ValueError as exc:
                raise DataError(f"history line {lineno}: {exc}") from exc
        return cls(records)


def model_gradients(
    batch: FeatureBatch,
    relevance: np.ndarray,
    model: TwoTowerModel,
    loss_mode: str,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Scalar batch loss and its exact gradient for every weight and bias.

    Chains the loss gradient with respect to the similarity matrix through
    the cosine-similarity product and each tower's normalize-after-project
    encoder.
    """
    if loss_mode not in LOSS_MODES:
        raise DataError(f"loss_mode must be one of {LOSS_MODES}, got {loss_mode!r}")
    relevance = np.asarray(relevance, dtype=np.float64)
    video_emb = encode(batch.video, model.video_weights, model.video_bias)
    text_emb = encode(batch.text, model.text_weights, model.text_bias)
    sim_values = video_emb @ text_emb.T

    if loss_mode == "augmented_triplet":
        loss, dsim = triplet_ranp_loss(sim_values, relevance, cfg.triplet, rng)
    else:
        loss, dsim = neural_ndcg_batch_loss(sim_values, relevance, cfg.ndcg_loss)

    dvideo_emb = dsim @ text_emb
    dtext_emb = dsim.T @ video_emb
    video_w, video_b = encode_backward(batch.video, model.video_weights, model.video_bias, dvideo_emb)
    text_w, text_b = encode_backward(batch.text, model.text_weights, model.text_bias, dtext_emb)
    return loss, {
        "video_weights": video_w,
        "video_bias": video_b,
        "text_weights": text_w,
        "text_bias": text_b,
    }


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    train_ids=None,
) -> tuple[TwoTowerModel, TrainHistory]:
    """Run the full training loop and record per-epoch validation metrics.

    `train_ids` restricts training to a subset of the train split (the
    subset protocol); None uses the whole split. In augmented mode the
    candidate pool must equal that subset, and defaults to it.
    """
    split_train = dataset.split_ids("train")
    if train_ids is None:
        train_ids = split_train
    train_ids = list(train_ids)
    if not train_ids:
        raise DataError("no training ids")
    outside = set(train_ids) - set(split_train)
    if outside:
        raise DataError(f"train_ids not in the train split: {sorted(outside)[:3]}")
    val_ids = dataset.split_ids("validation")
    if not val_ids:
        raise DataError("validation split is empty")

    rng = np.random.default_rng(cfg.seed)
    model = init_model(
        dataset.video_features.shape[1], dataset.text_features.shape[1], cfg.embed_dim, rng
    )

    pool_rows = dataset.rows_for(train_ids)
    pool = FeatureBatch(
        train_ids, dataset.video_features[pool_rows], dataset.text_features[pool_rows]
    )
    pool_annotations = dataset.annotations_for(train_ids)
    rel_pool = relevance_matrix(pool_annotations, pool_annotations)

    augment_cfg = None
    if cfg.loss_mode == "augmented_triplet":
        augment_cfg = cfg.augment if cfg.augment is not None else AugmentConfig(frozenset(train_ids))
        if set(augment_cfg.candidate_pool) != set(train_ids):
            raise DataError("augmentation candidate pool must equal the training subset")

    val_rows = dataset.rows_for(val_ids)
    val_video = dataset.video_features[val_rows]
    val_text = dataset.text_features[val_rows]
    val_annotations = dataset.annotations_for(val_ids)
    rel_val = relevance_matrix(val_annotations, val_annotations)

    def validation_metrics(current: TwoTowerModel) -> tuple[float, float]:
        sim_values = current.encode_video(val_video) @ current.encode_text(val_text).T
        report = evaluate(SimilarityMatrix(sim_values, val_ids, val_ids), rel_val)
        return report.ndcg_avg, report.map_avg

    baseline_ndcg, baseline_map = validation_metrics(model)
    records = [EpochRecord(0, float("nan"), baseline_ndcg, baseline_map)]

    params = model.params()
    state = AdamState.zeros_like(params)
    adam_cfg = cfg.adam_config()
    step = 0
    n = len(train_ids)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            batch = FeatureBatch(
                [train_ids[i] for i in rows], pool.video[rows], pool.text[rows]
            )
            rel_batch = rel_pool.values[np.ix_(rows, rows)]
            if augment_cfg is not None:
                batch = sample_augmented_batch(batch, pool, rel_pool, augment_cfg, rng)
            loss, grads = model_gradients(batch, rel_batch, model, cfg.loss_mode, cfg, rng)
            step += 1
            params, state = adam_step(params, grads, state, step, adam_cfg)
            model = TwoTowerModel(**params)
            batch_losses.append(loss)
        epoch_ndcg, epoch_map = validation_metrics(model)
        records.append(EpochRecord(epoch, float(np.mean(batch_losses)), epoch_ndcg, epoch_map))

    return model, TrainHistory(records)
