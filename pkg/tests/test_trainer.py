"""Tests for the training loop: gradients, determinism, bookkeeping."""

import numpy as np
import pytest

from rankfuse.dataio import SyntheticSpec, generate_synthetic
from rankfuse.errors import DataError
from rankfuse.model import TwoTowerModel, init_model
from rankfuse.neuralsort import NdcgLossConfig
from rankfuse.trainer import EpochRecord, TrainConfig, TrainHistory, model_gradients, train
from rankfuse.triplet import FeatureBatch, TripletConfig

FD_STEP = 1e-6


def tiny_batch(rng, n=2, d_video=3, d_text=3):
    ids = [f"b{i}" for i in range(n)]
    batch = FeatureBatch(ids, rng.normal(size=(n, d_video)), rng.normal(size=(n, d_text)))
    rel = rng.uniform(0, 1, size=(n, n))
    np.fill_diagonal(rel, 1.0)
    return batch, rel


def loss_for_params(params, batch, rel, loss_mode, cfg, seed):
    model = TwoTowerModel(**params)
    loss, _ = model_gradients(batch, rel, model, loss_mode, cfg, np.random.default_rng(seed))
    return loss


def fd_param_gradients(params, batch, rel, loss_mode, cfg, seed):
    grads = {}
    for key, value in params.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            perturbed = {k: v.copy() for k, v in params.items()}
            perturbed[key][idx] += FD_STEP
            hi = loss_for_params(perturbed, batch, rel, loss_mode, cfg, seed)
            perturbed[key][idx] -= 2 * FD_STEP
            lo = loss_for_params(perturbed, batch, rel, loss_mode, cfg, seed)
            grad[idx] = (hi - lo) / (2 * FD_STEP)
        grads[key] = grad
    return grads


class TestModelGradients:
    @pytest.mark.parametrize("loss_mode", ["augmented_triplet", "neural_ndcg"])
    def test_matches_finite_differences(self, loss_mode):
        rng = np.random.default_rng(401)
        cfg = TrainConfig(loss_mode=loss_mode, triplet=TripletConfig(margin=0.2))
        for trial in range(8):
            batch, rel = tiny_batch(rng, n=int(rng.integers(2, 4)), d_video=3, d_text=4)
            model = init_model(3, 4, 3, rng)
            seed = 700 + trial
            loss, grads = model_gradients(batch, rel, model, loss_mode, cfg, np.random.default_rng(seed))
            fd = fd_param_gradients(model.params(), batch, rel, loss_mode, cfg, seed)
            for key in grads:
                np.testing.assert_allclose(
                    grads[key], fd[key], rtol=1e-4, atol=1e-7, err_msg=f"{loss_mode}/{key}"
                )

    def test_inactive_hinges_give_zero_gradients(self):
        # One fully relevant pair per cluster with similarities separated by
        # more than the margin in every direction.
        ids = ["a", "b"]
        batch = FeatureBatch(ids, np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]))
        rel = np.eye(2)
        cfg = TrainConfig(loss_mode="augmented_triplet", triplet=TripletConfig(margin=0.2))
        model = TwoTowerModel(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
        loss, grads = model_gradients(batch, rel, model, "augmented_triplet", cfg, np.random.default_rng(0))
        assert loss == 0.0
        for value in grads.values():
            np.testing.assert_array_equal(value, np.zeros_like(value))

    def test_duplicated_item_matches_independent_recomputation(self):
        # Appending a copy of an item must produce exactly the loss of the
        # enlarged batch as recomputed from scratch on explicit arrays.
        rng = np.random.default_rng(407)
        batch, rel = tiny_batch(rng, n=3)
        cfg = TrainConfig(loss_mode="neural_ndcg", ndcg_loss=NdcgLossConfig(temperature=1.0))
        model = init_model(3, 3, 3, rng)

        dup_ids = batch.ids + ["dup"]
        dup_batch = FeatureBatch(
            dup_ids,
            np.vstack([batch.video, batch.video[-1:]]),
            np.vstack([batch.text, batch.text[-1:]]),
        )
        dup_rel = np.pad(rel, ((0, 1), (0, 1)))
        dup_rel[3, :3] = rel[2, :]
        dup_rel[:3, 3] = rel[:, 2]
        dup_rel[3, 3] = rel[2, 2]

        loss, _ = model_gradients(dup_batch, dup_rel, model, "neural_ndcg", cfg)
        from rankfuse.model import encode
        from rankfuse.neuralsort import neural_ndcg_batch_loss

        video = encode(dup_batch.video, model.video_weights, model.video_bias)
        text = encode(dup_batch.text, model.text_weights, model.text_bias)
        want, _ = neural_ndcg_batch_loss(video @ text.T, dup_rel, cfg.ndcg_loss)
        assert loss == want

    def test_unknown_loss_mode_rejected(self):
        rng = np.random.default_rng(409)
        batch, rel = tiny_batch(rng)
        model = init_model(3, 3, 2, rng)
        cfg = TrainConfig(loss_mode="neural_ndcg")
        with pytest.raises(DataError):
            model_gradients(batch, rel, model, "contrastive", cfg)


def toy_dataset(n_items=24, seed=17):
    return generate_synthetic(
        SyntheticSpec(
            n_items=n_items,
            n_clusters=3,
            n_verb_classes=6,
            video_dim=6,
            text_dim=5,
            noise_sigma=0.02,
            seed=seed,
        )
    )


class TestTrain:
    def test_single_epoch_bookkeeping(self):
        dataset = toy_dataset()
        cfg = TrainConfig(loss_mode="neural_ndcg", epochs=1, batch_size=8, embed_dim=4, seed=3)
        model, history = train(dataset, cfg)
        assert [r.epoch for r in history.records] == [0, 1]
        assert np.isnan(history.records[0].train_loss)
        assert np.isfinite(history.records[1].train_loss)
        assert model.embed_dim == 4

    def test_zero_epochs_rejected(self):
        with pytest.raises(DataError):
            TrainConfig(loss_mode="neural_ndcg", epochs=0)

    def test_triplet_needs_batch_of_two(self):
        with pytest.raises(DataError):
            TrainConfig(loss_mode="augmented_triplet", batch_size=1)

    @pytest.mark.parametrize("loss_mode", ["augmented_triplet", "neural_ndcg"])
    def test_same_seed_bit_identical(self, loss_mode):
        dataset = toy_dataset()
        cfg = TrainConfig(loss_mode=loss_mode, epochs=2, batch_size=8, embed_dim=4, seed=11, learning_rate=0.01)
        model_a, hist_a = train(dataset, cfg)
        model_b, hist_b = train(dataset, cfg)
        for key in ("video_weights", "video_bias", "text_weights", "text_bias"):
            np.testing.assert_array_equal(getattr(model_a, key), getattr(model_b, key))
        assert hist_a.to_text() == hist_b.to_text()

    @pytest.mark.parametrize("loss_mode", ["augmented_triplet", "neural_ndcg"])
    def test_training_improves_validation_ndcg(self, loss_mode):
        dataset = toy_dataset(n_items=60, seed=29)
        cfg = TrainConfig(
            loss_mode=loss_mode, epochs=10, batch_size=16, embed_dim=8, seed=5, learning_rate=0.01
        )
        _, history = train(dataset, cfg)
        assert history.final.val_ndcg_avg > history.records[0].val_ndcg_avg

    def test_subset_restricts_training_pool(self):
        dataset = toy_dataset(n_items=40, seed=31)
        split = dataset.split_ids("train")
        subset = split[: len(split) // 2]
        cfg = TrainConfig(loss_mode="augmented_triplet", epochs=1, batch_size=8, embed_dim=4, seed=1)
        model, history = train(dataset, cfg, train_ids=subset)
        assert len(history.records) == 2

    def test_train_ids_outside_split_rejected(self):
        dataset = toy_dataset()
        bad = dataset.split_ids("validation")[:1]
        cfg = TrainConfig(loss_mode="neural_ndcg", epochs=1, batch_size=8)
        with pytest.raises(DataError):
            train(dataset, cfg, train_ids=dataset.split_ids("train") + bad)

    def test_mismatched_augment_pool_rejected(self):
        from rankfuse.triplet import AugmentConfig

        dataset = toy_dataset()
        split = dataset.split_ids("train")
        cfg = TrainConfig(
            loss_mode="augmented_triplet",
            epochs=1,
            batch_size=8,
            augment=AugmentConfig(candidate_pool=frozenset(split[:3])),
        )
        with pytest.raises(DataError):
            train(dataset, cfg)


class TestTrainHistory:
    def test_text_round_trip(self):
        history = TrainHistory(
            [
                EpochRecord(0, float("nan"), 0.5, 0.25),
                EpochRecord(1, 0.75, 0.625, 0.375),
            ]
        )
        text = history.to_text()
        parsed = TrainHistory.from_text(text)
        assert len(parsed.records) == 2
        assert np.isnan(parsed.records[0].train_loss)
        assert parsed.records[1] == history.records[1]

    def test_non_increasing_epochs_rejected(self):
        with pytest.raises(DataError):
            TrainHistory([EpochRecord(1, 0.1, 0.2, 0.3), EpochRecord(1, 0.1, 0.2, 0.3)])

    def test_malformed_line_rejected(self):
        with pytest.raises(DataError):
            TrainHistory.from_text("0\t1.0\n")
