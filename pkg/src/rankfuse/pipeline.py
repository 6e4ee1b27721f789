"""Filesystem-level pipeline commands behind the service and the CLI.

Each command reads and writes the on-disk formats from `dataio`, emits a
manifest with input/output checksums, and is deterministic given its
config and seed. Similarity matrices are rounded to their stored float32
precision before metrics are computed, so a report always matches a
re-evaluation of the emitted file.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .dataio import (
    SyntheticSpec,
    generate_synthetic,
    load_annotations,
    load_checkpoint,
    load_dataset,
    load_similarity,
    save_checkpoint,
    save_dataset,
    save_similarity,
    subset_split,
)
from .ensemble import mean_similarity
from .errors import DataError
from .manifest import RunManifest, sha256_file
from .matrices import SimilarityMatrix
from .metrics import MetricsReport, evaluate
from .neuralsort import NdcgLossConfig
from .relevance import relevance_matrix
from .trainer import TrainConfig, train
from .triplet import AugmentConfig, TripletConfig

CHECKPOINT_FILENAME = "checkpoint.rfmd"
HISTORY_FILENAME = "history.tsv"
SIMILARITY_FILENAME = "similarity.rfsm"
ENSEMBLE_FILENAME = "ensemble.rfsm"
REPORT_TEXT_FILENAME = "report.txt"
REPORT_JSON_FILENAME = "report.json"
MANIFEST_FILENAME = "manifest.json"

LOSS_NAMES = {"augmented-triplet": "augmented_triplet", "neural-ndcg": "neural_ndcg"}


@dataclass
class TrainSettings:
    """Flat training options as exposed on the wire and the command line."""

    loss: str
    epochs: int = 50
    learning_rate: float = 1e-4
    batch_size: int = 64
    embed_dim: int = 32
    seed: int = 0
    subset_fraction: float = 0.25
    margin: float = 0.2
    relevance_threshold: float = 0.15
    mining: str = "hardest"
    use_relevant_positives: bool = True
    augment_probability: float = 1.0
    partner_threshold: float = 0.15
    mix_low: float = 0.5
    mix_high: float = 1.0
    temperature: float = 1.0
    sinkhorn_iters: int = 30
    sinkhorn_eps: float = 1e-6
    ndcg_cutoff: int | None = None
    gain_base: float = 2.0

    def __post_init__(self):
        if self.loss not in LOSS_NAMES:
            raise DataError(f"loss must be one of {sorted(LOSS_NAMES)}, got {self.loss!r}")
        if not (0.0 < self.subset_fraction <= 1.0):
            raise DataError(f"subset_fraction must lie in (0, 1], got {self.subset_fraction}")


def _round_to_stored(sim: SimilarityMatrix) -> SimilarityMatrix:
    """Round values to the float32 grid used on disk."""
    return SimilarityMatrix(
        sim.values.astype(np.float32).astype(np.float64), list(sim.row_ids), list(sim.col_ids)
    )


def _write_reports(out_dir: str, report: MetricsReport) -> tuple[str, str]:
    text_path = os.path.join(out_dir, REPORT_TEXT_FILENAME)
    json_path = os.path.join(out_dir, REPORT_JSON_FILENAME)
    with open(text_path, "w", encoding="utf-8") as handle:
        handle.write(report.to_text())
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return text_path, json_path


def _dataset_input_checksums(data_dir: str) -> dict[str, str]:
    from .dataio import (
        ANNOTATIONS_FILENAME,
        SPLITS_FILENAME,
        TEXT_FEATURES_FILENAME,
        VIDEO_FEATURES_FILENAME,
    )

    names = (ANNOTATIONS_FILENAME, VIDEO_FEATURES_FILENAME, TEXT_FEATURES_FILENAME, SPLITS_FILENAME)
    return {
        path: sha256_file(path)
        for path in (os.path.join(data_dir, name) for name in names)
        if os.path.exists(path)
    }


def run_generate(spec: SyntheticSpec, out_dir: str) -> dict:
    """Write a synthetic dataset directory plus its manifest."""
    started = time.monotonic()
    dataset = generate_synthetic(spec)
    paths = save_dataset(dataset, out_dir)
    checksums = {path: sha256_file(path) for path in paths.values()}
    manifest_path = os.path.join(out_dir, MANIFEST_FILENAME)
    RunManifest(
        command="generate",
        config=asdict(spec),
        seed=spec.seed,
        inputs={},
        outputs=checksums,
        duration_seconds=time.monotonic() - started,
    ).write(manifest_path)
    return {
        "out_dir": out_dir,
        "files": paths,
        "checksums": checksums,
        "manifest_path": manifest_path,
        "n_items": spec.n_items,
    }


def run_train(data_dir: str, settings: TrainSettings, out_dir: str) -> dict:
    """Subset the train split, train one model, write checkpoint + history."""
    started = time.monotonic()
    dataset = load_dataset(data_dir)
    split_train = dataset.split_ids("train")
    if not split_train:
        raise DataError("dataset has an empty train split")
    selected = subset_split(split_train, settings.subset_fraction, settings.seed)

    loss_mode = LOSS_NAMES[settings.loss]
    cfg = TrainConfig(
        loss_mode=loss_mode,
        epochs=settings.epochs,
        learning_rate=settings.learning_rate,
        batch_size=settings.batch_size,
        embed_dim=settings.embed_dim,
        seed=settings.seed,
        triplet=TripletConfig(
            margin=settings.margin,
            relevance_threshold=settings.relevance_threshold,
            mining=settings.mining,
            use_relevant_positives=settings.use_relevant_positives,
        ),
        augment=(
            AugmentConfig(
                candidate_pool=frozenset(selected),
                probability=settings.augment_probability,
                partner_threshold=settings.partner_threshold,
                mix_low=settings.mix_low,
                mix_high=settings.mix_high,
            )
            if loss_mode == "augmented_triplet"
            else None
        ),
        ndcg_loss=NdcgLossConfig(
            temperature=settings.temperature,
            sinkhorn_iters=settings.sinkhorn_iters,
            sinkhorn_eps=settings.sinkhorn_eps,
            cutoff=settings.ndcg_cutoff,
            gain_base=settings.gain_base,
        ),
    )

    model, history = train(dataset, cfg, train_ids=selected)

    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_FILENAME)
    history_path = os.path.join(out_dir, HISTORY_FILENAME)
    save_checkpoint(checkpoint_path, model)
    with open(history_path, "w", encoding="utf-8") as handle:
        handle.write(history.to_text())

    config = asdict(settings)
    config["n_training_ids"] = len(selected)
    manifest_path = os.path.join(out_dir, MANIFEST_FILENAME)
    RunManifest(
        command="train",
        config=config,
        seed=settings.seed,
        inputs=_dataset_input_checksums(data_dir),
        outputs={path: sha256_file(path) for path in (checkpoint_path, history_path)},
        duration_seconds=time.monotonic() - started,
    ).write(manifest_path)

    final = history.final
    return {
        "checkpoint_path": checkpoint_path,
        "history_path": history_path,
        "manifest_path": manifest_path,
        "n_training_ids": len(selected),
        "final_epoch": final.epoch,
        "final_train_loss": final.train_loss,
        "final_val_ndcg_avg": final.val_ndcg_avg,
        "final_val_map_avg": final.val_map_avg,
    }


def run_evaluate(checkpoint_path: str, data_dir: str, split: str, out_dir: str) -> dict:
    """Encode one split, write its similarity matrix and metrics report."""
    started = time.monotonic()
    model = load_checkpoint(checkpoint_path)
    dataset = load_dataset(data_dir)
    ids = dataset.split_ids(split)
    if not ids:
        raise DataError(f"split {split!r} is empty")
    if model.video_dim != dataset.video_features.shape[1]:
        raise DataError(
            f"checkpoint expects video dimension {model.video_dim}, "
            f"dataset has {dataset.video_features.shape[1]}"
        )
    if model.text_dim != dataset.text_features.shape[1]:
        raise DataError(
            f"checkpoint expects text dimension {model.text_dim}, "
            f"dataset has {dataset.text_features.shape[1]}"
        )

    rows = dataset.rows_for(ids)
    video_emb = model.encode_video(dataset.video_features[rows])
    text_emb = model.encode_text(dataset.text_features[rows])
    sim = _round_to_stored(SimilarityMatrix(video_emb @ text_emb.T, ids, ids))

    os.makedirs(out_dir, exist_ok=True)
    similarity_path = os.path.join(out_dir, SIMILARITY_FILENAME)
    save_similarity(similarity_path, sim)

    annotations = dataset.annotations_for(ids)
    report = evaluate(sim, relevance_matrix(annotations, annotations))
    text_path, json_path = _write_reports(out_dir, report)

    inputs = _dataset_input_checksums(data_dir)
    inputs[checkpoint_path] = sha256_file(checkpoint_path)
    manifest_path = os.path.join(out_dir, MANIFEST_FILENAME)
    RunManifest(
        command="evaluate",
        config={"split": split, "checkpoint": checkpoint_path, "data_dir": data_dir},
        seed=None,
        inputs=inputs,
        outputs={
            path: sha256_file(path) for path in (similarity_path, text_path, json_path)
        },
        duration_seconds=time.monotonic() - started,
    ).write(manifest_path)

    return {
        "similarity_path": similarity_path,
        "report_text_path": text_path,
        "report_json_path": json_path,
        "manifest_path": manifest_path,
        "metrics": report.to_dict(),
    }


def run_ensemble(matrix_paths: list[str], annotations_path: str, out_dir: str) -> dict:
    """Average similarity matrices and evaluate the fused matrix."""
    started = time.monotonic()
    if not matrix_paths:
        raise DataError("ensemble requires at least one similarity matrix")
    matrices = [load_similarity(path) for path in matrix_paths]
    fused = _round_to_stored(mean_similarity(matrices))

    annotations = {ann.id: ann for ann in load_annotations(annotations_path)}

    def annotation_for(item_id: str):
        try:
            return annotations[item_id]
        except KeyError:
            raise DataError(
                f"{annotations_path}: no annotation for matrix id {item_id!r}"
            ) from None

    rel = relevance_matrix(
        [annotation_for(i) for i in fused.row_ids],
        [annotation_for(j) for j in fused.col_ids],
    )
    report = evaluate(fused, rel)

    os.makedirs(out_dir, exist_ok=True)
    matrix_path = os.path.join(out_dir, ENSEMBLE_FILENAME)
    save_similarity(matrix_path, fused)
    text_path, json_path = _write_reports(out_dir, report)

    inputs = {path: sha256_file(path) for path in matrix_paths}
    inputs[annotations_path] = sha256_file(annotations_path)
    manifest_path = os.path.join(out_dir, MANIFEST_FILENAME)
    RunManifest(
        command="ensemble",
        config={"matrices": list(matrix_paths), "annotations": annotations_path},
        seed=None,
        inputs=inputs,
        outputs={path: sha256_file(path) for path in (matrix_path, text_path, json_path)},
        duration_seconds=time.monotonic() - started,
    ).write(manifest_path)

    return {
        "matrix_path": matrix_path,
        "report_text_path": text_path,
        "report_json_path": json_path,
        "manifest_path": manifest_path,
        "metrics": report.to_dict(),
    }
