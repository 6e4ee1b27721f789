"""File formats, dataset assembly, the subset protocol, and synthetic data.

On-disk contract (all little-endian, all versioned):

* annotations: JSON lines, one object per caption with fields
  ``id`` (string), ``verb_class`` (int), ``noun_classes`` (non-empty int list).
* ``RFFT`` feature files: magic, u32 version, u64 N, u64 D, N ids
  (u16 length + UTF-8 bytes), then N*D float32 values row-major.
* ``RFSM`` similarity files: as features but with u64 N, u64 M and a second
  id vector for columns before the N*M float32 payload.
* ``RFMD`` checkpoints: magic, u32 version, u64 (D_v, D_t, E), then float64
  video weights, video bias, text weights, text bias, row-major.

Features and similarities are stored as 4-byte floats (matching typical
pre-extracted features); all in-memory math uses 8-byte floats. Loading a
file written by the matching save is bit-exact.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    DataError,
    FileFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .matrices import SimilarityMatrix
from .model import TwoTowerModel
from .relevance import CaptionAnnotation

MAGIC_FEATURES = b"RFFT"
MAGIC_SIMILARITY = b"RFSM"
MAGIC_CHECKPOINT = b"RFMD"
FORMAT_VERSION = 1

SPLIT_NAMES = ("train", "validation", "test")

ANNOTATIONS_FILENAME = "annotations.jsonl"
VIDEO_FEATURES_FILENAME = "video_features.rfft"
TEXT_FEATURES_FILENAME = "text_features.rfft"
SPLITS_FILENAME = "splits.json"


# ---------------------------------------------------------------------------
# Annotations (JSON lines)
# ---------------------------------------------------------------------------


def load_annotations(path) -> list[CaptionAnnotation]:
    """Parse a JSON-lines annotation file, preserving order.

    Malformed lines report their line number; duplicate ids report both
    offending lines.
    """
    annotations: list[CaptionAnnotation] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path}: line {lineno}: expected a JSON object")
            try:
                ident = record["id"]
                verb = record["verb_class"]
                nouns = record["noun_classes"]
            except KeyError as exc:
                raise DataError(
                    f"{path}: line {lineno}: missing field {exc.args[0]!r}"
                ) from exc
            if not isinstance(ident, str):
                raise DataError(f"{path}: line {lineno}: id must be a string")
            if not isinstance(verb, int) or isinstance(verb, bool):
                raise DataError(f"{path}: line {lineno}: verb_class must be an integer")
            if not isinstance(nouns, list) or not all(
                isinstance(n, int) and not isinstance(n, bool) for n in nouns
            ):
                raise DataError(f"{path}: line {lineno}: noun_classes must be an integer list")
            if ident in seen:
                raise DataError(
                    f"{path}: duplicate id {ident!r} on lines {seen[ident]} and {lineno}"
                )
            seen[ident] = lineno
            try:
                annotations.append(CaptionAnnotation(ident, verb, frozenset(nouns)))
            except DataError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return annotations


def save_annotations(path, annotations: Sequence[CaptionAnnotation]) -> None:
    """Write annotations as JSON lines; noun classes are sorted for stable bytes."""
    with open(path, "w", encoding="utf-8") as handle:
        for ann in annotations:
            record = {
                "id": ann.id,
                "verb_class": ann.verb_class,
                "noun_classes": sorted(ann.noun_classes),
            }
            handle.write(json.dumps(record, separators=(", ", ": ")) + "\n")


# ---------------------------------------------------------------------------
# Binary primitives
# ---------------------------------------------------------------------------


def _read_exact(handle: BinaryIO, count: int, path, what: str) -> bytes:
    data = handle.read(count)
    if len(data) != count:
        raise TruncatedFileError(f"{path}: truncated while reading {what}")
    return data


def _read_header(handle: BinaryIO, path, magic: bytes) -> None:
    found = _read_exact(handle, 4, path, "magic bytes")
    if found != magic:
        raise BadMagicError(f"{path}: expected magic {magic!r}, found {found!r}")
    (version,) = struct.unpack("<I", _read_exact(handle, 4, path, "format version"))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: unsupported format version {version} (supported: {FORMAT_VERSION})"
        )


def _write_ids(handle: BinaryIO, ids: Sequence[str]) -> None:
    for item_id in ids:
        raw = item_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise DataError(f"id too long to encode: {item_id[:32]!r}...")
        handle.write(struct.pack("<H", len(raw)))
        handle.write(raw)


def _read_ids(handle: BinaryIO, count: int, path) -> list[str]:
    ids = []
    for _ in range(count):
        (length,) = struct.unpack("<H", _read_exact(handle, 2, path, "id length"))
        ids.append(_read_exact(handle, length, path, "id bytes").decode("utf-8"))
    return ids


def _expect_eof(handle: BinaryIO, path) -> None:
    if handle.read(1):
        raise FileFormatError(f"{path}: trailing bytes after declared payload")


def _check_ids(ids: Sequence[str], label: str) -> list[str]:
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise DataError(f"{label} ids must be unique")
    return ids


# ---------------------------------------------------------------------------
# Feature files (RFFT)
# ---------------------------------------------------------------------------


def save_features(path, ids: Sequence[str], matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataError(f"feature matrix must be 2-d, got ndim={matrix.ndim}")
    ids = _check_ids(ids, "feature")
    if len(ids) != matrix.shape[0]:
        raise DataError(f"id count {len(ids)} does not match {matrix.shape[0]} feature rows")
    with open(path, "wb") as handle:
        handle.write(MAGIC_FEATURES)
        handle.write(struct.pack("<I", FORMAT_VERSION))
        handle.write(struct.pack("<QQ", matrix.shape[0], matrix.shape[1]))
        _write_ids(handle, ids)
        handle.write(matrix.astype("<f4").tobytes())


def load_features(path) -> tuple[list[str], np.ndarray]:
    """Read an RFFT file; values come back as float64 copies of the stored float32."""
    with open(path, "rb") as handle:
        _read_header(handle, path, MAGIC_FEATURES)
        n, d = struct.unpack("<QQ", _read_exact(handle, 16, path, "dimensions"))
        ids = _read_ids(handle, n, path)
        payload = _read_exact(handle, n * d * 4, path, "feature values")
        _expect_eof(handle, path)
    matrix = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float64)
    return ids, matrix


# ---------------------------------------------------------------------------
# Similarity files (RFSM)
# ---------------------------------------------------------------------------


def save_similarity(path, sim: SimilarityMatrix) -> None:
    with open(path, "wb") as handle:
        handle.write(MAGIC_SIMILARITY)
        handle.write(struct.pack("<I", FORMAT_VERSION))
        handle.write(struct.pack("<QQ", sim.rows, sim.cols))
        _write_ids(handle, sim.row_ids)
        _write_ids(handle, sim.col_ids)
        handle.write(sim.values.astype("<f4").tobytes())


def load_similarity(path) -> SimilarityMatrix:
    with open(path, "rb") as handle:
        _read_header(handle, path, MAGIC_SIMILARITY)
        n, m = struct.unpack("<QQ", _read_exact(handle, 16, path, "dimensions"))
        row_ids = _read_ids(handle, n, path)
        col_ids = _read_ids(handle, m, path)
        payload = _read_exact(handle, n * m * 4, path, "similarity values")
        _expect_eof(handle, path)
    values = np.frombuffer(payload, dtype="<f4").reshape(n, m).astype(np.float64)
    return SimilarityMatrix(values, row_ids, col_ids)


# ---------------------------------------------------------------------------
# Model checkpoints (RFMD)
# ---------------------------------------------------------------------------


def save_checkpoint(path, model: TwoTowerModel) -> None:
    with open(path, "wb") as handle:
        handle.write(MAGIC_CHECKPOINT)
        handle.write(struct.pack("<I", FORMAT_VERSION))
        handle.write(struct.pack("<QQQ", model.video_dim, model.text_dim, model.embed_dim))
        for key in ("video_weights", "video_bias", "text_weights", "text_bias"):
            handle.write(getattr(model, key).astype("<f8").tobytes())


def load_checkpoint(path) -> TwoTowerModel:
    with open(path, "rb") as handle:
        _read_header(handle, path, MAGIC_CHECKPOINT)
        d_v, d_t, embed = struct.unpack("<QQQ", _read_exact(handle, 24, path, "dimensions"))

        def read_array(rows: int, cols: int | None, what: str) -> np.ndarray:
            count = rows * (cols if cols is not None else 1)
            payload = _read_exact(handle, count * 8, path, what)
            values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
            return values.reshape(rows, cols) if cols is not None else values

        video_weights = read_array(d_v, embed, "video weights")
        video_bias = read_array(embed, None, "video bias")
        text_weights = read_array(d_t, embed, "text weights")
        text_bias = read_array(embed, None, "text bias")
        _expect_eof(handle, path)
    return TwoTowerModel(video_weights, video_bias, text_weights, text_bias)


# ---------------------------------------------------------------------------
# Datasets and splits
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Aligned annotations and per-modality features with a split assignment."""

    annotations: list[CaptionAnnotation]
    video_features: np.ndarray
    text_features: np.ndarray
    splits: dict[str, str]

    def __post_init__(self):
        self.annotations = list(self.annotations)
        self.video_features = np.asarray(self.video_features, dtype=np.float64)
        self.text_features = np.asarray(self.text_features, dtype=np.float64)
        n = len(self.annotations)
        if n == 0:
            raise DataError("dataset must contain at least one item")
        if self.video_features.ndim != 2 or self.text_features.ndim != 2:
            raise DataError("feature arrays must be 2-d")
        if self.video_features.shape[0] != n or self.text_features.shape[0] != n:
            raise DataError(
                f"feature rows ({self.video_features.shape[0]} video, "
                f"{self.text_features.shape[0]} text) do not match {n} annotations"
            )
        ids = [ann.id for ann in self.annotations]
        if len(set(ids)) != n:
            raise DataError("annotation ids must be unique")
        if set(self.splits) != set(ids):
            raise DataError("split assignment must cover exactly the dataset ids")
        bad = {s for s in self.splits.values() if s not in SPLIT_NAMES}
        if bad:
            raise DataError(f"unknown split names: {sorted(bad)}")
        self._index = {item_id: i for i, item_id in enumerate(ids)}

    @property
    def ids(self) -> list[str]:
        return [ann.id for ann in self.annotations]

    def __len__(self) -> int:
        return len(self.annotations)

    def rows_for(self, ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self._index[item_id] for item_id in ids], dtype=np.intp)
        except KeyError as exc:
            raise DataError(f"unknown dataset id {exc.args[0]!r}") from exc

    def split_ids(self, split: str) -> list[str]:
        if split not in SPLIT_NAMES:
            raise DataError(f"unknown split {split!r} (expected one of {SPLIT_NAMES})")
        return [ann.id for ann in self.annotations if self.splits[ann.id] == split]

    def annotations_for(self, ids: Sequence[str]) -> list[CaptionAnnotation]:
        rows = self.rows_for(ids)
        return [self.annotations[i] for i in rows]


def subset_split(ids: Sequence[str], fraction: float, seed: int) -> list[str]:
    """Seeded shuffle of `ids`, keeping the first ceil(fraction * N).

    A pure function of its arguments: the same seed always selects the same
    subset, returned in selection order.
    """
    ids = list(ids)
    if not ids:
        raise DataError("subset_split requires a non-empty id sequence")
    if not (0.0 < fraction <= 1.0):
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    count = min(len(ids), math.ceil(fraction * len(ids)))
    order = np.random.default_rng(seed).permutation(len(ids))
    return [ids[i] for i in order[:count]]


def save_splits(path, dataset: Dataset) -> None:
    record = {name: dataset.split_ids(name) for name in SPLIT_NAMES}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(record, handle, indent=2)
        handle.write("\n")


def load_splits(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            record = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(record, dict) or set(record) - set(SPLIT_NAMES):
        raise DataError(f"{path}: expected an object with keys {SPLIT_NAMES}")
    splits: dict[str, str] = {}
    for name in SPLIT_NAMES:
        for item_id in record.get(name, []):
            if item_id in splits:
                raise DataError(f"{path}: id {item_id!r} appears in more than one split")
            splits[item_id] = name
    return splits


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Cluster-structured synthetic dataset parameters.

    Items in one cluster share a verb class and noun set, so intra-cluster
    relevance is exactly 1; features are per-modality linear images of the
    cluster prototype plus Gaussian noise.
    """

    n_items: int = 400
    n_verb_classes: int = 10
    n_noun_classes: int = 30
    nouns_per_caption: int = 3
    n_clusters: int = 8
    video_dim: int = 24
    text_dim: int = 20
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        counts = {
            "n_items": self.n_items,
            "n_verb_classes": self.n_verb_classes,
            "n_noun_classes": self.n_noun_classes,
            "nouns_per_caption": self.nouns_per_caption,
            "n_clusters": self.n_clusters,
            "video_dim": self.video_dim,
            "text_dim": self.text_dim,
        }
        for name, value in counts.items():
            if value < 1:
                raise DataError(f"{name} must be >= 1, got {value}")
        if self.noise_sigma < 0:
            raise DataError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.nouns_per_caption > self.n_noun_classes:
            raise DataError(
                f"nouns_per_caption ({self.nouns_per_caption}) exceeds "
                f"n_noun_classes ({self.n_noun_classes})"
            )


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministic cluster-structured dataset with a 70/15/15 split.

    With zero noise, same-cluster feature rows are identical. Features are
    rounded to float32 precision at creation so every later save/load
    round-trips bit-exactly.
    """
    rng = np.random.default_rng(spec.seed)
    latent = min(spec.video_dim, spec.text_dim)

    prototypes = rng.normal(size=(spec.n_clusters, latent))
    video_proj = rng.normal(size=(latent, spec.video_dim)) / np.sqrt(latent)
    text_proj = rng.normal(size=(latent, spec.text_dim)) / np.sqrt(latent)

    cluster_verbs = [c % spec.n_verb_classes for c in range(spec.n_clusters)]
    cluster_nouns = [
        frozenset(int(x) for x in rng.choice(spec.n_noun_classes, spec.nouns_per_caption, replace=False))
        for _ in range(spec.n_clusters)
    ]
    cluster_of = rng.permutation(np.arange(spec.n_items) % spec.n_clusters)

    video = prototypes[cluster_of] @ video_proj
    text = prototypes[cluster_of] @ text_proj
    if spec.noise_sigma > 0:
        video = video + spec.noise_sigma * rng.normal(size=video.shape)
        text = text + spec.noise_sigma * rng.normal(size=text.shape)
    video = video.astype(np.float32).astype(np.float64)
    text = text.astype(np.float32).astype(np.float64)

    width = max(5, len(str(spec.n_items - 1)))
    annotations = [
        CaptionAnnotation(
            f"item{i:0{width}d}", cluster_verbs[cluster_of[i]], cluster_nouns[cluster_of[i]]
        )
        for i in range(spec.n_items)
    ]

    order = rng.permutation(spec.n_items)
    n_train = int(0.7 * spec.n_items)
    n_val = int(0.15 * spec.n_items)
    splits: dict[str, str] = {}
    for rank, row in enumerate(order):
        if rank < n_train:
            split = "train"
        elif rank < n_train + n_val:
            split = "validation"
        else:
            split = "test"
        splits[annotations[row].id] = split

    return Dataset(annotations, video, text, splits)


def cluster_assignment(dataset: Dataset) -> dict[str, int]:
    """Recover cluster labels of a synthetic dataset from annotation equality."""
    signature_to_cluster: dict[tuple, int] = {}
    labels: dict[str, int] = {}
    for ann in dataset.annotations:
        key = (ann.verb_class, tuple(sorted(ann.noun_classes)))
        if key not in signature_to_cluster:
            signature_to_cluster[key] = len(signature_to_cluster)
        labels[ann.id] = signature_to_cluster[key]
    return labels


# ---------------------------------------------------------------------------
# Dataset directory layout
# ---------------------------------------------------------------------------


def save_dataset(dataset: Dataset, out_dir) -> dict[str, str]:
    """Write the four dataset files into `out_dir`; returns name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "annotations": os.path.join(out_dir, ANNOTATIONS_FILENAME),
        "video_features": os.path.join(out_dir, VIDEO_FEATURES_FILENAME),
        "text_features": os.path.join(out_dir, TEXT_FEATURES_FILENAME),
        "splits": os.path.join(out_dir, SPLITS_FILENAME),
    }
    save_annotations(paths["annotations"], dataset.annotations)
    save_features(paths["video_features"], dataset.ids, dataset.video_features)
    save_features(paths["text_features"], dataset.ids, dataset.text_features)
    save_splits(paths["splits"], dataset)
    return paths


def load_dataset(data_dir) -> Dataset:
    """Load a dataset directory written by save_dataset, checking alignment."""
    annotations = load_annotations(os.path.join(data_dir, ANNOTATIONS_FILENAME))
    video_ids, video = load_features(os.path.join(data_dir, VIDEO_FEATURES_FILENAME))
    text_ids, text = load_features(os.path.join(data_dir, TEXT_FEATURES_FILENAME))
    ids = [ann.id for ann in annotations]
    if video_ids != ids:
        raise DataError(f"{data_dir}: video feature ids do not match annotation ids")
    if text_ids != ids:
        raise DataError(f"{data_dir}: text feature ids do not match annotation ids")
    splits = load_splits(os.path.join(data_dir, SPLITS_FILENAME))
    return Dataset(annotations, video, text, splits)
