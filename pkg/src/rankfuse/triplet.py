"""Relevance-aware triplet loss and feature-space augmentation.

Negatives are restricted to items whose relevance to the anchor falls
below a threshold; items at or above it (other than the groundtruth)
become extra positives. Augmentation replaces an item's features by a
convex combination with a semantically relevant partner drawn from a
restricted candidate pool, so a training subset never leaks partners from
outside itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .matrices import SimilarityMatrix, check_aligned
from .relevance import RelevanceMatrix

MINING_MODES = ("hardest", "random")


@dataclass
class TripletConfig:
    """Margin, relevance threshold, and mining behavior of the triplet loss."""

    margin: float = 0.2
    relevance_threshold: float = 0.15
    mining: str = "hardest"
    use_relevant_positives: bool = True

    def __post_init__(self):
        if not (self.margin > 0):
            raise DataError(f"margin must be positive, got {self.margin}")
        if not (0.0 <= self.relevance_threshold <= 1.0):
            raise DataError(
                f"relevance_threshold must lie in [0, 1], got {self.relevance_threshold}"
            )
        if self.mining not in MINING_MODES:
            raise DataError(f"mining must be one of {MINING_MODES}, got {self.mining!r}")


@dataclass
class AugmentConfig:
    """Feature-mixing augmentation restricted to a candidate pool.

    The mixing coefficient is drawn uniformly from [mix_low, mix_high] with
    mix_low >= 0.5, so the anchor always dominates the combination and its
    annotation remains the closest groundtruth.
    """

    candidate_pool: frozenset[str]
    probability: float = 1.0
    partner_threshold: float = 0.15
    mix_low: float = 0.5
    mix_high: float = 1.0

    def __post_init__(self):
        self.candidate_pool = frozenset(self.candidate_pool)
        if not self.candidate_pool:
            raise DataError("candidate_pool must be non-empty")
        if not (0.0 <= self.probability <= 1.0):
            raise DataError(f"probability must lie in [0, 1], got {self.probability}")
        if not (0.0 <= self.partner_threshold <= 1.0):
            raise DataError(f"partner_threshold must lie in [0, 1], got {self.partner_threshold}")
        if not (0.5 <= self.mix_low <= self.mix_high <= 1.0):
            raise DataError(
                f"mixing range must satisfy 0.5 <= mix_low <= mix_high <= 1, "
                f"got [{self.mix_low}, {self.mix_high}]"
            )


@dataclass
class FeatureBatch:
    """Paired per-item video and text feature rows with their ids."""

    ids: list[str]
    video: np.ndarray
    text: np.ndarray

    def __post_init__(self):
        self.ids = list(self.ids)
        self.video = np.asarray(self.video, dtype=np.float64)
        self.text = np.asarray(self.text, dtype=np.float64)
        if self.video.ndim != 2 or self.text.ndim != 2:
            raise DataError("feature arrays must be 2-d")
        if len(self.ids) != self.video.shape[0] or len(self.ids) != self.text.shape[0]:
            raise DataError(
                f"id count {len(self.ids)} does not match feature rows "
                f"({self.video.shape[0]} video, {self.text.shape[0]} text)"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DataError("batch ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)


def partition_by_relevance(anchor_row, threshold: float, anchor_index: int) -> tuple[set[int], set[int]]:
    """Split a relevance row into relevant positives and irrelevant negatives.

    The anchor (groundtruth) index belongs to neither set; together with it
    the two sets cover all indices.
    """
    row = np.asarray(anchor_row, dtype=np.float64)
    if row.ndim != 1 or row.size == 0:
        raise DataError("anchor_row must be a non-empty 1-d sequence")
    if (row < 0).any() or (row > 1).any():
        raise DataError("relevance values must lie in [0, 1]")
    if not (0 <= anchor_index < row.size):
        raise DataError(f"anchor_index {anchor_index} out of range for length {row.size}")
    positives = {j for j in range(row.size) if j != anchor_index and row[j] >= threshold}
    negatives = {j for j in range(row.size) if j != anchor_index and row[j] < threshold}
    return positives, negatives


def mine_negative(sim_row, negatives: set[int], mode: str, rng: np.random.Generator) -> int | None:
    """Pick a negative index from the irrelevant set, or None when it is empty.

    Hardest mode takes the highest-similarity negative (ties resolve to the
    smallest index); random mode draws uniformly via `rng`.
    """
    if mode not in MINING_MODES:
        raise DataError(f"mining must be one of {MINING_MODES}, got {mode!r}")
    if not negatives:
        return None
    row = np.asarray(sim_row, dtype=np.float64)
    if not np.isfinite(row).all():
        raise DataError("similarity row must be finite")
    candidates = sorted(negatives)
    if mode == "hardest":
        values = row[candidates]
        return candidates[int(np.argmax(values))]
    return candidates[int(rng.integers(len(candidates)))]


def triplet_ranp_loss(
    sim,
    rel,
    cfg: TripletConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, np.ndarray]:
    """Bidirectional margin loss over a square in-batch similarity matrix.

    Item i's groundtruth is column (row) i. Per anchor and direction, the
    base hinge compares the groundtruth similarity to a mined irrelevant
    negative; when enabled and available, a second hinge does the same for
    a uniformly sampled relevant positive. The loss is the mean over all
    hinge terms that exist; anchors with no irrelevant negative contribute
    none. Gradients are exact, with subgradient 0 on inactive or boundary
    hinges.
    """
    cfg = cfg or TripletConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(sim, SimilarityMatrix) and isinstance(rel, RelevanceMatrix):
        check_aligned(sim, rel)
    sim_values = sim.values if isinstance(sim, SimilarityMatrix) else np.asarray(sim, dtype=np.float64)
    rel_values = rel.values if isinstance(rel, RelevanceMatrix) else np.asarray(rel, dtype=np.float64)
    if sim_values.ndim != 2 or sim_values.shape[0] != sim_values.shape[1]:
        raise DataError(f"in-batch similarity must be square, got shape {sim_values.shape}")
    if sim_values.shape != rel_values.shape:
        raise DataError(
            f"similarity shape {sim_values.shape} does not match relevance shape {rel_values.shape}"
        )

    n = sim_values.shape[0]
    grad = np.zeros_like(sim_values)
    total = 0.0
    n_terms = 0

    # Fixed consumption order for the generator: video anchors first, then
    # caption anchors, each in ascending index order.
    for transposed in (False, True):
        s = sim_values.T if transposed else sim_values
        g = grad.T if transposed else grad
        r = rel_values.T if transposed else rel_values
        for i in range(n):
            positives, negatives = partition_by_relevance(r[i], cfg.relevance_threshold, i)
            neg = mine_negative(s[i], negatives, cfg.mining, rng)
            if neg is None:
                continue
            activation = cfg.margin - s[i, i] + s[i, neg]
            n_terms += 1
            if activation > 0:
                total += activation
                g[i, i] -= 1.0
                g[i, neg] += 1.0
            if cfg.use_relevant_positives and positives:
                pos = sorted(positives)[int(rng.integers(len(positives)))]
                activation = cfg.margin - s[i, pos] + s[i, neg]
                n_terms += 1
                if activation > 0:
                    total += activation
                    g[i, pos] -= 1.0
                    g[i, neg] += 1.0

    if n_terms == 0:
        return 0.0, grad
    return total / n_terms, grad / n_terms


def augment_features(anchor, partner, mix: float) -> np.ndarray:
    """Convex combination mix * anchor + (1 - mix) * partner."""
    anchor = np.asarray(anchor, dtype=np.float64)
    partner = np.asarray(partner, dtype=np.float64)
    if anchor.shape != partner.shape:
        raise DataError(
            f"anchor and partner must have equal shape, got {anchor.shape} and {partner.shape}"
        )
    if not (0.0 <= mix <= 1.0):
        raise DataError(f"mixing coefficient must lie in [0, 1], got {mix}")
    return mix * anchor + (1.0 - mix) * partner


def sample_augmented_batch(
    batch: FeatureBatch,
    pool: FeatureBatch,
    rel: RelevanceMatrix,
    cfg: AugmentConfig,
    rng: np.random.Generator,
) -> FeatureBatch:
    """Mix each batch item's features with a relevant partner from the pool.

    `rel` must be the square relevance matrix over the pool ids. For each
    item, with probability `cfg.probability`, the video side and the text
    side each independently draw a partner uniformly from the pool members
    (restricted to `cfg.candidate_pool`) whose relevance to the anchor
    reaches `cfg.partner_threshold`, and mix with an independent
    coefficient. Items without an eligible partner pass through unchanged.
    The generator is consumed in ascending batch order, video side before
    text side, so results are reproducible.
    """
    if pool.ids != rel.row_ids or pool.ids != rel.col_ids:
        raise DataError("pool ids must match the relevance matrix ids on both axes")
    if not cfg.candidate_pool <= set(pool.ids):
        missing = sorted(cfg.candidate_pool - set(pool.ids))[0]
        raise DataError(f"candidate pool id {missing!r} is not in the pool")
    pool_index = {item_id: i for i, item_id in enumerate(pool.ids)}
    for item_id in batch.ids:
        if item_id not in cfg.candidate_pool:
            raise DataError(f"batch id {item_id!r} is outside the candidate pool")

    eligible_ids = [i for i, item_id in enumerate(pool.ids) if item_id in cfg.candidate_pool]
    video = batch.video.copy()
    text = batch.text.copy()
    for b, item_id in enumerate(batch.ids):
        anchor = pool_index[item_id]
        partners = [
            j
            for j in eligible_ids
            if j != anchor and rel.values[anchor, j] >= cfg.partner_threshold
        ]
        for features, pool_features in ((video, pool.video), (text, pool.text)):
            if rng.random() >= cfg.probability:
                continue
            if not partners:
                continue
            partner = partners[int(rng.integers(len(partners)))]
            mix = float(rng.uniform(cfg.mix_low, cfg.mix_high))
            features[b] = augment_features(features[b], pool_features[partner], mix)
    return FeatureBatch(list(batch.ids), video, text)
