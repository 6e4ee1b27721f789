"""Request and response models of the HTTP service.

Requests carry filesystem paths plus configuration; the service does the
work on its local filesystem and responds with output paths, checksums,
and metric values. Defaults mirror the command-line defaults.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    out_dir: str
    n_items: int = 400
    n_verb_classes: int = 10
    n_noun_classes: int = 30
    nouns_per_caption: int = 3
    n_clusters: int = 8
    video_dim: int = 24
    text_dim: int = 20
    noise_sigma: float = 0.05
    seed: int = 0


class GenerateResponse(BaseModel):
    out_dir: str
    files: dict[str, str]
    checksums: dict[str, str]
    manifest_path: str
    n_items: int


class TrainRequest(BaseModel):
    data_dir: str
    out_dir: str
    loss: Literal["augmented-triplet", "neural-ndcg"]
    epochs: int = 50
    learning_rate: float = 1e-4
    batch_size: int = 64
    embed_dim: int = 32
    seed: int = 0
    subset_fraction: float = 0.25
    margin: float = 0.2
    relevance_threshold: float = 0.15
    mining: Literal["hardest", "random"] = "hardest"
    use_relevant_positives: bool = True
    augment_probability: float = 1.0
    partner_threshold: float = 0.15
    mix_low: float = 0.5
    mix_high: float = 1.0
    temperature: float = 1.0
    sinkhorn_iters: int = 30
    sinkhorn_eps: float = 1e-6
    ndcg_cutoff: Optional[int] = None
    gain_base: float = 2.0


class TrainResponse(BaseModel):
    checkpoint_path: str
    history_path: str
    manifest_path: str
    n_training_ids: int
    final_epoch: int
    final_train_loss: float
    final_val_ndcg_avg: float
    final_val_map_avg: float


class MetricsPayload(BaseModel):
    ndcg_v2t: float
    ndcg_t2v: float
    ndcg_avg: float
    map_v2t: float
    map_t2v: float
    map_avg: float
    n_queries_v2t: int
    n_queries_t2v: int


class EvaluateRequest(BaseModel):
    checkpoint_path: str
    data_dir: str
    out_dir: str
    split: Literal["train", "validation", "test"] = "validation"


class EvaluateResponse(BaseModel):
    similarity_path: str
    report_text_path: str
    report_json_path: str
    manifest_path: str
    metrics: MetricsPayload


class EnsembleRequest(BaseModel):
    matrix_paths: list[str] = Field(min_length=1)
    annotations_path: str
    out_dir: str


class EnsembleResponse(BaseModel):
    matrix_path: str
    report_text_path: str
    report_json_path: str
    manifest_path: str
    metrics: MetricsPayload
