"""FastAPI service wrapping the pipeline commands.

Each endpoint is synchronous and deterministic given its request: desk-scale
jobs finish in seconds, so there is no job queue. Expected failures map to
HTTP 400 with a `kind` of ``data`` (invalid or inconsistent content,
including corrupt artifact files) or ``io`` (filesystem-level errors).
"""

from __future__ import annotations

from typing import Callable, TypeVar

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..dataio import SyntheticSpec
from ..errors import DataError
from ..pipeline import TrainSettings, run_ensemble, run_evaluate, run_generate, run_train
from .schemas import (
    EnsembleRequest,
    EnsembleResponse,
    EvaluateRequest,
    EvaluateResponse,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    TrainRequest,
    TrainResponse,
)

T = TypeVar("T")


def _run(worker: Callable[[], T]) -> T:
    try:
        return worker()
    except DataError as exc:
        raise HTTPException(status_code=400, detail={"kind": "data", "message": str(exc)}) from exc
    except OSError as exc:
        raise HTTPException(status_code=400, detail={"kind": "io", "message": str(exc)}) from exc


def create_app() -> FastAPI:
    app = FastAPI(
        title="rankfuse",
        version=__version__,
        description=(
            "Rank-aware cross-modal retrieval service: synthetic data generation, "
            "two-tower training with rank-aware losses, nDCG/mAP evaluation, and "
            "similarity-matrix ensembling."
        ),
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest) -> GenerateResponse:
        def work():
            spec = SyntheticSpec(
                n_items=request.n_items,
                n_verb_classes=request.n_verb_classes,
                n_noun_classes=request.n_noun_classes,
                nouns_per_caption=request.nouns_per_caption,
                n_clusters=request.n_clusters,
                video_dim=request.video_dim,
                text_dim=request.text_dim,
                noise_sigma=request.noise_sigma,
                seed=request.seed,
            )
            return run_generate(spec, request.out_dir)

        return GenerateResponse(**_run(work))

    @app.post("/train", response_model=TrainResponse)
    def train_model(request: TrainRequest) -> TrainResponse:
        def work():
            settings = TrainSettings(
                **request.model_dump(exclude={"data_dir", "out_dir"})
            )
            return run_train(request.data_dir, settings, request.out_dir)

        return TrainResponse(**_run(work))

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate_model(request: EvaluateRequest) -> EvaluateResponse:
        def work():
            return run_evaluate(
                request.checkpoint_path, request.data_dir, request.split, request.out_dir
            )

        return EvaluateResponse(**_run(work))

    @app.post("/ensemble", response_model=EnsembleResponse)
    def ensemble(request: EnsembleRequest) -> EnsembleResponse:
        def work():
            return run_ensemble(request.matrix_paths, request.annotations_path, request.out_dir)

        return EnsembleResponse(**_run(work))

    return app


app = create_app()
