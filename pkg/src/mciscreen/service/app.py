"""FastAPI application exposing the screening pipeline over HTTP."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from . import ops, schemas


def _run(handler, request):
    try:
        return handler(request)
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=str(e)) from e
    except ops.DOMAIN_ERRORS as e:
        raise HTTPException(status_code=400, detail=str(e)) from e


def create_app() -> FastAPI:
    app = FastAPI(title="mciscreen", version=__version__,
                  description="Speech-based MCI screening: feature validation, "
                              "splitting, training, layer analysis and prediction.")

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
        return _run(ops.run_synth, req)

    @app.post("/split", response_model=schemas.SplitResponse)
    def split(req: schemas.SplitRequest) -> schemas.SplitResponse:
        return _run(ops.run_split, req)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
        return _run(ops.run_train, req)

    @app.post("/layer-scan", response_model=schemas.LayerScanResponse)
    def layer_scan(req: schemas.LayerScanRequest) -> schemas.LayerScanResponse:
        return _run(ops.run_layer_scan, req)

    @app.post("/cv", response_model=schemas.CvResponse)
    def cv(req: schemas.CvRequest) -> schemas.CvResponse:
        return _run(ops.run_cv, req)

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest) -> schemas.PredictResponse:
        return _run(ops.run_predict, req)

    @app.post("/perturb", response_model=schemas.PerturbResponse)
    def perturb(req: schemas.PerturbRequest) -> schemas.PerturbResponse:
        return _run(ops.run_perturb, req)

    @app.post("/trace-export", response_model=schemas.TraceExportResponse)
    def trace_export(req: schemas.TraceExportRequest) -> schemas.TraceExportResponse:
        return _run(ops.run_trace_export, req)

    @app.post("/validate-features", response_model=schemas.ValidateFeaturesResponse)
    def validate_features(req: schemas.ValidateFeaturesRequest) -> schemas.ValidateFeaturesResponse:
        return _run(ops.run_validate_features, req)

    return app


app = create_app()
