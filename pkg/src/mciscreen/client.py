"""Typed client for the screening service.

With a base URL the client talks HTTP; without one it executes the same
operation handlers in-process, so the CLI works on a single machine with no
server running. Both paths raise :class:`ServiceError` with the HTTP-style
status code and detail message.
"""

from __future__ import annotations

import httpx

from . import __version__
from .service import ops, schemas


class ServiceError(RuntimeError):
    def __init__(self, status_code: int, detail: str):
        super().__init__(f"[{status_code}] {detail}")
        self.status_code = status_code
        self.detail = detail


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float = 3600.0):
        self._http = httpx.Client(base_url=base_url, timeout=timeout) if base_url else None

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _call(self, path: str, handler, request, response_model):
        if self._http is None:
            try:
                return handler(request)
            except FileNotFoundError as e:
                raise ServiceError(404, str(e)) from e
            except ops.DOMAIN_ERRORS as e:
                raise ServiceError(400, str(e)) from e
        resp = self._http.post(path, json=request.model_dump())
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ServiceError(resp.status_code, str(detail))
        return response_model.model_validate(resp.json())

    def health(self) -> schemas.HealthResponse:
        if self._http is None:
            return schemas.HealthResponse(status="ok", version=__version__)
        resp = self._http.get("/health")
        if resp.status_code >= 400:
            raise ServiceError(resp.status_code, resp.text)
        return schemas.HealthResponse.model_validate(resp.json())

    def synth(self, req: schemas.SynthRequest) -> schemas.SynthResponse:
        return self._call("/synth", ops.run_synth, req, schemas.SynthResponse)

    def split(self, req: schemas.SplitRequest) -> schemas.SplitResponse:
        return self._call("/split", ops.run_split, req, schemas.SplitResponse)

    def train(self, req: schemas.TrainRequest) -> schemas.TrainResponse:
        return self._call("/train", ops.run_train, req, schemas.TrainResponse)

    def layer_scan(self, req: schemas.LayerScanRequest) -> schemas.LayerScanResponse:
        return self._call("/layer-scan", ops.run_layer_scan, req, schemas.LayerScanResponse)

    def cv(self, req: schemas.CvRequest) -> schemas.CvResponse:
        return self._call("/cv", ops.run_cv, req, schemas.CvResponse)

    def predict(self, req: schemas.PredictRequest) -> schemas.PredictResponse:
        return self._call("/predict", ops.run_predict, req, schemas.PredictResponse)

    def perturb(self, req: schemas.PerturbRequest) -> schemas.PerturbResponse:
        return self._call("/perturb", ops.run_perturb, req, schemas.PerturbResponse)

    def trace_export(self, req: schemas.TraceExportRequest) -> schemas.TraceExportResponse:
        return self._call("/trace-export", ops.run_trace_export, req,
                          schemas.TraceExportResponse)

    def validate_features(self, req: schemas.ValidateFeaturesRequest) -> schemas.ValidateFeaturesResponse:
        return self._call("/validate-features", ops.run_validate_features, req,
                          schemas.ValidateFeaturesResponse)
