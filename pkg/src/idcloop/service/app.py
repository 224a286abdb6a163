"""HTTP surface for the review service.

Every error leaves as a uniform JSON envelope ``{"code", "message"}`` with
the status carried by the exception type, so clients switch on one shape.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from idcloop.errors import (
    DecodeError,
    IdcloopError,
    ServiceError,
    SizeError,
    ValidationError,
)
from idcloop.service.core import HitlService
from idcloop.service.protocol import run_validation_protocol


class FeedbackBody(BaseModel):
    verdict: str
    corrected_label: Optional[int] = None


class ExperimentBody(BaseModel):
    groups: int = 4
    n_fp: int = 20
    n_fn: int = 20
    seed: int = 0


def _envelope(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(service: HitlService, static_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="idcloop review service", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return _envelope(exc.http_status, exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def request_error_handler(request: Request, exc: RequestValidationError):
        return _envelope(422, "validation", str(exc.errors()[:1]))

    @app.exception_handler(IdcloopError)
    async def domain_error_handler(request: Request, exc: IdcloopError):
        # Bad uploads are client mistakes; anything else is on us.
        if isinstance(exc, (DecodeError, SizeError)):
            return _envelope(422, "validation", str(exc))
        return _envelope(500, "internal", str(exc))

    @app.post("/api/predict")
    async def predict_endpoint(file: UploadFile):
        record = service.predict_upload(await file.read())
        return record.to_dict()

    @app.post("/api/reviews/{review_id}/feedback")
    async def feedback_endpoint(review_id: str, body: FeedbackBody):
        record = service.record_feedback(
            review_id, body.verdict, body.corrected_label
        )
        return record.to_dict()

    @app.get("/api/reviews")
    async def reviews_endpoint(
        status: Optional[str] = None, offset: int = 0, limit: int = 50
    ):
        return service.list_reviews(status=status, offset=offset, limit=limit)

    @app.post("/api/retrain")
    async def retrain_endpoint():
        return service.trigger_retrain().to_dict()

    @app.get("/api/retrain/{job_id}")
    async def job_endpoint(job_id: str):
        return service.get_job(job_id).to_dict()

    @app.get("/api/model")
    async def model_endpoint():
        return service.model_info()

    @app.post("/api/experiments/validation")
    async def experiment_endpoint(body: ExperimentBody):
        if service.split is None:
            raise ValidationError("service has no training corpus configured")
        version = service.model_info()["version"]
        results = run_validation_protocol(
            service.registry.load(version),
            service.split,
            groups=body.groups,
            n_fp=body.n_fp,
            n_fn=body.n_fn,
            seed=body.seed,
            retrain=service.settings.retrain,
        )
        return {
            "baseline_version": version,
            "groups": [r.to_dict() for r in results],
        }

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
