"""FastAPI application exposing the estimation operations."""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import PricefieldError, exit_code_for
from . import handlers, schemas


def create_app() -> FastAPI:
    from .. import __version__

    app = FastAPI(title="pricefield", version=__version__)

    @app.exception_handler(PricefieldError)
    async def _domain_error(request: Request, exc: PricefieldError):
        code = exit_code_for(exc)
        status = {2: 400, 3: 422, 4: 500}.get(code, 500)
        body = schemas.ErrorBody(
            error=type(exc).__name__, message=str(exc), exit_code=code
        )
        return JSONResponse(status_code=status, content=body.model_dump())

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/fit", response_model=schemas.FitResponse)
    def fit(req: schemas.FitRequest):
        return handlers.fit(req)

    @app.post("/predict", response_model=schemas.PredictResponse)
    def predict(req: schemas.PredictRequest):
        return handlers.predict(req)

    @app.post("/partition", response_model=schemas.PartitionResponse)
    def partition(req: schemas.PartitionRequest):
        return handlers.partition(req)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        return handlers.evaluate(req)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        return handlers.synth(req)

    @app.post("/mesh", response_model=schemas.MeshResponse)
    def mesh(req: schemas.MeshRequest):
        return handlers.mesh(req)

    return app


app = create_app()
