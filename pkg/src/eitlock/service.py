"""HTTP service exposing the scenario pipelines.

One POST endpoint per pipeline, each taking a ScenarioConfig body and
returning the corresponding response model; schema violations come back as
422 with the full violation list, domain errors as 400 with an error record.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .errors import EitlockError
from .runner import (run_beat, run_error_signal, run_fit, run_lock,
                     run_spectrum, run_validate)
from .scenario import ScenarioConfig
from .schemas import (BeatResponse, ErrorSignalResponse, FitResponse,
                      HealthResponse, LockResponse, SpectrumResponse,
                      ValidateResponse)

app = FastAPI(
    title="eitlock",
    version=__version__,
    description="Ladder-EIT laser-lock simulator: spectra, error signals, "
                "closed-loop dynamics and linewidth metrology.",
)


@app.exception_handler(EitlockError)
async def _domain_error(request: Request, exc: EitlockError):
    return JSONResponse(
        status_code=400,
        content={"error": {"type": type(exc).__name__, "message": str(exc)}})


@app.get("/v1/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/v1/validate", response_model=ValidateResponse)
def validate(config: ScenarioConfig) -> ValidateResponse:
    return run_validate(config)


@app.post("/v1/spectrum", response_model=SpectrumResponse)
def spectrum(config: ScenarioConfig) -> SpectrumResponse:
    return run_spectrum(config)


@app.post("/v1/error-signal", response_model=ErrorSignalResponse)
def error_signal(config: ScenarioConfig) -> ErrorSignalResponse:
    return run_error_signal(config)


@app.post("/v1/lock", response_model=LockResponse)
def lock(config: ScenarioConfig) -> LockResponse:
    return run_lock(config)


@app.post("/v1/beat", response_model=BeatResponse)
def beat(config: ScenarioConfig) -> BeatResponse:
    return run_beat(config)


@app.post("/v1/fit", response_model=FitResponse)
def fit(config: ScenarioConfig) -> FitResponse:
    return run_fit(config)
