"""FastAPI application wrapping the solver, cost model, and benchmark."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .errors import NotPositiveDefiniteError, SelInvError, SingularPivotError
from .service import (
    BenchRequest,
    BenchResponse,
    HealthResponse,
    ModelRequest,
    ModelResponse,
    SolveRequest,
    SolveResponse,
    handle_bench,
    handle_health,
    handle_model,
    handle_solve,
)

app = FastAPI(title="find-selinv", description="Selected inversion on 2D meshes")


def _guard(fn, *args):
    try:
        return fn(*args)
    except (SingularPivotError, NotPositiveDefiniteError) as exc:
        raise HTTPException(status_code=422, detail=f"numerical failure: {exc}") from exc
    except (ValueError, SelInvError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return handle_health()


@app.post("/solve", response_model=SolveResponse)
def solve_endpoint(req: SolveRequest) -> SolveResponse:
    return _guard(handle_solve, req)


@app.post("/model", response_model=ModelResponse)
def model_endpoint(req: ModelRequest) -> ModelResponse:
    return _guard(handle_model, req)


@app.post("/bench", response_model=BenchResponse)
def bench_endpoint(req: BenchRequest) -> BenchResponse:
    return _guard(handle_bench, req)
