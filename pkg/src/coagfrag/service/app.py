"""FastAPI application wrapping the solver.

The service is stateless: every endpoint takes a full config document,
runs the requested command, and returns the rendered files inline.  A
range-refused config (outside the validated kernel parameter ranges) is a
well-formed request and comes back as a 200 with
``status='validation_failure'``; malformed documents are rejected by the
schema with 422.  Results are deterministic — identical payloads produce
identical file bytes.
"""

from __future__ import annotations

from fastapi import FastAPI

from .. import __version__
from ..config import range_violations
from ..runs import (
    refusal_artifacts,
    run_converge,
    run_oracle,
    run_perturb,
    run_simulate,
    run_validate_kernels,
)
from .models import (
    ConvergeRequest,
    HealthResponse,
    HypothesisRow,
    OracleRequest,
    PerturbRequest,
    RunResponse,
    SimulateRequest,
    ValidateKernelsRequest,
    ValidateKernelsResponse,
)


def _gate(req) -> list[str]:
    """Range validation behind the refuse-by-default policy."""
    if req.allow_unvalidated:
        return []
    return range_violations(req.config)


def create_app() -> FastAPI:
    app = FastAPI(
        title="coagfrag",
        version=__version__,
        description=(
            "Deterministic solver for the coagulation equation with "
            "collision-induced multiple fragmentation."
        ),
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/simulate", response_model=RunResponse)
    def simulate(req: SimulateRequest) -> RunResponse:
        problems = _gate(req)
        art = refusal_artifacts("simulate", problems, req.config) if problems else run_simulate(req.config)
        return RunResponse(
            status=art.status, exit_code=art.exit_code, summary=art.summary, files=art.files
        )

    @app.post("/validate-kernels", response_model=ValidateKernelsResponse)
    def validate_kernels(req: ValidateKernelsRequest) -> ValidateKernelsResponse:
        problems = _gate(req)
        if problems:
            art = refusal_artifacts("validate-kernels", problems, req.config)
            rows: list[HypothesisRow] = []
        else:
            art = run_validate_kernels(req.config, samples=req.samples)
            rows = [HypothesisRow(**row) for row in art.summary.get("hypotheses", [])]
        return ValidateKernelsResponse(
            status=art.status,
            exit_code=art.exit_code,
            summary=art.summary,
            files=art.files,
            passed=bool(art.summary.get("all_passed", False)),
            hypotheses=rows,
        )

    @app.post("/converge", response_model=RunResponse)
    def converge(req: ConvergeRequest) -> RunResponse:
        problems = _gate(req)
        art = refusal_artifacts("converge", problems, req.config) if problems else run_converge(req.config, req.doublings)
        return RunResponse(
            status=art.status, exit_code=art.exit_code, summary=art.summary, files=art.files
        )

    @app.post("/perturb", response_model=RunResponse)
    def perturb(req: PerturbRequest) -> RunResponse:
        problems = _gate(req)
        art = refusal_artifacts("perturb", problems, req.config) if problems else run_perturb(req.config, req.delta)
        return RunResponse(
            status=art.status, exit_code=art.exit_code, summary=art.summary, files=art.files
        )

    @app.post("/oracle", response_model=RunResponse)
    def oracle(req: OracleRequest) -> RunResponse:
        art = run_oracle(cases=req.cases, seed=req.seed)
        return RunResponse(
            status=art.status, exit_code=art.exit_code, summary=art.summary, files=art.files
        )

    return app


app = create_app()
