"""Pydantic request/response models for the HTTP service.

Requests carry the same :class:`~coagfrag.config.SimConfig` document the
CLI reads from disk; responses carry the rendered output files as strings
plus the machine-readable summary, so any client can persist byte-exact
artifacts locally.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..config import SimConfig


class HealthResponse(BaseModel):
    status: str
    version: str


class ConfigRequest(BaseModel):
    config: SimConfig
    allow_unvalidated: bool = False


class SimulateRequest(ConfigRequest):
    pass


class ValidateKernelsRequest(ConfigRequest):
    samples: int = Field(default=24, ge=4, le=256)


class ConvergeRequest(ConfigRequest):
    doublings: int = Field(default=3, ge=1, le=8)


class PerturbRequest(ConfigRequest):
    delta: float = Field(default=1e-3, ge=0.0)


class OracleRequest(BaseModel):
    cases: int = Field(default=1000, ge=1, le=100_000)
    seed: int = 20240817


class RunResponse(BaseModel):
    """Uniform envelope for every command."""

    status: str
    exit_code: int
    summary: dict
    files: dict[str, str]


class HypothesisRow(BaseModel):
    name: str
    passed: bool
    detail: str
    witness: dict | None = None


class ValidateKernelsResponse(RunResponse):
    passed: bool
    hypotheses: list[HypothesisRow]
