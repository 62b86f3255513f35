"""HTTP service exposing the pattern synthesis runs.

Stateless: every request carries a full run configuration and the response
carries the full result record.  File output is the client's concern (see the
CLI), which keeps the service safe for concurrent multi-client use.
"""

from __future__ import annotations

from typing import Any, Optional, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict

from . import __version__
from .errors import PwmOptError, SeedError
from .runner import ConfigError, RunConfig, run_analyze, run_optimize, run_svpwm, \
    run_sweep, run_validate

app = FastAPI(title="pwmopt", version=__version__,
              description="Minimal-THD switching pattern synthesis for "
                          "three-phase PWM inverters")


class RunConfigModel(BaseModel):
    """Wire form of RunConfig; see the README for field semantics."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = 1
    v0: float = 300.0
    f: float = 60.0
    r: Optional[float] = None
    l: Optional[float] = None
    i_m: Optional[float] = None
    alpha: Optional[float] = None
    vm_over_v0: Optional[float] = None
    p: Union[int, list[int]] = 7
    she_orders: list[int] = []
    tau: float = 1e-4
    kkt_tol: float = 1e-8
    eq_tol: float = 1e-8
    step_tol: float = 1e-12
    max_iter: int = 500
    multistart: int = 0
    seed: int = 0
    n_report: int = 49
    waveform_samples: int = 4096
    inject_fault: str = ""

    def to_config(self) -> RunConfig:
        data = self.model_dump()
        data["she_orders"] = tuple(data["she_orders"])
        data["p"] = tuple(data["p"]) if isinstance(data["p"], list) else (data["p"],)
        try:
            return RunConfig(**data)
        except PwmOptError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc


class AnalyzeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: RunConfigModel
    instants: list[float]


class RunResponse(BaseModel):
    status: str
    record: Optional[dict] = None
    error: Optional[str] = None
    timings: Optional[dict] = None


class SweepResponse(BaseModel):
    status: str
    rows: list[dict] = []
    table: list[dict] = []
    error: Optional[str] = None
    timings: Optional[dict] = None


class ValidateResponse(BaseModel):
    status: str
    checks: list[dict] = []
    failed: list[str] = []
    timings: Optional[dict] = None


def _guarded(fn, *args) -> dict:
    try:
        return fn(*args)
    except SeedError as exc:
        return {"status": "seed_infeasible", "error": str(exc), "record": None}
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except PwmOptError as exc:
        raise HTTPException(status_code=400, detail=f"{type(exc).__name__}: {exc}") from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/optimize", response_model=RunResponse)
def optimize_endpoint(config: RunConfigModel):
    return _guarded(run_optimize, config.to_config())


@app.post("/sweep", response_model=SweepResponse)
def sweep_endpoint(config: RunConfigModel):
    return _guarded(run_sweep, config.to_config())


@app.post("/svpwm", response_model=RunResponse)
def svpwm_endpoint(config: RunConfigModel):
    return _guarded(run_svpwm, config.to_config())


@app.post("/analyze", response_model=RunResponse)
def analyze_endpoint(req: AnalyzeRequest):
    return _guarded(run_analyze, req.config.to_config(), req.instants)


@app.post("/validate", response_model=ValidateResponse)
def validate_endpoint(config: RunConfigModel):
    return _guarded(run_validate, config.to_config())
