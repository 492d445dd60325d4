"""Local HTTP service exposing trained models to the scenario-explorer UI.

Read-only model set loaded from a directory of trained region files.
Responses depend only on the request and the model files; sweep results
are cached by request key so identical what-if queries return identical
bodies. Large sweeps run as background jobs polled via /jobs/{id}.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from pandemic_fhoc import data_io
from pandemic_fhoc.cli import build_problem, eps_grid
from pandemic_fhoc.contact import N_NPI
from pandemic_fhoc.estimation import forecast as run_forecast
from pandemic_fhoc.fhoc import pareto_sweep, random_schedule
from pandemic_fhoc.training import RegionModel

DEFAULT_SYNC_THRESHOLD = 40


class ForecastRequest(BaseModel):
    region: str
    scenario: dict = Field(default_factory=lambda: {"kind": "fixed"})
    days: int = 30


class PrescribeRequest(BaseModel):
    region: str
    weights: list[float] | None = None
    eps: float | None = None
    eps_grid: int = 25
    horizon: int = 30
    random_scenarios: int = 0
    seed: int = 0


class ApiSession:
    """Loaded model set plus the sweep/schedule/job caches."""

    def __init__(self, models_dir: str | Path, sync_threshold: int = DEFAULT_SYNC_THRESHOLD):
        self.models_dir = Path(models_dir)
        self.sync_threshold = sync_threshold
        self.models: dict[str, RegionModel] = {}
        self.load_errors: dict[str, str] = {}
        self.sweep_cache: dict[str, dict] = {}
        self.schedules: dict[str, dict] = {}
        self.jobs: dict[str, dict] = {}
        self.lock = threading.Lock()
        self._load_models()

    def _load_models(self):
        for path in sorted(self.models_dir.glob("*.model.json")):
            try:
                model = RegionModel.from_json(path.read_text())
                self.models[model.region_id] = model
            except Exception as exc:
                self.load_errors[path.name] = f"{type(exc).__name__}: {exc}"

    def get_model(self, region: str) -> RegionModel:
        if region not in self.models:
            raise HTTPException(status_code=404, detail=f"unknown region {region!r}")
        return self.models[region]


def _sweep_key(req: PrescribeRequest) -> str:
    doc = json.dumps(
        {
            "region": req.region,
            "weights": req.weights,
            "eps": req.eps,
            "eps_grid": req.eps_grid,
            "horizon": req.horizon,
            "random_scenarios": req.random_scenarios,
            "seed": req.seed,
        },
        sort_keys=True,
    )
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def _run_sweep(session: ApiSession, req: PrescribeRequest, key: str) -> dict:
    model = session.get_model(req.region)
    weights = np.ones(N_NPI) if req.weights is None else np.asarray(req.weights, float)
    prob = build_problem(model, weights, req.horizon)
    values = np.array([req.eps]) if req.eps is not None else eps_grid(req.eps_grid)
    rng = np.random.default_rng(req.seed)
    scenarios = [("fixed latest", np.tile(model.last_npi, (req.horizon, 1)))]
    for j in range(req.random_scenarios):
        constant = j % 2 == 0
        kind = "constant" if constant else "variable"
        scenarios.append(
            (f"random {kind} {j}", random_schedule(rng, req.horizon, constant=constant))
        )
    sweep = pareto_sweep(prob, values, scenarios)
    points = []
    chosen_id = None
    for idx, p in enumerate(sweep.points):
        pid = f"{key}:{idx}"
        points.append(
            {
                "id": pid,
                "label": p.label,
                "kind": p.kind,
                "eps": p.eps,
                "j0": p.j0 if np.isfinite(p.j0) else None,
                "j1": p.j1 if np.isfinite(p.j1) else None,
                "converged": p.converged,
                "dominated": p.dominated,
            }
        )
        if sweep.chosen is p:
            chosen_id = pid
        if p.schedule is not None:
            with session.lock:
                session.schedules[pid] = {
                    "id": pid,
                    "label": p.label,
                    "schedule": p.schedule.levels.astype(int).tolist(),
                    "schedule_continuous": np.asarray(p.schedule_continuous, float).tolist(),
                }
    return {"key": key, "points": points, "chosen_id": chosen_id, "horizon": req.horizon}


def create_app(
    models_dir: str | Path,
    cors_origin: str = "http://localhost:8080",
    sync_threshold: int = DEFAULT_SYNC_THRESHOLD,
) -> FastAPI:
    session = ApiSession(models_dir, sync_threshold=sync_threshold)
    app = FastAPI(title="pandemic-fhoc service")
    app.state.session = session
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[cors_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/regions")
    def regions():
        if session.load_errors:
            name, err = next(iter(session.load_errors.items()))
            raise HTTPException(status_code=500, detail=f"failed to load {name}: {err}")
        out = []
        for rid, m in sorted(session.models.items()):
            out.append(
                {
                    "region_id": rid,
                    "training_window": list(m.training_window),
                    "population": m.params.population,
                    "flags": {
                        "degenerate_map": bool(m.diagnostics.get("degenerate_map", False)),
                        "low_confidence": bool(m.diagnostics.get("low_confidence", False)),
                    },
                }
            )
        return out

    @app.post("/forecast")
    def forecast_endpoint(req: ForecastRequest):
        model = session.get_model(req.region)
        if req.days < 0:
            raise HTTPException(status_code=422, detail="days must be >= 0")
        try:
            scenario = data_io.parse_scenario(req.scenario)
            horizon = max(req.days, 1)
            sched = data_io.materialize_scenario(scenario, horizon, latest_npi=model.last_npi)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        drive = np.asarray(model.cmap.evaluate(sched.levels.astype(float)), float)
        fc = run_forecast(
            model.filter_cfg,
            model.final_state,
            model.final_cov,
            drive,
            horizon=req.days,
            params=model.params,
            eps=1.0,
        )
        n_pop = model.params.population
        last_day = date.fromisoformat(model.training_window[1])
        dates = [(last_day + timedelta(days=int(k))).isoformat() for k in fc.steps]
        return {
            "region": req.region,
            "dates": dates,
            "mean": [float(v * n_pop) for v in fc.mean],
            "lo": [float(max(v, -1.0) * n_pop) for v in fc.lo],
            "hi": [float(v * n_pop) for v in fc.hi],
        }

    @app.post("/prescribe")
    def prescribe_endpoint(req: PrescribeRequest):
        if req.weights is not None:
            if len(req.weights) != N_NPI:
                raise HTTPException(
                    status_code=422, detail=f"weights must hold {N_NPI} values"
                )
            if any(w < 0 for w in req.weights):
                raise HTTPException(status_code=422, detail="weights must be non-negative")
        if req.eps is not None and not 0.0 <= req.eps <= 1.0:
            raise HTTPException(status_code=422, detail="eps must lie in [0, 1]")
        if req.horizon < 1:
            raise HTTPException(status_code=422, detail="horizon must be >= 1")
        session.get_model(req.region)  # 404 before any work
        key = _sweep_key(req)
        with session.lock:
            if key in session.sweep_cache:
                return session.sweep_cache[key]
        n_solves = (1 if req.eps is not None else req.eps_grid) + req.random_scenarios
        if n_solves <= session.sync_threshold:
            body = _run_sweep(session, req, key)
            with session.lock:
                session.sweep_cache[key] = body
            return body
        job_id = uuid.uuid4().hex[:12]
        with session.lock:
            session.jobs[job_id] = {"status": "pending", "result": None}

        def worker():
            try:
                body = _run_sweep(session, req, key)
                with session.lock:
                    session.sweep_cache[key] = body
                    session.jobs[job_id] = {"status": "done", "result": body}
            except Exception as exc:
                with session.lock:
                    session.jobs[job_id] = {"status": "error", "error": str(exc)}

        threading.Thread(target=worker, daemon=True).start()
        return {"job_id": job_id, "status": "pending"}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        with session.lock:
            if job_id not in session.jobs:
                raise HTTPException(status_code=404, detail=f"unknown job {job_id!r}")
            return session.jobs[job_id]

    @app.get("/schedule/{point_id}")
    def schedule(point_id: str):
        with session.lock:
            if point_id not in session.schedules:
                raise HTTPException(status_code=404, detail=f"unknown schedule {point_id!r}")
            return session.schedules[point_id]

    return app
