"""HTTP API over the predictor and optimizer.

One FastAPI app per create_app call. /predict is stateless inference;
/optimize enqueues a job on a single background worker (FIFO, bounded
queue) whose progress, per-step CSS/layout, and best result are readable
while and after it runs. Finished traces are persisted in the same
directory format the command line writes, so both outputs are
interchangeable.

Request bodies are parsed manually: malformed or schema-invalid payloads
give 400, unknown vocabulary labels give 422, missing jobs or steps give
404, and a full queue gives 409.
"""

from __future__ import annotations

import json
import queue
import tempfile
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .features import UnknownLabel, default_table
from .layout import (
    LayoutError,
    layout_from_dict,
    layout_to_dict,
    validate_layout,
)
from .model import ModelParams, predict_sequence
from .optimizer import (
    Constraint,
    OptimizerConfig,
    OptimizerError,
    PenaltyConfig,
    optimize,
    penalty_boundary,
    penalty_constraints,
    penalty_overlap,
    write_trace,
)
from .tasks import TaskError, sequence_from_dict

JOB_STATES = ("queued", "running", "done", "failed")


@dataclass
class OptimizeJob:
    """Lifecycle record for one queued optimization."""

    id: str
    state: str = "queued"
    progress: int = 0
    steps_total: int = 0
    error: str = None
    aborted: str = None
    best_step: int = None
    snapshots: list = field(default_factory=list)
    trace_dir: str = None

    def summary_rows(self) -> list:
        return [{
            "index": s.index,
            "objective": s.objective,
            "predicted_ms": s.predicted_ms,
            "overlap": s.overlap,
            "boundary": s.boundary,
            "constraints": s.constraints,
            "feasible": s.feasible,
            "swaps": [list(p) for p in s.swaps],
        } for s in self.snapshots]


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"detail": message}, status_code=status)


def _parse_constraints(blob) -> PenaltyConfig:
    if blob is None:
        return PenaltyConfig()
    if not isinstance(blob, dict):
        raise ValueError("constraints must be an object")
    allowed = {"overlap_constant", "boundary_constant", "constraints"}
    unknown = set(blob) - allowed
    if unknown:
        raise ValueError(f"unknown constraint keys: {sorted(unknown)}")
    items = [Constraint(**{**{"ids": ()}, **c})
             for c in blob.get("constraints", [])]
    return PenaltyConfig(
        overlap_constant=blob.get("overlap_constant", 10000.0),
        boundary_constant=blob.get("boundary_constant", 10000.0),
        constraints=items)


def create_app(model_path=None, params: ModelParams = None,
               trace_root: str = None, max_concurrent_jobs: int = 1,
               max_queued: int = 8, _step_hook=None) -> FastAPI:
    """Build the app with a model loaded up front.

    Exactly one of model_path / params must be provided. trace_root is the
    directory finished job traces are written into (a temp dir by default).
    _step_hook(job_id, step_index) is a test seam called as each step lands.
    """
    if (model_path is None) == (params is None):
        raise ValueError("provide exactly one of model_path or params")
    if params is None:
        params = ModelParams.load(model_path)
    if trace_root is None:
        trace_root = tempfile.mkdtemp(prefix="layoutforge-jobs-")
    if max_concurrent_jobs != 1:
        raise ValueError("this service runs a single optimization worker")

    table = default_table()
    app = FastAPI(title="layoutforge", docs_url=None, redoc_url=None)

    lock = threading.Lock()
    jobs: dict = {}
    pending: "queue.Queue" = queue.Queue()
    counter = {"n": 0}
    worker_started = threading.Event()

    def worker():
        while True:
            job_id, payload = pending.get()
            layout, sequence, penalties, opt_config = payload
            with lock:
                job = jobs[job_id]
                job.state = "running"

            def record(snap, job_id=job_id):
                with lock:
                    j = jobs[job_id]
                    j.snapshots.append(snap)
                    j.progress = snap.index
                if _step_hook:
                    _step_hook(job_id, snap.index)

            try:
                trace = optimize(layout, sequence, params, opt_config,
                                 penalties, table, on_step=record)
                trace_dir = f"{trace_root}/{job_id}"
                write_trace(trace, trace_dir)
                with lock:
                    job.state = "done"
                    job.best_step = trace.best_step
                    job.aborted = trace.aborted
                    job.trace_dir = trace_dir
            except Exception as exc:  # noqa: BLE001 - job boundary
                with lock:
                    job.state = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"

    def ensure_worker():
        if not worker_started.is_set():
            with lock:
                if not worker_started.is_set():
                    threading.Thread(target=worker, daemon=True).start()
                    worker_started.set()

    async def read_json(request: Request):
        try:
            body = await request.body()
            data = json.loads(body)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ValueError(f"malformed JSON body: {exc}") from None
        if not isinstance(data, dict):
            raise ValueError("request body must be a JSON object")
        return data

    def parse_pair(data):
        if "layout" not in data or "sequence" not in data:
            raise ValueError("body needs 'layout' and 'sequence'")
        layout = layout_from_dict(data["layout"])
        sequence = sequence_from_dict(data["sequence"])
        return layout, sequence

    @app.post("/predict")
    async def predict(request: Request):
        try:
            data = await read_json(request)
            layout, sequence = parse_pair(data)
        except (ValueError, LayoutError, TaskError) as exc:
            return _error(400, str(exc))
        try:
            result = predict_sequence(layout, sequence, params, table=table)
        except UnknownLabel as exc:
            return _error(422, f"unknown label: {exc}")
        report = validate_layout(layout)
        return {
            "per_task": [float(v) for v in result.task_ms],
            "total": result.total_ms,
            "feasible": report.is_empty(),
            "penalty_values": {
                "overlap": penalty_overlap(layout),
                "boundary": penalty_boundary(layout),
            },
        }

    @app.post("/optimize")
    async def submit(request: Request):
        try:
            data = await read_json(request)
            layout, sequence = parse_pair(data)
            penalties = _parse_constraints(data.get("constraints"))
            steps = data.get("steps", 500)
            if not isinstance(steps, int) or steps < 1:
                raise ValueError("steps must be a positive integer")
            if not validate_layout(layout).is_empty():
                raise ValueError("initial layout is infeasible")
            # fail unknown constraint targets at submit time
            penalty_constraints(layout, penalties)
        except (ValueError, LayoutError, TaskError, OptimizerError) as exc:
            return _error(400, str(exc))
        try:
            # label problems surface now, not inside the worker
            predict_sequence(layout, sequence, params, table=table)
        except UnknownLabel as exc:
            return _error(422, f"unknown label: {exc}")

        with lock:
            n_queued = sum(j.state == "queued" for j in jobs.values())
            if n_queued >= max_queued:
                return _error(409, f"job queue full ({max_queued} pending)")
            counter["n"] += 1
            job_id = f"job-{counter['n']:04d}"
            jobs[job_id] = OptimizeJob(id=job_id, steps_total=steps)
        pending.put((job_id, (layout, sequence, penalties,
                              OptimizerConfig(steps=steps))))
        ensure_worker()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    async def job_status(job_id: str):
        with lock:
            job = jobs.get(job_id)
            if job is None:
                return _error(404, f"no such job: {job_id}")
            return {
                "id": job.id,
                "state": job.state,
                "progress": job.progress,
                "steps_total": job.steps_total,
                "best_step": job.best_step,
                "aborted": job.aborted,
                "error": job.error,
                "steps": job.summary_rows(),
            }

    def _find_step(job_id: str, index: int):
        job = jobs.get(job_id)
        if job is None:
            return None, _error(404, f"no such job: {job_id}")
        for snap in job.snapshots:
            if snap.index == index:
                return snap, None
        return None, _error(404, f"job {job_id} has no step {index}")

    @app.get("/jobs/{job_id}/steps/{index}/css")
    async def step_css(job_id: str, index: int):
        with lock:
            snap, err = _find_step(job_id, index)
            if err:
                return err
            return PlainTextResponse(snap.css, media_type="text/css")

    @app.get("/jobs/{job_id}/steps/{index}/layout")
    async def step_layout(job_id: str, index: int):
        with lock:
            snap, err = _find_step(job_id, index)
            if err:
                return err
            return layout_to_dict(snap.layout)

    @app.get("/jobs/{job_id}/best")
    async def best_layout(job_id: str):
        with lock:
            job = jobs.get(job_id)
            if job is None:
                return _error(404, f"no such job: {job_id}")
            if job.state != "done":
                return _error(404, f"job {job_id} is {job.state}, not done")
            if job.best_step is None or job.best_step < 0:
                return _error(404, f"job {job_id} found no feasible step")
            snap = job.snapshots[job.best_step]
            return layout_to_dict(snap.layout)

    return app
