"""REST gateway: ingestion, profiles, results, feedback, registry, training.

All routes live under /api/v1. Every non-2xx body carries a machine-readable
code and a correlation id. Multi-view uploads are collated per unit_id inside
a configurable window before the inspection run starts.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from starlette.exceptions import HTTPException as StarletteHTTPException

from ..core import (
    FeedbackItem,
    FeedbackLabel,
    ProfileParseError,
    profile_from_dict,
    profile_to_dict,
    result_to_dict,
    validate_profile,
)
from ..imaging import decode_png
from ..mlops import (
    GateFailed,
    ModelRegistry,
    Scheduler,
    UnknownVersion,
    builtin_trainer_steps,
    run_training_pipeline,
    write_marker,
)
from ..pipeline import (
    AnalyticsIndex,
    InspectionEngine,
    LocalStore,
    MalformedCursor,
    MissingView,
    ResultFilter,
    UnknownProfile,
    UnknownResult,
    UnknownTask,
    open_store,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class GatewayConfig:
    store_root: str
    index_path: str = ":memory:"
    fixture_root: str | None = None
    collation_window_s: float = 5.0
    retrain_batch_size: int = 1
    queue_prefix: str = "training-queue"
    token: str | None = None
    scheduler_interval_s: float = 1.0


@dataclass
class _CollationSlot:
    profile_id: str
    images: dict = field(default_factory=dict)
    started_at: float = field(default_factory=time.monotonic)


class GatewayContext:
    """Shared state behind the routes: store, registry, engine, scheduler."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.store = open_store(config.store_root)
        self.registry = ModelRegistry(self.store)
        self.index = AnalyticsIndex(config.index_path)
        self.engine = InspectionEngine(
            self.store, registry=self.registry, index=self.index,
            default_fixture_root=config.fixture_root,
            retrain_batch_size=config.retrain_batch_size,
            queue_prefix=config.queue_prefix)
        self.scheduler = Scheduler(
            self.store, self._run_job, queue_prefix=config.queue_prefix)
        self._collation: dict[tuple[str, str], _CollationSlot] = {}
        self._collation_lock = threading.Lock()
        self._idempotent: dict[str, str] = {}
        self._stop = threading.Event()
        self._scheduler_thread: threading.Thread | None = None

    def _run_job(self, job):
        if not isinstance(self.store, LocalStore):
            raise RuntimeError("built-in trainers need a local store")
        return run_training_pipeline(
            job, builtin_trainer_steps(self.store.root), self.store, self.registry)

    def start_scheduler(self):
        def loop():
            while not self._stop.is_set():
                self.scheduler.poll_once(wait=False)
                self._stop.wait(self.config.scheduler_interval_s)

        self._scheduler_thread = threading.Thread(target=loop, daemon=True)
        self._scheduler_thread.start()

    def shutdown(self):
        self._stop.set()
        if self._scheduler_thread is not None:
            self._scheduler_thread.join(timeout=5)

    # -- collation ----------------------------------------------------------

    def collate(self, unit_id: str, profile_id: str, view: str, image):
        """Add one view; returns a result id once the view set is complete."""
        profile = self.engine.load_profile(profile_id)
        if view not in profile.views:
            raise ApiError(400, "UNKNOWN_VIEW",
                           f"profile {profile_id} has no view {view!r}")
        key = (profile_id, unit_id)
        with self._collation_lock:
            now = time.monotonic()
            for k in [k for k, slot in self._collation.items()
                      if now - slot.started_at > self.config.collation_window_s]:
                del self._collation[k]
            slot = self._collation.setdefault(key, _CollationSlot(profile_id))
            slot.images[view] = image
            complete = set(profile.views) <= set(slot.images)
            if complete:
                del self._collation[key]
        if not complete:
            return None, sorted(slot.images)
        result = self.engine.run_inspection(unit_id, slot.images, profile)
        return result.result_id, sorted(slot.images)


def _require_dict(doc, what: str) -> dict:
    if not isinstance(doc, dict):
        raise ApiError(400, "BAD_REQUEST", f"{what} must be a JSON object")
    return doc


def create_app(config: GatewayConfig) -> FastAPI:
    app = FastAPI(title="inspection gateway", docs_url=None, redoc_url=None)
    ctx = GatewayContext(config)
    app.state.ctx = ctx
    v1 = "/api/v1"

    # -- error shape --------------------------------------------------------

    def error_response(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={
            "code": code, "message": message,
            "correlation_id": uuid.uuid4().hex})

    @app.exception_handler(ApiError)
    async def _api_error(request, exc: ApiError):
        return error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request, exc):
        code = {404: "NOT_FOUND", 405: "METHOD_NOT_ALLOWED",
                401: "UNAUTHORIZED"}.get(exc.status_code, "HTTP_ERROR")
        return error_response(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request, exc):
        return error_response(400, "BAD_UPLOAD", str(exc.errors()[:3]))

    @app.exception_handler(Exception)
    async def _internal_error(request, exc):
        return error_response(500, "INTERNAL", f"{type(exc).__name__}: {exc}")

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        path = request.url.path
        if config.token and path.startswith(v1) and not path.endswith("/healthz"):
            if request.headers.get("Authorization") != f"Bearer {config.token}":
                return error_response(401, "UNAUTHORIZED", "missing or bad token")
        return await call_next(request)

    # -- health -------------------------------------------------------------

    @app.get(v1 + "/healthz")
    async def healthz():
        return {"status": "ok"}

    # -- profiles -----------------------------------------------------------

    def load_profile_or_404(profile_id: str):
        try:
            return ctx.engine.load_profile(profile_id)
        except UnknownProfile:
            raise ApiError(404, "PROFILE_NOT_FOUND",
                           f"no profile {profile_id!r}") from None

    def parse_profile_doc(doc: dict):
        try:
            profile = profile_from_dict(_require_dict(doc, "profile"))
        except ProfileParseError as e:
            raise ApiError(400, "BAD_PROFILE", str(e)) from e
        violations = validate_profile(profile)
        if violations:
            raise ApiError(422, "PROFILE_INVALID", "; ".join(violations))
        return profile

    @app.post(v1 + "/profiles", status_code=201)
    async def create_profile(request: Request):
        profile = parse_profile_doc(await request.json())
        ctx.engine.save_profile(profile)
        return profile_to_dict(profile)

    @app.get(v1 + "/profiles")
    async def list_profiles():
        ids = sorted({key.split("/")[1] for key in ctx.store.list("profiles/")
                      if key.endswith("/profile.json")})
        return {"profiles": ids}

    @app.get(v1 + "/profiles/{profile_id}")
    async def get_profile(profile_id: str):
        return profile_to_dict(load_profile_or_404(profile_id))

    @app.put(v1 + "/profiles/{profile_id}")
    async def update_profile(profile_id: str, request: Request):
        load_profile_or_404(profile_id)
        profile = parse_profile_doc(await request.json())
        if profile.id != profile_id:
            raise ApiError(400, "ID_MISMATCH",
                           f"body id {profile.id!r} != path id {profile_id!r}")
        ctx.engine.save_profile(profile)
        return profile_to_dict(profile)

    @app.delete(v1 + "/profiles/{profile_id}", status_code=204)
    async def delete_profile(profile_id: str):
        load_profile_or_404(profile_id)
        for key in ctx.store.list(f"profiles/{profile_id}/"):
            ctx.store.delete(key)
        return Response(status_code=204)

    @app.put(v1 + "/profiles/{profile_id}/golden/{view}")
    async def upload_golden(profile_id: str, view: str, request: Request):
        profile = load_profile_or_404(profile_id)
        if view not in profile.views:
            raise ApiError(400, "UNKNOWN_VIEW",
                           f"profile has no view {view!r}")
        body = await request.body()
        try:
            decode_png(body)
        except Exception as e:
            raise ApiError(400, "BAD_UPLOAD", f"not a decodable PNG: {e}") from e
        key = f"profiles/{profile_id}/golden/{view}.png"
        ctx.store.put(key, body)
        profile.golden_images[view] = key
        ctx.engine.save_profile(profile)
        return {"path": key}

    # -- tasks --------------------------------------------------------------

    @app.post(v1 + "/profiles/{profile_id}/tasks", status_code=201)
    async def add_task(profile_id: str, request: Request):
        profile = load_profile_or_404(profile_id)
        doc = profile_to_dict(profile)
        doc["tasks"].append(_require_dict(await request.json(), "task"))
        profile = parse_profile_doc(doc)
        ctx.engine.save_profile(profile)
        return profile_to_dict(profile)

    @app.put(v1 + "/profiles/{profile_id}/tasks/{task_id}")
    async def update_task(profile_id: str, task_id: str, request: Request):
        profile = load_profile_or_404(profile_id)
        doc = profile_to_dict(profile)
        idx = next((i for i, t in enumerate(doc["tasks"]) if t["id"] == task_id), None)
        if idx is None:
            raise ApiError(404, "TASK_NOT_FOUND", f"no task {task_id!r}")
        doc["tasks"][idx] = _require_dict(await request.json(), "task")
        profile = parse_profile_doc(doc)
        ctx.engine.save_profile(profile)
        return profile_to_dict(profile)

    @app.delete(v1 + "/profiles/{profile_id}/tasks/{task_id}", status_code=204)
    async def delete_task(profile_id: str, task_id: str):
        profile = load_profile_or_404(profile_id)
        if not any(t.id == task_id for t in profile.tasks):
            raise ApiError(404, "TASK_NOT_FOUND", f"no task {task_id!r}")
        profile.tasks = [t for t in profile.tasks if t.id != task_id]
        ctx.engine.save_profile(profile)
        return Response(status_code=204)

    @app.post(v1 + "/profiles/{profile_id}/tasks/{task_id}/templates",
              status_code=201)
    async def upload_template(profile_id: str, task_id: str,
                              label: str = Form(...),
                              file: UploadFile = File(...)):
        profile = load_profile_or_404(profile_id)
        if not any(t.id == task_id for t in profile.tasks):
            raise ApiError(404, "TASK_NOT_FOUND", f"no task {task_id!r}")
        side = {"PRESENT": "present", "ABSENT": "absent"}.get(label.upper())
        if side is None:
            raise ApiError(400, "BAD_LABEL", f"label must be PRESENT or ABSENT")
        body = await file.read()
        try:
            decode_png(body)
        except Exception as e:
            raise ApiError(400, "BAD_UPLOAD", f"not a decodable PNG: {e}") from e
        template_id = uuid.uuid4().hex[:12]
        key = (f"profiles/{profile_id}/tasks/{task_id}/templates/"
               f"{side}/{template_id}.png")
        ctx.store.put(key, body)
        # mirror into the task's training dataset so retraining sees it
        ctx.store.put(f"datasets/{task_id}/{side}/{template_id}.png", body)
        return {"template_id": template_id, "path": key}

    # -- ingestion ----------------------------------------------------------

    @app.post(v1 + "/images", status_code=202)
    async def upload_image(unit_id: str = Form(...), profile_id: str = Form(...),
                           view: str = Form(...), file: UploadFile = File(...)):
        body = await file.read()
        try:
            image = decode_png(body)
        except Exception as e:
            raise ApiError(400, "BAD_UPLOAD", f"not a decodable PNG: {e}") from e
        try:
            result_id, received = ctx.collate(unit_id, profile_id, view, image)
        except UnknownProfile:
            raise ApiError(404, "PROFILE_NOT_FOUND",
                           f"no profile {profile_id!r}") from None
        if result_id is None:
            return {"status": "collating", "received_views": received}
        return {"result_id": result_id}

    @app.post(v1 + "/inspections", status_code=202)
    async def start_inspection(request: Request):
        doc = _require_dict(await request.json(), "inspection request")
        for name in ("unit_id", "profile_id", "image_refs"):
            if name not in doc:
                raise ApiError(400, "BAD_REQUEST", f"missing field {name!r}")
        idem = doc.get("idempotency_key")
        if idem and idem in ctx._idempotent:
            return {"result_id": ctx._idempotent[idem]}
        profile = load_profile_or_404(doc["profile_id"])
        images = {}
        for view, key in _require_dict(doc["image_refs"], "image_refs").items():
            if not ctx.store.exists(key):
                raise ApiError(404, "IMAGE_NOT_FOUND", f"no object {key!r}")
            images[view] = decode_png(ctx.store.get(key))
        try:
            result = ctx.engine.run_inspection(doc["unit_id"], images, profile)
        except MissingView as e:
            raise ApiError(400, "MISSING_VIEW", str(e)) from e
        if idem:
            ctx._idempotent[idem] = result.result_id
        return {"result_id": result.result_id}

    @app.get(v1 + "/inspections/{result_id}")
    async def get_inspection(result_id: str):
        try:
            return result_to_dict(ctx.engine.load_result(result_id))
        except UnknownResult:
            raise ApiError(404, "RESULT_NOT_FOUND",
                           f"no result {result_id!r}") from None

    @app.get(v1 + "/inspections")
    async def list_inspections(since: str | None = None, until: str | None = None,
                               profile_id: str | None = None,
                               verdict: str | None = None,
                               task_id: str | None = None,
                               unit_id: str | None = None,
                               cursor: str | None = None, limit: int = 50):
        flt = ResultFilter(since=since, until=until, profile_id=profile_id,
                           verdict=verdict, task_id=task_id, unit_id=unit_id)
        try:
            page = ctx.engine.query_results(flt, cursor, limit)
        except MalformedCursor as e:
            raise ApiError(400, "BAD_CURSOR", str(e)) from e
        return {"records": [r.to_dict() for r in page.records],
                "next_cursor": page.next_cursor}

    # -- feedback -----------------------------------------------------------

    @app.post(v1 + "/feedback", status_code=201)
    async def post_feedback(request: Request):
        doc = _require_dict(await request.json(), "feedback")
        try:
            label = FeedbackLabel(doc.get("operator_label", ""))
        except ValueError:
            raise ApiError(400, "BAD_LABEL",
                           "operator_label must be GOOD or BAD") from None
        item = FeedbackItem(result_id=doc.get("result_id", ""),
                            task_id=doc.get("task_id", ""),
                            operator_label=label, image_path="")
        try:
            stored, job_id = ctx.engine.submit_feedback(item)
        except UnknownResult as e:
            raise ApiError(404, "RESULT_NOT_FOUND", str(e)) from e
        except UnknownTask as e:
            raise ApiError(404, "TASK_NOT_FOUND", str(e)) from e
        return {"stored_path": stored, "training_job_id": job_id}

    # -- registry -----------------------------------------------------------

    @app.get(v1 + "/models/{task_id}")
    async def list_models(task_id: str):
        return {"versions": [m.to_dict() for m in ctx.registry.list_versions(task_id)]}

    @app.post(v1 + "/models/{task_id}/{version}/promote")
    async def promote_model(task_id: str, version: int, request: Request):
        doc = _require_dict(await request.json(), "promotion")
        target = doc.get("target", "PRODUCTION")
        policy_doc = doc.get("policy", {"type": "manual"})
        if policy_doc.get("type") == "accuracy_gate":
            policy = ("accuracy_gate", float(policy_doc.get("min_f1", 0.0)))
        else:
            policy = "manual"
        try:
            mv = ctx.registry.promote(task_id, version, target, policy)
        except UnknownVersion as e:
            raise ApiError(404, "UNKNOWN_VERSION", str(e)) from e
        except GateFailed as e:
            raise ApiError(409, "GATE_FAILED", str(e)) from e
        except ValueError as e:
            raise ApiError(400, "BAD_REQUEST", str(e)) from e
        return mv.to_dict()

    # -- training -----------------------------------------------------------

    @app.post(v1 + "/training/jobs", status_code=202)
    async def submit_training_job(request: Request):
        doc = _require_dict(await request.json(), "training job")
        for name in ("task_id", "dataset_prefix"):
            if name not in doc:
                raise ApiError(400, "BAD_REQUEST", f"missing field {name!r}")
        job_id = write_marker(
            ctx.store, doc["task_id"], doc["dataset_prefix"],
            hyperparameters=doc.get("hyperparameters", {}),
            idempotency_key=doc.get("idempotency_key"),
            requested_by=doc.get("requested_by", "api"),
            queue_prefix=config.queue_prefix)
        return {"job_id": job_id}

    @app.get(v1 + "/training/jobs/{job_id}")
    async def get_training_job(job_id: str):
        key = f"{config.queue_prefix}/jobs/{job_id}.json"
        if ctx.store.exists(key):
            return json.loads(ctx.store.get(key))
        for marker in ctx.store.list(config.queue_prefix + "/"):
            if f"/{job_id}/_SUBMIT.json" in marker and "/done/" not in marker \
                    and "/rejected/" not in marker:
                return {"job_id": job_id, "state": "QUEUED"}
        raise ApiError(404, "JOB_NOT_FOUND", f"no training job {job_id!r}")

    return app


def serve(config: GatewayConfig, host: str = "127.0.0.1", port: int = 8000):
    """Run the gateway with the background training scheduler attached."""
    import uvicorn

    app = create_app(config)
    app.state.ctx.start_scheduler()
    try:
        uvicorn.run(app, host=host, port=port)
    finally:
        app.state.ctx.shutdown()
