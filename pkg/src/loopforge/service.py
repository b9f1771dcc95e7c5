"""HTTP JSON service exposing loaded models and decode sessions.

Models are registered in memory from checkpoint files; sessions live in an
LRU-capped in-memory store and are serialized per session by a lock, so
distinct sessions step in parallel while one session never races itself.
Nothing persists across restarts.

Latent vectors and token coordinates travel as decimal strings (repr of the
float64) so values round-trip the JSON layer bit-exactly; counts, flags and
statuses are plain JSON numbers.
"""

from __future__ import annotations

import itertools
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .data import DatasetConfig, make_plane_schedule
from .decode import (
    EosStop,
    PlaneCountStop,
    apply_edit,
    interpolate as interpolate_latents,
    new_session,
    parse_edit_script,
    rewind,
    run,
    step,
    to_sequence,
)
from .errors import (
    EditRangeError,
    EmptyShapeError,
    InvalidInputError,
    LoopForgeError,
    SessionStateError,
    ShapeError,
)
from .model import load_checkpoint
from .recon import oriented_cloud
from .sequence import serialize

DEFAULT_SESSION_CAP = 64
DEFAULT_POINT_DENSITY = 200.0


class ServiceError(Exception):
    """Maps to an HTTP response of {code, message, field?}."""

    def __init__(self, status, code, message, field=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field

    def body(self):
        out = {"code": self.code, "message": self.message}
        if self.field is not None:
            out["field"] = self.field
        return out


def _fmt(x):
    """Shortest decimal string that parses back to the same float64."""
    return repr(float(x))


def _fmt_rows(arr):
    return [[_fmt(v) for v in row] for row in np.asarray(arr, dtype=np.float64)]


def _parse_float(value, field):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ServiceError(422, "validation_error", f"{field} must be a number", field)
    try:
        return float(value)
    except ValueError:
        raise ServiceError(422, "validation_error", f"{field} is not a number", field)


def _parse_vector(values, field, expect_len):
    if not isinstance(values, list):
        raise ServiceError(422, "validation_error", f"{field} must be a list", field)
    if len(values) != expect_len:
        raise ServiceError(
            422,
            "validation_error",
            f"{field} must have length {expect_len}, got {len(values)}",
            field,
        )
    return np.array([_parse_float(v, field) for v in values], dtype=np.float64)


def parse_stop_rule(obj):
    """JSON {type: plane_count|eos, ...} -> stop rule object."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ServiceError(
            422, "validation_error", "stop_rule must be an object with a 'type'", "stop_rule"
        )
    kind = obj["type"]
    try:
        if kind == "plane_count":
            return PlaneCountStop(k=int(obj["k"]))
        if kind == "eos":
            return EosStop(eps=float(obj.get("eps", 0.01)))
    except (KeyError, TypeError, ValueError, LoopForgeError) as exc:
        raise ServiceError(422, "validation_error", f"bad stop_rule: {exc}", "stop_rule")
    raise ServiceError(
        422, "validation_error", f"unknown stop_rule type {kind!r}", "stop_rule"
    )


def stop_rule_to_json(rule):
    if isinstance(rule, PlaneCountStop):
        return {"type": "plane_count", "k": rule.k}
    return {"type": "eos", "eps": rule.eps}


@dataclass
class ModelEntry:
    model: object
    checkpoint_path: str
    extras: dict
    planes: object  # PlaneList or None when the checkpoint has no dataset config


@dataclass
class SessionEntry:
    session: object
    model_id: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    created_at: str = ""
    updated_at: str = ""


class ServiceState:
    """Model registry plus an LRU session store with per-session locks."""

    def __init__(self, session_cap=DEFAULT_SESSION_CAP):
        self.session_cap = session_cap
        self._models = {}
        self._sessions = OrderedDict()
        self._lock = threading.Lock()
        self._model_ids = itertools.count(1)

    def add_model(self, entry):
        with self._lock:
            model_id = f"model-{next(self._model_ids):04d}"
            self._models[model_id] = entry
            return model_id

    def get_model(self, model_id):
        with self._lock:
            entry = self._models.get(model_id)
        if entry is None:
            raise ServiceError(404, "unknown_model", f"no model {model_id!r} loaded", "model_id")
        return entry

    def add_session(self, entry):
        with self._lock:
            self._sessions[entry.session.session_id] = entry
            while len(self._sessions) > self.session_cap:
                self._sessions.popitem(last=False)

    def get_session(self, session_id):
        with self._lock:
            entry = self._sessions.get(session_id)
            if entry is not None:
                self._sessions.move_to_end(session_id)
        if entry is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id!r}", "session_id")
        return entry


def _now():
    return datetime.now(timezone.utc).isoformat()


def _token_record(result):
    token = result["token"]
    return {
        "step_index": result["step_index"],
        "coords": [_fmt(v) for v in token[:-1]],
        "level_up": int(token[-1]),
        "raw_flag_prob": _fmt(result["raw_flag_prob"]),
        "source": result["source"],
        "status": result["status"],
    }


def _snapshot(entry):
    session = entry.session
    return {
        "session_id": session.session_id,
        "model_id": entry.model_id,
        "status": session.status,
        "stop_rule": stop_rule_to_json(session.stop_rule),
        "step_count": len(session.emitted),
        "flag_count": session.flag_count,
        "frozen_upto": session.frozen_upto,
        "pending_edits": len(session.pending),
        "applied_edits": len(session.edit_log),
        "z": [_fmt(v) for v in session.z],
        "created_at": entry.created_at,
        "updated_at": entry.updated_at,
    }


def _require_dict(payload, what):
    if not isinstance(payload, dict):
        raise ServiceError(422, "validation_error", f"{what} body must be a JSON object")
    return payload


def _planes_for(model_entry):
    if model_entry.planes is None:
        raise ServiceError(
            409,
            "no_plane_schedule",
            "checkpoint carries no dataset config, so plane geometry is unknown",
        )
    return model_entry.planes


def _decode_z(payload, model, state_field="z"):
    """Accept an explicit vector, a {'sample': seed} request, or nothing."""
    latent_dim = model.config.latent_dim
    z = payload.get("z")
    if z is None:
        return np.random.default_rng().standard_normal(latent_dim)
    if isinstance(z, dict):
        if set(z) != {"sample"}:
            raise ServiceError(
                422, "validation_error", "z object form must be {'sample': seed}", state_field
            )
        seed = z["sample"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ServiceError(
                422, "validation_error", "sample seed must be a non-negative integer", state_field
            )
        return np.random.default_rng(seed).standard_normal(latent_dim)
    return _parse_vector(z, state_field, latent_dim)


def create_app(session_cap=DEFAULT_SESSION_CAP, static_dir=None):
    app = FastAPI(title="loopforge", docs_url=None, redoc_url=None)
    state = ServiceState(session_cap=session_cap)
    app.state.loopforge = state

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def _request_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"code": "validation_error", "message": str(exc.errors()[:1])},
        )

    async def _json_body(request, what):
        try:
            payload = await request.json()
        except Exception:
            raise ServiceError(422, "validation_error", f"{what} body must be valid JSON")
        return payload

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/models/load")
    async def load_model(request: Request):
        payload = _require_dict(await _json_body(request, "load"), "load")
        path = payload.get("checkpoint_path")
        if not isinstance(path, str) or not path:
            raise ServiceError(
                422, "validation_error", "checkpoint_path must be a string", "checkpoint_path"
            )
        try:
            model, step_no, extras = load_checkpoint(path)
        except (LoopForgeError, OSError) as exc:
            raise ServiceError(400, "checkpoint_error", str(exc), "checkpoint_path")
        planes = None
        if isinstance(extras, dict) and "dataset_config" in extras:
            cfg = dict(extras["dataset_config"])
            if cfg.get("plane_range") is not None:
                cfg["plane_range"] = tuple(cfg["plane_range"])
            planes = make_plane_schedule(DatasetConfig(**cfg))
        entry = ModelEntry(model, path, extras if isinstance(extras, dict) else {}, planes)
        model_id = state.add_model(entry)
        return {
            "model_id": model_id,
            "config": model.config.to_dict(),
            "step": step_no,
            "has_plane_schedule": planes is not None,
        }

    @app.post("/sessions")
    async def create_session(request: Request):
        payload = _require_dict(await _json_body(request, "session"), "session")
        model_id = payload.get("model_id")
        if not isinstance(model_id, str):
            raise ServiceError(422, "validation_error", "model_id must be a string", "model_id")
        model_entry = state.get_model(model_id)
        if "stop_rule" not in payload:
            raise ServiceError(422, "validation_error", "stop_rule is required", "stop_rule")
        rule = parse_stop_rule(payload["stop_rule"])
        z = _decode_z(payload, model_entry.model)
        try:
            session = new_session(model_entry.model, z, rule)
        except (ShapeError, InvalidInputError) as exc:
            raise ServiceError(422, "validation_error", str(exc), "z")
        now = _now()
        entry = SessionEntry(session, model_id, created_at=now, updated_at=now)
        state.add_session(entry)
        return _snapshot(entry)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _snapshot(state.get_session(session_id))

    def _step_locked(entry, count):
        session = entry.session
        with entry.lock:
            if session.status != "running":
                raise ServiceError(
                    409, "session_finished", f"session is {session.status}, not running"
                )
            results = []
            while session.status == "running" and (count is None or len(results) < count):
                result = step(session)
                # a terminating step consumes the stop token without emitting it
                if result["token"] is not None:
                    results.append(_token_record(result))
            entry.updated_at = _now()
        return {
            "new_tokens": results,
            "status": session.status,
            "step_count": len(session.emitted),
        }

    @app.post("/sessions/{session_id}/step")
    async def step_session(session_id: str, request: Request):
        body = await request.body()
        payload = _require_dict(await _json_body(request, "step") if body else {}, "step")
        count = payload.get("count", 1)
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise ServiceError(
                422, "validation_error", "count must be a positive integer", "count"
            )
        return _step_locked(state.get_session(session_id), count)

    @app.post("/sessions/{session_id}/run")
    def run_session(session_id: str):
        return _step_locked(state.get_session(session_id), None)

    @app.post("/sessions/{session_id}/edits")
    async def post_edits(session_id: str, request: Request):
        payload = await _json_body(request, "edits")
        if isinstance(payload, dict):
            payload = payload.get("edits")
        if not isinstance(payload, list):
            raise ServiceError(
                422, "validation_error", "edits must be a JSON list of operations", "edits"
            )
        entry = state.get_session(session_id)
        n_points = entry.session.model.config.n_points
        ops = []
        for i, item in enumerate(payload):
            try:
                ops.extend(parse_edit_script([item], n_points))
            except LoopForgeError as exc:
                raise ServiceError(422, "validation_error", str(exc), f"edits[{i}]")
        accepted = []
        with entry.lock:
            for i, op in enumerate(ops):
                try:
                    apply_edit(entry.session, op)
                except SessionStateError as exc:
                    raise ServiceError(409, "session_finished", str(exc), f"edits[{i}]")
                except EditRangeError as exc:
                    raise ServiceError(409, "edit_range", str(exc), f"edits[{i}]")
                accepted.append(i)
            entry.updated_at = _now()
        return {
            "accepted": len(accepted),
            "status": entry.session.status,
            "pending_edits": len(entry.session.pending),
        }

    @app.post("/sessions/{session_id}/rewind")
    async def rewind_session(session_id: str, request: Request):
        payload = _require_dict(await _json_body(request, "rewind"), "rewind")
        to_step = payload.get("to_step")
        if not isinstance(to_step, int) or isinstance(to_step, bool):
            raise ServiceError(
                422, "validation_error", "to_step must be an integer", "to_step"
            )
        entry = state.get_session(session_id)
        with entry.lock:
            try:
                rewind(entry.session, to_step)
            except EditRangeError as exc:
                raise ServiceError(422, "validation_error", str(exc), "to_step")
            entry.updated_at = _now()
        return _snapshot(entry)

    @app.post("/sessions/{session_id}/fork")
    def fork_session(session_id: str):
        entry = state.get_session(session_id)
        with entry.lock:
            src = entry.session
            clone = new_session(src.model, src.z.copy(), src.stop_rule)
            clone.status = src.status
            clone.emitted = [t.copy() for t in src.emitted]
            clone.flag_probs = list(src.flag_probs)
            clone.pending = list(src.pending)
            clone.edit_log = list(src.edit_log)
            clone.frozen_upto = src.frozen_upto
        now = _now()
        fork_entry = SessionEntry(clone, entry.model_id, created_at=now, updated_at=now)
        state.add_session(fork_entry)
        return _snapshot(fork_entry)

    @app.get("/sessions/{session_id}/loops")
    def get_loops(session_id: str):
        entry = state.get_session(session_id)
        model_entry = state.get_model(entry.model_id)
        with entry.lock:
            try:
                seq = to_sequence(entry.session)
            except EmptyShapeError as exc:
                raise ServiceError(409, "empty_sequence", str(exc))
            except LoopForgeError as exc:
                raise ServiceError(409, "sequence_error", str(exc))
        data = serialize(seq, planes=model_entry.planes)
        return PlainTextResponse(data, media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/points")
    def get_points(session_id: str, density: float = DEFAULT_POINT_DENSITY, seed: int = 0):
        if not density > 0:
            raise ServiceError(422, "validation_error", "density must be positive", "density")
        entry = state.get_session(session_id)
        model_entry = state.get_model(entry.model_id)
        planes = _planes_for(model_entry)
        with entry.lock:
            try:
                seq = to_sequence(entry.session, plane_count=len(planes))
            except EmptyShapeError as exc:
                raise ServiceError(409, "empty_sequence", str(exc))
            except LoopForgeError as exc:
                raise ServiceError(409, "sequence_error", str(exc))
        try:
            cloud = oriented_cloud(seq, planes, density, seed=seed)
        except LoopForgeError as exc:
            raise ServiceError(409, "reconstruction_error", str(exc))
        return {
            "count": len(cloud),
            "points": _fmt_rows(cloud.points),
            "normals": _fmt_rows(cloud.normals),
        }

    @app.post("/interpolate")
    async def interpolate_endpoint(request: Request):
        payload = _require_dict(await _json_body(request, "interpolate"), "interpolate")
        model_id = payload.get("model_id")
        if not isinstance(model_id, str):
            raise ServiceError(422, "validation_error", "model_id must be a string", "model_id")
        model_entry = state.get_model(model_id)
        latent_dim = model_entry.model.config.latent_dim
        z_a = _parse_vector(payload.get("z_a"), "z_a", latent_dim)
        z_b = _parse_vector(payload.get("z_b"), "z_b", latent_dim)
        k = payload.get("k")
        if not isinstance(k, int) or isinstance(k, bool) or k < 2:
            raise ServiceError(422, "validation_error", "k must be an integer >= 2", "k")
        rule = parse_stop_rule(payload.get("stop_rule", {"type": "eos"}))
        sequences = []
        for z in interpolate_latents(z_a, z_b, k):
            session = run(new_session(model_entry.model, z, rule))
            if session.emitted:
                text = serialize(
                    to_sequence(session), planes=model_entry.planes
                ).decode("utf-8")
            else:
                text = ""
            sequences.append({"status": session.status, "loopseq": text})
        return {"count": k, "sequences": sequences}

    if static_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(port=8080, host="127.0.0.1", session_cap=DEFAULT_SESSION_CAP, static_dir=None):
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(
        create_app(session_cap=session_cap, static_dir=static_dir),
        host=host,
        port=port,
        log_level="warning",
    )
