"""Interactive generation service.

Session-based clip-by-clip generation over HTTP with JSON bodies; the
payload contract lives in docs/api.md and is mirrored by the studio UI.
Responses carry recovered joint positions so clients never re-implement
forward kinematics. Sessions persist to disk after every generation, so a
restarted server replays identically.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from . import __version__
from .conditions import ConditionBundle, MaskSet
from .features import FeatureLayout, MotionFeatures, recover_motion
from .generate import SessionState, continue_clip, load_session, save_session, stitch
from .kinematics import forward_kinematics
from .masks import TASK_KINDS, TaskMaskSpec, make_task_mask
from .model import Denoiser
from .schedule import NoiseSchedule
from .store import ClipStore

DEFAULT_IDLE_TIMEOUT = 30 * 60.0
GENERATION_TASKS = ("t2m", "s2g", "m2d") + TASK_KINDS


class ApiError(Exception):
    def __init__(self, code: str, message: str, status: int = 400,
                 fields: list[str] | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status
        self.fields = fields or []

    def response(self) -> JSONResponse:
        payload = {"error": {"code": self.code, "message": self.message,
                             "fields": self.fields}}
        return JSONResponse(payload, status_code=self.status)


@dataclass
class ManagedSession:
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    created: float = field(default_factory=time.time)
    last_activity: float = field(default_factory=time.time)

    def touch(self):
        self.last_activity = time.time()


class MotionService:
    def __init__(self, model: Denoiser, schedule: NoiseSchedule,
                 store: ClipStore | None = None,
                 sessions_dir: str | Path | None = None,
                 checkpoint_checksum: str = "unpinned",
                 idle_timeout: float = DEFAULT_IDLE_TIMEOUT):
        self.model = model
        self.schedule = schedule
        self.store = store
        self.skeleton = model.skeleton
        self.layout = FeatureLayout(self.skeleton)
        self.checksum = checkpoint_checksum
        self.idle_timeout = idle_timeout
        self.sessions: dict[str, ManagedSession] = {}
        self.registry_lock = threading.Lock()
        self.sessions_dir = Path(sessions_dir) if sessions_dir else None
        if self.sessions_dir:
            self.sessions_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.sessions_dir.glob("*.session.json")):
                state = load_session(path)
                self.sessions[state.session_id] = ManagedSession(state)

    # -- session registry ------------------------------------------------

    def _sweep(self) -> None:
        now = time.time()
        dead = [sid for sid, s in self.sessions.items()
                if now - s.last_activity > self.idle_timeout]
        for sid in dead:
            del self.sessions[sid]

    def create_session(self, skeleton_id: str, seed: int) -> str:
        if skeleton_id != self.skeleton.name:
            raise ApiError("unknown_skeleton",
                           f"skeleton {skeleton_id!r} is not loaded "
                           f"(serving {self.skeleton.name!r})", status=404)
        with self.registry_lock:
            self._sweep()
            session_id = uuid.uuid4().hex[:12]
            state = SessionState(session_id, self.skeleton, seed=seed)
            self.sessions[session_id] = ManagedSession(state)
        self._persist(self.sessions[session_id])
        return session_id

    def session(self, session_id: str) -> ManagedSession:
        with self.registry_lock:
            self._sweep()
            managed = self.sessions.get(session_id)
        if managed is None:
            raise ApiError("unknown_session", f"no session {session_id!r}",
                           status=404)
        return managed

    def _persist(self, managed: ManagedSession) -> None:
        if self.sessions_dir:
            path = self.sessions_dir / f"{managed.state.session_id}.session.json"
            save_session(managed.state, path)

    # -- payload handling --------------------------------------------------

    def _build_bundle(self, state: SessionState, payload: dict):
        fields: list[str] = []
        task = payload.get("task", "t2m")
        if task not in GENERATION_TASKS:
            fields.append("task")
        frames = payload.get("frames", min(150, self.model.config.max_frames))
        if not isinstance(frames, int) or not (1 <= frames <= self.model.config.max_frames):
            fields.append("frames")
        text = payload.get("text")
        if text is not None and not isinstance(text, str):
            fields.append("text")
        if payload.get("speech_ref") and payload.get("music_ref"):
            fields.extend(["speech_ref", "music_ref"])
        if fields:
            raise ApiError("validation_failed",
                           "invalid or conflicting fields", fields=sorted(set(fields)))

        bundle = ConditionBundle(text=text)
        masks = MaskSet()

        for key, attr in (("speech_ref", "speech"), ("music_ref", "music")):
            ref = payload.get(key)
            if ref:
                if self.store is None:
                    raise ApiError("validation_failed",
                                   "no store attached; audio refs unavailable",
                                   fields=[key])
                try:
                    audio = self.store.read_audio(ref)
                except FileNotFoundError:
                    raise ApiError("validation_failed",
                                   f"unknown audio attachment {ref!r}", fields=[key])
                rows = np.zeros((frames, audio.shape[1]), dtype=np.float32)
                rows[: min(frames, audio.shape[0])] = audio[:frames]
                setattr(bundle, attr, rows)

        ref_clip = payload.get("reference_clip")
        if ref_clip:
            if self.store is None:
                raise ApiError("validation_failed",
                               "no store attached; reference clips unavailable",
                               fields=["reference_clip"])
            try:
                record = self.store.read_clip(ref_clip)
            except FileNotFoundError:
                raise ApiError("validation_failed",
                               f"unknown reference clip {ref_clip!r}",
                               fields=["reference_clip"])
            if not state.clips:
                state.user_reference = record.features

        if task in TASK_KINDS:
            bundle, masks = self._build_gstc(state, payload, task, frames, bundle)
        return bundle, masks, frames, task

    def _build_gstc(self, state: SessionState, payload: dict, task: str,
                    frames: int, bundle: ConditionBundle):
        window = state.reference_window()
        if task == "trajectory":
            waypoints = payload.get("waypoints") or []
            if not waypoints:
                raise ApiError("validation_failed",
                               "trajectory task needs waypoints", fields=["waypoints"])
            condition = self._trajectory_condition(state, waypoints, frames)
        else:
            if window is None:
                raise ApiError("validation_failed",
                               f"{task} task needs session history or a reference clip",
                               fields=["task"])
            data = np.zeros((frames, self.layout.dim), dtype=np.float32)
            rows = min(frames, window.frame_count)
            data[:rows] = window.data[-rows:]
            condition = MotionFeatures(data, 30.0)

        spec_kwargs = {}
        if task == "predict":
            spec_kwargs["prefix_frames"] = int(payload.get("prefix_frames", 30))
        if task == "inbetween":
            spec_kwargs["prefix_frames"] = int(payload.get("prefix_frames", 10))
            spec_kwargs["suffix_frames"] = int(payload.get("suffix_frames", 10))
        if task == "complete":
            cells = payload.get("cells") or []
            spec_kwargs["cells"] = tuple((int(f), int(j)) for f, j in cells)
        try:
            spec = TaskMaskSpec(task, **spec_kwargs)
            mask = make_task_mask(spec, self.skeleton, frames)
        except ValueError as exc:
            raise ApiError("validation_failed", str(exc), fields=["task"])
        bundle.global_motion = condition
        return bundle, MaskSet(task_mask=mask, task_kind=task)

    def _trajectory_condition(self, state: SessionState, waypoints, frames: int):
        """Densify sparse clip-local XZ waypoints into per-frame root
        velocities (facing held constant)."""
        try:
            points = np.asarray([[float(x), float(z)] for x, z in waypoints])
        except (TypeError, ValueError):
            raise ApiError("validation_failed", "waypoints must be [x, z] pairs",
                           fields=["waypoints"])
        path = np.vstack([[0.0, 0.0], points])
        # arc-length proportional frame allocation over segments
        seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
        total = seg.sum()
        dense = np.zeros((frames, 2))
        if total < 1e-9:
            dense[:] = path[-1]
        else:
            s = np.concatenate([[0.0], np.cumsum(seg)]) / total
            ts = np.linspace(0.0, 1.0, frames)
            dense[:, 0] = np.interp(ts, s, path[:, 0])
            dense[:, 1] = np.interp(ts, s, path[:, 1])
        vel = np.zeros((frames, 2))
        vel[:-1] = np.diff(dense, axis=0)
        vel[-1] = vel[-2] if frames > 1 else 0.0

        height = 0.9
        window = state.reference_window()
        if window is not None:
            height = float(window.data[-1, 3])
        data = np.zeros((frames, self.layout.dim), dtype=np.float32)
        data[:, 1] = vel[:, 0]
        data[:, 2] = vel[:, 1]
        data[:, 3] = height
        ident6 = np.tile(np.array([1, 0, 0, 0, 1, 0], dtype=np.float32),
                         self.skeleton.rotated_count)
        data[:, self.layout.rotations] = ident6
        return MotionFeatures(data, 30.0)

    # -- operations --------------------------------------------------------

    def generate_next(self, session_id: str, payload: dict) -> dict:
        managed = self.session(session_id)
        with managed.lock:
            state = managed.state
            bundle, masks, frames, task = self._build_bundle(state, payload)
            try:
                clip = continue_clip(self.model, self.schedule, state, bundle,
                                     masks=masks, frames=frames)
            except ValueError as exc:
                raise ApiError("validation_failed", str(exc))
            except Exception as exc:   # generation must not kill the session
                raise ApiError("generation_failed", f"{type(exc).__name__}: {exc}",
                               status=500)
            state.clip_meta[-1]["task"] = task
            managed.touch()
            self._persist(managed)

            index = len(state.clips) - 1
            anchors = state.anchors()
            motion = recover_motion(clip, self.skeleton,
                                    initial_yaw=anchors[index][0],
                                    initial_xz=anchors[index][1])
            positions = forward_kinematics(self.skeleton, motion.root_translation,
                                           motion.local_rotations)
            return {
                "clip_id": f"{session_id}_{index:03d}",
                "clip_index": index,
                "frame_count": clip.frame_count,
                "caption": bundle.text,
                "task": task,
                "positions": positions.astype(np.float32).round(6).tolist(),
                "feature_ref": f"/api/sessions/{session_id}/clips/{index}/features",
            }

    def clip_features_bytes(self, session_id: str, index: int) -> bytes:
        managed = self.session(session_id)
        state = managed.state
        if not (0 <= index < len(state.clips)):
            raise ApiError("unknown_clip", f"no clip {index} in session", status=404)
        return state.clips[index].data.astype("<f4").tobytes()

    def timeline(self, session_id: str) -> dict:
        managed = self.session(session_id)
        state = managed.state
        managed.touch()
        clips = [{
            "clip_index": i,
            "clip_id": f"{session_id}_{i:03d}",
            "caption": meta.get("caption"),
            "task": meta.get("task", meta.get("task_kind") or "t2m"),
            "frames": meta["frames"],
            "seed": meta["seed"],
        } for i, meta in enumerate(state.clip_meta)]
        root_path: list[list[float]] = []
        if state.clips:
            motion = stitch(state)
            lat, fwd = self.skeleton.plane_indices
            plane = motion.root_translation[::5][:, [lat, fwd]]
            root_path = [[float(a), float(b)] for a, b in plane]
        return {
            "session_id": session_id,
            "clips": clips,
            "total_frames": state.total_frames,
            "root_path": root_path,
        }

    def skeleton_payload(self) -> dict:
        edges = [[int(self.skeleton.parent_index[j]), j]
                 for j in range(1, self.skeleton.joint_count)]
        return {
            "skeleton_id": self.skeleton.name,
            "joint_names": list(self.skeleton.joint_names),
            "parent_index": list(self.skeleton.parent_index),
            "edges": edges,
            "up_axis": self.skeleton.up_axis,
            "feature_dim": self.skeleton.feature_dim,
            "max_frames": self.model.config.max_frames,
        }


def create_app(model: Denoiser, schedule: NoiseSchedule,
               store: ClipStore | None = None,
               sessions_dir: str | Path | None = None,
               checkpoint_checksum: str = "unpinned",
               idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
               static_dir: str | Path | None = None) -> FastAPI:
    service = MotionService(model, schedule, store, sessions_dir,
                            checkpoint_checksum, idle_timeout)
    app = FastAPI(title="motion generation service", version=__version__)
    app.state.service = service

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError):
        return exc.response()

    @app.get("/api/health")
    def health():
        return {"status": "ok", "version": __version__,
                "checkpoint": service.checksum,
                "skeleton": service.skeleton.name,
                "sessions": len(service.sessions)}

    @app.get("/api/skeleton")
    def skeleton():
        return service.skeleton_payload()

    @app.post("/api/sessions")
    async def create_session(request: Request):
        payload = await _json_body(request)
        skeleton_id = payload.get("skeleton_id", service.skeleton.name)
        seed = payload.get("seed", 7)
        if not isinstance(seed, int):
            raise ApiError("validation_failed", "seed must be an integer",
                           fields=["seed"])
        session_id = service.create_session(skeleton_id, seed)
        return {"session_id": session_id, "skeleton_id": service.skeleton.name,
                "seed": seed}

    @app.post("/api/sessions/{session_id}/generate")
    async def generate(session_id: str, request: Request):
        payload = await _json_body(request)
        return service.generate_next(session_id, payload)

    @app.get("/api/sessions/{session_id}/timeline")
    def timeline(session_id: str):
        return service.timeline(session_id)

    @app.get("/api/sessions/{session_id}/clips/{index}/features")
    def clip_features(session_id: str, index: int):
        blob = service.clip_features_bytes(session_id, index)
        return Response(content=blob, media_type="application/octet-stream")

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="studio")

    return app


async def _json_body(request: Request) -> dict:
    try:
        payload = await request.json()
    except Exception:
        raise ApiError("validation_failed", "body must be a JSON object")
    if not isinstance(payload, dict):
        raise ApiError("validation_failed", "body must be a JSON object")
    return payload
