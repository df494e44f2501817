"""Streaming pose service: frames in, detections and poses out.

The protocol is JSON messages over a WebSocket: a ``hello`` version
handshake, then ``frame`` messages carrying base64 PNG payloads, answered
by ``result`` or ``error`` messages. Each connection owns an isolated
session with a one-slot frame queue (latest wins, stale frames dropped
silently) and a dispatch rate capped at ``max_fps``.

The session core is transport-free and driven by explicit timestamps, so
throttling and drop behavior are testable with a virtual clock; the
FastAPI app wraps it with the actual socket plumbing.
"""

from __future__ import annotations

import asyncio
import base64
import contextlib
import io
import json
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from .estimator import EstimatorInput, EstimatorOutput
from .raster import CameraIntrinsics

PROTOCOL_VERSION = 1
DEFAULT_MAX_FPS = 5.0
FRAME_ENCODING = "png-base64"


def error_message(code: str, message: str, frame_id: int | None = None) -> dict:
    return {"type": "error", "frame_id": frame_id, "code": code,
            "message": message}


@dataclass(frozen=True)
class FrameJob:
    """One accepted frame waiting for (or undergoing) processing."""

    frame_id: int
    timestamp_ms: float
    width: int
    height: int
    intrinsics: dict
    data: str
    received_at: float

    def camera(self) -> CameraIntrinsics:
        k = self.intrinsics
        return CameraIntrinsics(fx=float(k["fx"]), fy=float(k["fy"]),
                                cx=float(k["cx"]), cy=float(k["cy"]),
                                width=self.width, height=self.height)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass
class SessionState:
    """Per-connection protocol state machine, clock passed in explicitly.

    ``handle`` validates one inbound message and returns immediate replies;
    ``due`` pops the pending frame once the rate budget allows another
    dispatch; ``complete_ok``/``complete_error`` finish the in-flight frame
    and build the outbound message. At most one frame is pending and at
    most one in flight; a newer frame silently replaces the pending one.
    """

    max_fps: float = DEFAULT_MAX_FPS
    hello_done: bool = False
    last_frame_id: int | None = None
    pending: FrameJob | None = None
    in_flight: bool = False
    last_dispatch: float | None = None
    frames_received: int = 0
    frames_dropped: int = 0
    emitted_frame_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.max_fps <= 0:
            raise ValueError("max_fps must be positive")

    @property
    def dispatch_interval(self) -> float:
        return 1.0 / self.max_fps

    # -- inbound ----------------------------------------------------------

    def handle(self, msg, now: float) -> list[dict]:
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return [error_message("malformed", "messages are JSON objects "
                                  "with a string 'type' field")]
        kind = msg["type"]
        if kind == "hello":
            if msg.get("version") != PROTOCOL_VERSION:
                return [error_message(
                    "unsupported-version",
                    f"server speaks protocol version {PROTOCOL_VERSION}")]
            self.hello_done = True
            return [{"type": "hello", "version": PROTOCOL_VERSION}]
        if kind == "frame":
            return self._handle_frame(msg, now)
        return [error_message("unknown-type",
                              f"unrecognized message type {kind!r}")]

    def _handle_frame(self, msg: dict, now: float) -> list[dict]:
        frame_id = msg.get("frame_id") if _is_int(msg.get("frame_id")) \
            else None
        if not self.hello_done:
            return [error_message("protocol", "send hello before frames",
                                  frame_id)]
        intrinsics = msg.get("intrinsics")
        well_formed = (
            frame_id is not None
            and _is_number(msg.get("timestamp_ms"))
            and _is_int(msg.get("width")) and _is_int(msg.get("height"))
            and isinstance(msg.get("data"), str)
            and isinstance(intrinsics, dict)
            and all(_is_number(intrinsics.get(k))
                    for k in ("fx", "fy", "cx", "cy"))
        )
        if not well_formed:
            return [error_message("malformed",
                                  "frame is missing required fields",
                                  frame_id)]
        if msg["width"] <= 0 or msg["height"] <= 0:
            return [error_message("malformed",
                                  "frame dimensions must be positive",
                                  frame_id)]
        if msg.get("encoding") != FRAME_ENCODING:
            return [error_message(
                "unsupported-encoding",
                f"only {FRAME_ENCODING!r} payloads are supported", frame_id)]
        if self.last_frame_id is not None and frame_id <= self.last_frame_id:
            return [error_message(
                "frame-order",
                f"frame_id {frame_id} does not increase past "
                f"{self.last_frame_id}", frame_id)]
        self.last_frame_id = frame_id
        self.frames_received += 1
        if self.pending is not None:
            self.frames_dropped += 1    # latest wins, silently
        self.pending = FrameJob(
            frame_id=frame_id, timestamp_ms=float(msg["timestamp_ms"]),
            width=msg["width"], height=msg["height"],
            intrinsics=dict(intrinsics), data=msg["data"], received_at=now)
        return []

    # -- dispatch ---------------------------------------------------------

    def due(self, now: float) -> FrameJob | None:
        """Pop the pending frame if the rate budget allows dispatching."""
        if self.in_flight or self.pending is None:
            return None
        if (self.last_dispatch is not None
                and now < self.last_dispatch + self.dispatch_interval):
            return None
        job = self.pending
        self.pending = None
        self.in_flight = True
        self.last_dispatch = now
        return job

    def next_due_time(self) -> float | None:
        """Earliest time ``due`` can succeed, or None if nothing waits."""
        if self.in_flight or self.pending is None:
            return None
        if self.last_dispatch is None:
            return self.pending.received_at
        return self.last_dispatch + self.dispatch_interval

    # -- completion -------------------------------------------------------

    def complete_ok(self, job: FrameJob, output: EstimatorOutput,
                    now: float) -> dict:
        self.in_flight = False
        self.emitted_frame_ids.append(job.frame_id)
        return {
            "type": "result",
            "frame_id": job.frame_id,
            "server_latency_ms": max(0.0, (now - job.received_at) * 1000.0),
            "detections": [
                {
                    "category_id": int(d.category_id),
                    "score": float(d.score),
                    "bbox": [float(v) for v in d.bbox]
                    if d.bbox is not None else [-1.0, -1.0, -1.0, -1.0],
                    "rotation": [float(v)
                                 for v in d.pose.rotation.ravel()],
                    "translation_mm": [float(v)
                                       for v in d.pose.translation],
                }
                for d in output.detections
            ],
        }

    def complete_error(self, job: FrameJob, message: str,
                       code: str = "estimator-failure") -> dict:
        self.in_flight = False
        return error_message(code, message, job.frame_id)


# ---------------------------------------------------------------------------
# frame payload decoding


def decode_frame_payload(job: FrameJob) -> np.ndarray:
    """Base64 PNG payload to a single-channel array matching the frame size."""
    from PIL import Image

    try:
        raw = base64.b64decode(job.data, validate=True)
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise ValueError(f"undecodable frame payload: {exc}") from exc
    if img.mode not in ("L", "I", "I;16"):
        img = img.convert("L")
    arr = np.asarray(img)
    if arr.shape != (job.height, job.width):
        raise ValueError(
            f"payload is {arr.shape[1]}x{arr.shape[0]} but the frame "
            f"declares {job.width}x{job.height}")
    return arr


def job_to_input(job: FrameJob) -> EstimatorInput:
    return EstimatorInput(cam=job.camera(), frame_id=job.frame_id,
                          intensity=decode_frame_payload(job))


def null_estimator(_inp: EstimatorInput) -> EstimatorOutput:
    """Always returns no detections; exercises the protocol end to end."""
    return EstimatorOutput(detections=[], compute_time_ms=0.0)


# ---------------------------------------------------------------------------
# transport


def create_app(estimator_fn=null_estimator, max_fps: float = DEFAULT_MAX_FPS,
               models_dir=None):
    """FastAPI app exposing /ws plus optional static model files.

    ``estimator_fn`` maps EstimatorInput to EstimatorOutput; it runs in a
    worker thread, serially within each connection and concurrently across
    connections.
    """
    if max_fps <= 0:
        raise ValueError("max_fps must be positive")
    app = FastAPI(title="flatpose streaming service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    if models_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/models", StaticFiles(directory=str(models_dir)),
                  name="models")

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        loop = asyncio.get_running_loop()
        session = SessionState(max_fps=max_fps)
        send_lock = asyncio.Lock()
        wake = asyncio.Event()

        async def send(msg: dict):
            async with send_lock:
                await websocket.send_text(json.dumps(msg))

        async def process(job: FrameJob) -> dict:
            try:
                inp = job_to_input(job)
            except ValueError as exc:
                return session.complete_error(job, str(exc), code="malformed")
            try:
                output = await asyncio.to_thread(estimator_fn, inp)
                return session.complete_ok(job, output, loop.time())
            except Exception as exc:
                return session.complete_error(job, str(exc))

        async def dispatcher():
            while True:
                job = session.due(loop.time())
                if job is not None:
                    await send(await process(job))
                    continue
                deadline = session.next_due_time()
                if deadline is None:
                    await wake.wait()
                    wake.clear()
                    continue
                delay = max(0.0, deadline - loop.time())
                with contextlib.suppress(asyncio.TimeoutError, TimeoutError):
                    await asyncio.wait_for(wake.wait(), timeout=delay)
                    wake.clear()

        worker = asyncio.create_task(dispatcher())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    msg = None
                for reply in session.handle(msg, loop.time()):
                    await send(reply)
                wake.set()
        except WebSocketDisconnect:
            pass
        finally:
            worker.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await worker

    return app


def run_server(bind: str = "127.0.0.1:8000", estimator_fn=null_estimator,
               max_fps: float = DEFAULT_MAX_FPS, models_dir=None) -> None:
    """Blocking entry point: serve until interrupted."""
    import uvicorn

    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError("bind address must look like host:port")
    app = create_app(estimator_fn=estimator_fn, max_fps=max_fps,
                     models_dir=models_dir)
    uvicorn.run(app, host=host, port=int(port), log_level="info")
