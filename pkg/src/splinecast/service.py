"""Live render service: the runtime frame loop behind a web socket.

Each session owns an isolated cache and runs exactly one frame at a time;
points of view arriving while a frame renders are coalesced so only the
latest is served next. The served POV sequence is therefore an order-
preserving subsequence of the sent sequence.
"""

from __future__ import annotations

import asyncio
import base64
import json
import threading
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .errors import CapacityError, FormatError, MissingBlockError
from .partition import LODManifest
from .render import PointOfView, RenderParams, TransferFunction, render
from .runtime import (
    FrameTiming,
    ModelCache,
    PREDICTORS,
    aggregate_stats,
    cache_frame,
    make_loader,
    prefetch_loop,
)

HISTORY_WINDOW = 8


class SessionRequest(BaseModel):
    tf: str | dict = "ml"
    width: int = 512
    height: int = 512
    sample_distance: float = 1e-3
    o_max: float = 0.99
    cache_capacity: int = 200
    prefetch: str = "off"


class Session:
    """One client's cache, parameters, and frame statistics."""

    def __init__(self, sid, manifest, loader, tf, params, prefetch, cache_capacity):
        self.sid = sid
        self.manifest = manifest
        self.tf = tf
        self.params = params
        self.prefetch = prefetch
        self.cache = ModelCache(capacity=cache_capacity, loader=loader)
        self.history: list[PointOfView] = []
        self.timings: list[FrameTiming] = []
        self._lock = threading.Lock()

    def serve_frame(self, pov: PointOfView) -> dict:
        """Run one caching + rendering + prefetch step, as replay does."""
        with self._lock:
            predictor = PREDICTORS[self.prefetch]
            before = self.cache.counters()
            t0 = time.perf_counter()
            resident = cache_frame(pov, self.manifest, self.cache, self.params.aspect)
            caching_ms = (time.perf_counter() - t0) * 1000.0
            self.history.append(pov)
            del self.history[:-HISTORY_WINDOW]

            rendering_done = threading.Event()
            loaded_box = [0]
            worker = None
            if predictor is not None:
                history = list(self.history)

                def run_prefetch():
                    loaded_box[0] = prefetch_loop(
                        history, self.manifest, self.cache, rendering_done,
                        predictor, self.params.aspect,
                    )

                worker = threading.Thread(target=run_prefetch, daemon=True)
                worker.start()
            t1 = time.perf_counter()
            frame = render(pov, resident, self.tf, self.params)
            rendering_ms = (time.perf_counter() - t1) * 1000.0
            rendering_done.set()
            if worker is not None:
                worker.join()

            after = self.cache.counters()
            frame_misses = after["misses"] - before["misses"]
            queries = frame_misses + after["hits"] - before["hits"]
            timing = FrameTiming(
                caching_ms=caching_ms,
                rendering_ms=rendering_ms,
                input_latency_ms=caching_ms + rendering_ms,
                prefetch_models_loaded=loaded_box[0],
                miss_rate=frame_misses / queries if queries else 0.0,
            )
            self.timings.append(timing)
            return {
                "type": "frame",
                "png": base64.b64encode(frame.to_png_bytes()).decode("ascii"),
                "width": self.params.width,
                "height": self.params.height,
                "timing": timing.to_json(),
                "miss_rate": timing.miss_rate,
                "visible": [addr.key for addr in sorted(resident)],
            }

    def stats(self) -> dict:
        return {
            "frames": len(self.timings),
            "aggregate": aggregate_stats(self.timings),
            "cache": self.cache.counters(),
            "per_frame": [t.to_json() for t in self.timings],
        }


def _tf_from_request(spec) -> TransferFunction:
    if spec == "ml":
        return TransferFunction.ml_preset()
    if isinstance(spec, dict):
        return TransferFunction.from_json(spec)
    raise ValueError(f"unknown transfer function {spec!r} (use 'ml' or an inline object)")


def _value_range(root: Path, manifest: LODManifest, loader) -> list[float]:
    """Conservative scalar range from the coarsest level's blocks."""
    lo, hi = float("inf"), float("-inf")
    for addr in manifest.addresses(manifest.levels):
        block = loader(addr)
        data = block.control if hasattr(block, "control") else block.samples
        lo = min(lo, float(data.min()))
        hi = max(hi, float(data.max()))
    return [lo, hi]


def create_app(store_root, max_sessions: int = 8) -> FastAPI:
    store_root = Path(store_root)
    manifest = LODManifest.load(store_root)
    loader = make_loader(store_root, manifest)
    value_range = _value_range(store_root, manifest, loader)
    app = FastAPI(title="splinecast render service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    app.state.sessions = sessions

    @app.get("/manifest")
    def get_manifest():
        counts = {
            str(lod): len(manifest.addresses(lod))
            for lod in range(1, manifest.levels + 1)
        }
        return {
            "kind": manifest.kind,
            "levels": manifest.levels,
            "micro_dims": list(manifest.micro_dims),
            "volume_dims": list(manifest.volume_dims),
            "bounds": manifest.bounds.tolist(),
            "degree": manifest.degree,
            "block_counts": counts,
            "store_bytes": manifest.total_model_bytes(),
            "value_range": value_range,
            "tf_presets": ["ml"],
        }

    @app.post("/session")
    def create_session(req: SessionRequest):
        if req.prefetch not in PREDICTORS:
            raise HTTPException(400, f"unknown prefetch mode {req.prefetch!r}")
        if len(sessions) >= max_sessions:
            raise HTTPException(429, "session limit reached")
        try:
            tf = _tf_from_request(req.tf)
            params = RenderParams(
                width=req.width,
                height=req.height,
                sample_distance=req.sample_distance,
                o_max=req.o_max,
            )
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        sid = uuid.uuid4().hex
        session = Session(
            sid, manifest, loader, tf, params, req.prefetch, req.cache_capacity
        )
        sessions[sid] = session
        return {
            "session_id": sid,
            "width": req.width,
            "height": req.height,
            "prefetch": req.prefetch,
            "cache_capacity": req.cache_capacity,
        }

    @app.get("/session/{sid}/stats")
    def get_stats(sid: str):
        session = sessions.get(sid)
        if session is None:
            raise HTTPException(404, "unknown session")
        return session.stats()

    @app.websocket("/session/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        session = sessions.get(sid)
        await ws.accept()
        if session is None:
            await ws.send_json({"type": "error", "error": "unknown session"})
            await ws.close(code=4404)
            return

        slot = {"pov": None, "closed": False}
        wakeup = asyncio.Event()

        async def receiver():
            try:
                while True:
                    raw = await ws.receive_text()
                    try:
                        pov = PointOfView.from_json(json.loads(raw))
                    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                        await ws.send_json({"type": "error", "error": f"bad pov: {exc}"})
                        continue
                    slot["pov"] = pov  # latest wins
                    wakeup.set()
            except WebSocketDisconnect:
                pass
            finally:
                slot["closed"] = True
                wakeup.set()

        recv_task = asyncio.create_task(receiver())
        try:
            while True:
                await wakeup.wait()
                wakeup.clear()
                if slot["closed"]:
                    break
                pov, slot["pov"] = slot["pov"], None
                if pov is None:
                    continue
                try:
                    reply = await asyncio.to_thread(session.serve_frame, pov)
                except (CapacityError, MissingBlockError, FormatError, OSError) as exc:
                    reply = {"type": "error", "error": str(exc)}
                try:
                    await ws.send_json(reply)
                except (RuntimeError, WebSocketDisconnect):
                    break
        finally:
            recv_task.cancel()
            sessions.pop(sid, None)

    return app
