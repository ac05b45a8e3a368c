"""Out-of-core frame loop: LRU residency cache, preemptible prefetching,
trajectory replay with per-frame latency accounting.

Two roles mutate the cache: the per-frame caching step (which pins the
frame's visible set) and the best-effort prefetcher running while the frame
renders. A single lock serializes cache operations; the prefetcher checks
the rendering-done flag between block loads so preemption lags by at most
one load.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .downsample import load_ds_block
from .errors import CapacityError, FormatError
from .partition import BlockAddress, LODManifest
from .render import PointOfView, RenderParams, TransferFunction, render, select_visible
from .store import load_model

log = logging.getLogger(__name__)

__all__ = [
    "ModelCache",
    "FrameTiming",
    "make_loader",
    "cache_frame",
    "prefetch_loop",
    "predict_static",
    "predict_next_linear",
    "PREDICTORS",
    "replay",
    "aggregate_stats",
    "timings_rows",
    "save_trajectory",
    "load_trajectory",
    "orbit_trajectory",
]


def make_loader(store_root, manifest: LODManifest):
    """Block loader for a store, dispatching on the manifest kind."""
    store_root = Path(store_root)
    if manifest.kind == "ds":
        return lambda addr: load_ds_block(store_root, manifest, addr)
    return lambda addr: load_model(store_root, manifest, addr)


class ModelCache:
    """LRU residency cache of decoded blocks, keyed by address.

    capacity is a block count. Entries pinned for the in-flight frame are
    never evicted. on_load, when given, is called as on_load(addr, source)
    immediately before each store read ("frame" or "prefetch" loads).
    """

    def __init__(self, capacity: int, loader, on_load=None):
        if capacity < 1:
            raise ValueError("cache capacity must be at least 1")
        self.capacity = capacity
        self._loader = loader
        self._on_load = on_load
        self._entries: OrderedDict = OrderedDict()
        self._pinned: set = set()
        self._lock = threading.RLock()
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self.bytes_loaded = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, addr) -> bool:
        with self._lock:
            return addr in self._entries

    def resident_addresses(self) -> list:
        with self._lock:
            return list(self._entries)

    def counters(self) -> dict:
        with self._lock:
            return {
                "hits": self.hits,
                "misses": self.misses,
                "evictions": self.evictions,
                "bytes_loaded": self.bytes_loaded,
            }

    def begin_frame(self, visible) -> None:
        """Pin the new frame's visible set (replacing the previous pins)."""
        with self._lock:
            self._pinned = set(visible)

    def _evict_one(self) -> None:
        for addr in self._entries:
            if addr not in self._pinned:
                del self._entries[addr]
                self.evictions += 1
                return
        raise CapacityError("every resident block is pinned; nothing can be evicted")

    def fetch(self, addr, record: bool = True):
        """Return the block for addr, loading it on a miss.

        record=False (prefetch) skips the hit/miss counters, which track
        only per-frame visibility queries.
        """
        with self._lock:
            if addr in self._entries:
                self._entries.move_to_end(addr)
                if record:
                    self.hits += 1
                return self._entries[addr]
            if record:
                self.misses += 1
            if self._on_load is not None:
                self._on_load(addr, "frame" if record else "prefetch")
            block = self._loader(addr)
            while len(self._entries) >= self.capacity:
                self._evict_one()
            self._entries[addr] = block
            self.bytes_loaded += int(getattr(block, "nbytes", 0))
            return block


@dataclass
class FrameTiming:
    caching_ms: float
    rendering_ms: float
    input_latency_ms: float
    prefetch_models_loaded: int
    miss_rate: float

    def to_json(self) -> dict:
        return {
            "caching_ms": self.caching_ms,
            "rendering_ms": self.rendering_ms,
            "input_latency_ms": self.input_latency_ms,
            "prefetch_models_loaded": self.prefetch_models_loaded,
            "miss_rate": self.miss_rate,
        }


def cache_frame(pov: PointOfView, manifest: LODManifest, cache: ModelCache, aspect: float = 1.0) -> dict:
    """Pin and materialize the visible set for pov, returning block handles.

    Raises CapacityError when the visible set cannot fit in the cache.
    """
    visible = select_visible(pov, manifest, aspect)
    if len(visible) > cache.capacity:
        raise CapacityError(
            f"visible set of {len(visible)} blocks exceeds cache capacity "
            f"{cache.capacity}"
        )
    cache.begin_frame(visible)
    return {addr: cache.fetch(addr) for addr in visible}


def prefetch_loop(
    history,
    manifest: LODManifest,
    cache: ModelCache,
    rendering_done: threading.Event,
    predictor,
    aspect: float = 1.0,
) -> int:
    """Best-effort load of the predicted next visible set during rendering.

    Checks rendering_done before every load and stops as soon as it is set;
    I/O failures are logged and skipped. Returns the number of blocks loaded.
    """
    if predictor is None or rendering_done.is_set():
        return 0
    predicted = predictor(list(history))
    if predicted is None:
        return 0
    loaded = 0
    for addr in select_visible(predicted, manifest, aspect):
        if rendering_done.is_set():
            break
        if addr in cache:
            continue
        try:
            cache.fetch(addr, record=False)
            loaded += 1
        except CapacityError:
            break
        except (OSError, FormatError) as exc:
            log.warning("prefetch skipped %s: %s", addr.key, exc)
    return loaded


def predict_static(history):
    """Predicts that the camera stays where it is."""
    return history[-1] if history else None


def predict_next_linear(history):
    """Constant-velocity extrapolation of position and direction."""
    if not history:
        return None
    if len(history) < 2:
        return history[-1]
    prev, last = history[-2], history[-1]
    pos = 2.0 * last.position - prev.position
    d = 2.0 * last.direction - prev.direction
    norm = np.linalg.norm(d)
    d = d / norm if norm > 1e-12 else last.direction
    try:
        return PointOfView(pos, d, last.up, last.fov_y)
    except ValueError:
        return PointOfView(pos, last.direction, last.up, last.fov_y)


PREDICTORS = {"off": None, "static": predict_static, "linear": predict_next_linear}


def replay(
    trajectory,
    manifest: LODManifest,
    cache: ModelCache,
    tf: TransferFunction,
    params: RenderParams,
    prefetch: str = "off",
    history_window: int = 8,
    keep_frames: bool = True,
):
    """Render a trajectory frame by frame with optional concurrent prefetch.

    Each frame times the caching step (visibility + loads + handle transfer)
    and the rendering step; input latency is their sum. The prefetcher runs
    on its own thread only while the frame renders.

    Returns (timings, frames, aggregate); frames is empty when keep_frames
    is false.
    """
    if prefetch not in PREDICTORS:
        raise ValueError(f"unknown prefetch mode {prefetch!r} (use off/static/linear)")
    predictor = PREDICTORS[prefetch]
    timings: list[FrameTiming] = []
    frames = []
    for i, pov in enumerate(trajectory):
        before = cache.counters()
        t0 = time.perf_counter()
        resident = cache_frame(pov, manifest, cache, params.aspect)
        caching_ms = (time.perf_counter() - t0) * 1000.0

        rendering_done = threading.Event()
        loaded_box = [0]
        worker = None
        if predictor is not None:
            history = list(trajectory[max(0, i - history_window + 1) : i + 1])

            def run_prefetch(history=history):
                loaded_box[0] = prefetch_loop(
                    history, manifest, cache, rendering_done, predictor, params.aspect
                )

            worker = threading.Thread(target=run_prefetch, daemon=True)
            worker.start()
        t1 = time.perf_counter()
        frame = render(pov, resident, tf, params)
        rendering_ms = (time.perf_counter() - t1) * 1000.0
        rendering_done.set()
        if worker is not None:
            worker.join()

        after = cache.counters()
        frame_hits = after["hits"] - before["hits"]
        frame_misses = after["misses"] - before["misses"]
        queries = frame_hits + frame_misses
        timings.append(
            FrameTiming(
                caching_ms=caching_ms,
                rendering_ms=rendering_ms,
                input_latency_ms=caching_ms + rendering_ms,
                prefetch_models_loaded=loaded_box[0],
                miss_rate=frame_misses / queries if queries else 0.0,
            )
        )
        if keep_frames:
            frames.append(frame)
    return timings, frames, aggregate_stats(timings)


def aggregate_stats(timings) -> dict:
    """Mean per-frame times and the aggregate miss rate over a replay."""
    if not timings:
        return {
            "frames": 0,
            "mean_caching_ms": None,
            "mean_rendering_ms": None,
            "mean_latency_ms": None,
            "miss_rate": None,
            "prefetch_models_loaded": 0,
        }
    return {
        "frames": len(timings),
        "mean_caching_ms": float(np.mean([t.caching_ms for t in timings])),
        "mean_rendering_ms": float(np.mean([t.rendering_ms for t in timings])),
        "mean_latency_ms": float(np.mean([t.input_latency_ms for t in timings])),
        "miss_rate": float(np.mean([t.miss_rate for t in timings])),
        "prefetch_models_loaded": int(sum(t.prefetch_models_loaded for t in timings)),
    }


def timings_rows(timings) -> list[dict]:
    """Per-frame rows ready for the JSON/CSV report writer."""
    return [dict(frame=i, **t.to_json()) for i, t in enumerate(timings)]


def save_trajectory(path, povs) -> None:
    """Write one JSON object per line: {pos, dir, up} plus fov_y if custom."""
    with Path(path).open("w") as fh:
        for pov in povs:
            obj = {
                "pos": pov.position.tolist(),
                "dir": pov.direction.tolist(),
                "up": pov.up.tolist(),
            }
            if pov.fov_y != 45.0:
                obj["fov_y"] = pov.fov_y
            fh.write(json.dumps(obj) + "\n")


def load_trajectory(path) -> list:
    povs = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            povs.append(PointOfView.from_json(obj))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise FormatError(f"bad trajectory line {line_no} in {path}: {exc}") from exc
    return povs


def orbit_trajectory(count: int, radius: float = 3.0, center=(0.0, 0.0, 0.0), fov_y: float = 45.0) -> list:
    """Equally spaced points of view circling the center in the xz plane."""
    center = np.asarray(center, dtype=np.float64)
    povs = []
    for k in range(count):
        angle = 2.0 * np.pi * k / count
        offset = np.array([np.sin(angle), 0.0, np.cos(angle)]) * radius
        pos = center + offset
        d = center - pos
        d /= np.linalg.norm(d)
        povs.append(PointOfView(pos, d, [0.0, 1.0, 0.0], fov_y))
    return povs
