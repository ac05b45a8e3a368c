"""Multi-resolution front-to-back ray casting on the normalized [-1,1] cube.

The renderer is backend-agnostic: anything with an extent and vectorized
values_at/gradients_at can be a resident block (spline models, raw blocks,
or the analytic-field adapter used for ground truth). Rays march in lockstep
across the whole frame; at every step the live samples are grouped by the
block that owns them so each block answers one batched query.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingBlockError
from .partition import BlockAddress, LODManifest
from .volume import AnalyticField

__all__ = [
    "PointOfView",
    "TransferFunction",
    "RenderParams",
    "Frame",
    "FieldBlock",
    "lod_for_distance",
    "default_lod_ranges",
    "select_visible",
    "render",
    "render_ground_truth",
]

DOMAIN_LO = -1.0
DOMAIN_HI = 1.0
# Half-open distance bands, 0.8 wide, one per level past the first.
LOD_BAND_WIDTH = 0.8


@dataclass(frozen=True)
class PointOfView:
    """Camera position and orientation in normalized world coordinates."""

    position: np.ndarray
    direction: np.ndarray
    up: np.ndarray
    fov_y: float = 45.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        u = np.asarray(self.up, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            raise ValueError("view direction has zero length")
        d = d / norm
        if np.linalg.norm(np.cross(d, u)) < 1e-9:
            raise ValueError("up vector is parallel to the view direction")
        if not 0 < self.fov_y < 180:
            raise ValueError(f"fov_y {self.fov_y} out of (0, 180)")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "up", u)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (forward, right, up) triad."""
        f = self.direction
        r = np.cross(f, self.up)
        r = r / np.linalg.norm(r)
        return f, r, np.cross(r, f)

    def to_json(self) -> dict:
        return {
            "pos": self.position.tolist(),
            "dir": self.direction.tolist(),
            "up": self.up.tolist(),
            "fov_y": self.fov_y,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PointOfView":
        return cls(
            position=np.asarray(obj["pos"], dtype=np.float64),
            direction=np.asarray(obj["dir"], dtype=np.float64),
            up=np.asarray(obj["up"], dtype=np.float64),
            fov_y=float(obj.get("fov_y", 45.0)),
        )


@dataclass(frozen=True)
class TransferFunction:
    """Piecewise-linear color and opacity maps over a scalar domain."""

    color_points: np.ndarray  # (n, 4): scalar, r, g, b
    opacity_points: np.ndarray  # (m, 2): scalar, alpha
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        cp = np.asarray(self.color_points, dtype=np.float64).reshape(-1, 4)
        op = np.asarray(self.opacity_points, dtype=np.float64).reshape(-1, 2)
        for pts, what in ((cp, "color"), (op, "opacity")):
            if len(pts) < 1:
                raise ValueError(f"need at least one {what} control point")
            if np.any(np.diff(pts[:, 0]) <= 0):
                raise ValueError(f"{what} control scalars must strictly increase")
            if pts[:, 1:].min() < 0 or pts[:, 1:].max() > 1:
                raise ValueError(f"{what} values must lie in [0,1]")
        if not self.domain[0] < self.domain[1]:
            raise ValueError("degenerate domain")
        object.__setattr__(self, "color_points", cp)
        object.__setattr__(self, "opacity_points", op)
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    def color_at(self, values: np.ndarray) -> np.ndarray:
        v = np.clip(values, *self.domain)
        s = self.color_points[:, 0]
        return np.stack([np.interp(v, s, self.color_points[:, c]) for c in (1, 2, 3)], axis=-1)

    def opacity_at(self, values: np.ndarray) -> np.ndarray:
        v = np.clip(values, *self.domain)
        return np.interp(v, self.opacity_points[:, 0], self.opacity_points[:, 1])

    def to_json(self) -> dict:
        return {
            "domain": list(self.domain),
            "color": self.color_points.tolist(),
            "opacity": self.opacity_points.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TransferFunction":
        return cls(
            color_points=np.asarray(obj["color"], dtype=np.float64),
            opacity_points=np.asarray(obj["opacity"], dtype=np.float64),
            domain=tuple(obj.get("domain", (0.0, 1.0))),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "TransferFunction":
        return cls.from_json(json.loads(Path(path).read_text()))

    @classmethod
    def ml_preset(cls) -> "TransferFunction":
        """Semi-transparent shell around the mid-value isosurface, warm inside."""
        return cls(
            color_points=np.array(
                [
                    [0.00, 0.10, 0.15, 0.60],
                    [0.35, 0.20, 0.55, 0.85],
                    [0.50, 0.95, 0.95, 0.90],
                    [0.65, 0.95, 0.55, 0.15],
                    [1.00, 0.80, 0.20, 0.10],
                ]
            ),
            opacity_points=np.array(
                [[0.00, 0.0], [0.38, 0.0], [0.50, 0.35], [0.62, 0.0], [1.00, 0.0]]
            ),
            domain=(0.0, 1.0),
        )


@dataclass
class RenderParams:
    width: int = 512
    height: int = 512
    sample_distance: float = 1e-3
    o_max: float = 0.99
    reference_step: float | None = None  # None: equals sample_distance
    near: float = 1e-3
    ambient: float = 0.1
    diffuse: float = 0.7
    specular: float = 0.2
    shininess: float = 32.0
    lod_ranges: tuple | None = None  # None: 0.8-wide bands per level

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("frame dimensions must be positive")
        if self.sample_distance <= 0:
            raise ValueError("sample distance must be positive")
        if not 0 < self.o_max <= 1:
            raise ValueError("o_max must be in (0, 1]")

    @property
    def aspect(self) -> float:
        return self.width / self.height


@dataclass
class Frame:
    width: int
    height: int
    rgba: np.ndarray  # (height, width, 4) uint8, row 0 at the top

    def __post_init__(self):
        rgba = np.asarray(self.rgba, dtype=np.uint8)
        if rgba.shape != (self.height, self.width, 4):
            raise ValueError(f"rgba shape {rgba.shape} != ({self.height}, {self.width}, 4)")
        self.rgba = rgba

    def save_png(self, path) -> None:
        Image.fromarray(self.rgba, mode="RGBA").save(Path(path), format="PNG")

    @classmethod
    def load_png(cls, path) -> "Frame":
        img = Image.open(Path(path)).convert("RGBA")
        rgba = np.asarray(img, dtype=np.uint8)
        return cls(width=img.width, height=img.height, rgba=rgba)

    def to_png_bytes(self) -> bytes:
        import io

        buf = io.BytesIO()
        Image.fromarray(self.rgba, mode="RGBA").save(buf, format="PNG")
        return buf.getvalue()


class FieldBlock:
    """Analytic field posing as a resident block spanning the whole domain."""

    def __init__(self, analytic: AnalyticField):
        self.field = analytic
        self.extent = np.array([[DOMAIN_LO, DOMAIN_HI]] * 3, dtype=np.float64)
        self.lod = 1
        bounds = np.asarray(analytic.bounds, dtype=np.float64)
        self._lo = bounds[:, 0]
        self._half_span = (bounds[:, 1] - bounds[:, 0]) / 2.0

    def _physical(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - DOMAIN_LO) / 2.0 * (2.0 * self._half_span) + self._lo

    def values_at(self, points: np.ndarray) -> np.ndarray:
        p = self._physical(points)
        return np.asarray(self.field.value_fn(p[:, 0], p[:, 1], p[:, 2]), dtype=np.float64)

    def gradients_at(self, points: np.ndarray) -> np.ndarray:
        p = self._physical(points)
        gx, gy, gz = self.field.gradient_fn(p[:, 0], p[:, 1], p[:, 2])
        # Chain rule: d(phys)/d(world) = half physical span per axis.
        return np.stack([gx, gy, gz], axis=1) * self._half_span


def default_lod_ranges(levels: int) -> np.ndarray:
    """Upper boundaries of the distance bands for levels 1..levels-1."""
    # 4k/5 rounds once, matching decimal literals like 2.4 exactly;
    # 0.8 * k would drift above them.
    return np.arange(1, levels) * 4.0 / 5.0


def lod_for_distance(d: float, levels: int, ranges=None) -> int:
    """Detail level wanted at centroid distance d (half-open upper bounds)."""
    if d < 0:
        raise ValueError("distance must be nonnegative")
    bands = default_lod_ranges(levels) if ranges is None else np.asarray(ranges)
    return int(np.searchsorted(bands, d, side="right")) + 1


def _frustum_planes(pov: PointOfView, aspect: float, near: float) -> list:
    """Five inward-pointing planes as (normal, offset): inside iff n·x >= off."""
    f, r, u = pov.basis()
    tan_y = math.tan(math.radians(pov.fov_y) / 2.0)
    tan_x = tan_y * aspect
    planes = [(f, float(f @ pov.position) + near)]
    for n in (tan_x * f + r, tan_x * f - r, tan_y * f + u, tan_y * f - u):
        planes.append((n, float(n @ pov.position)))
    return planes


def _box_outside_plane(extent: np.ndarray, normal: np.ndarray, offset: float) -> bool:
    # The box corner most aligned with the normal decides intersection.
    reach = np.where(normal >= 0, extent[:, 1], extent[:, 0])
    return float(reach @ normal) < offset


def select_visible(
    pov: PointOfView,
    manifest: LODManifest,
    aspect: float = 1.0,
    near: float = 1e-3,
    ranges=None,
) -> list[BlockAddress]:
    """Distance-driven traversal from the coarsest level plus frustum culling.

    A block is refined into its eight children while a finer level is wanted
    at its centroid distance; emitted blocks form a gap-free, overlap-free
    cover of the domain, filtered to those whose extent meets the frustum.
    """
    levels = manifest.levels
    coarsest = manifest.blocks_per_axis(levels)
    stack = [
        BlockAddress(levels, (i, j, k))
        for i in range(coarsest)
        for j in range(coarsest)
        for k in range(coarsest)
    ]
    emitted = []
    while stack:
        addr = stack.pop()
        extent = manifest.entries[addr].extent
        centroid = extent.mean(axis=1)
        d = float(np.linalg.norm(centroid - pov.position))
        if addr.lod > 1 and lod_for_distance(d, levels, ranges) < addr.lod:
            stack.extend(addr.children())
        else:
            emitted.append(addr)
    planes = _frustum_planes(pov, aspect, near)
    visible = [
        a
        for a in emitted
        if not any(
            _box_outside_plane(manifest.entries[a].extent, n, off) for n, off in planes
        )
    ]
    return sorted(visible)


def _ray_grid(pov: PointOfView, params: RenderParams) -> np.ndarray:
    """Unit ray directions for every pixel, shape (height*width, 3).

    Pixel (i, j) samples the image plane at (2j/W - 1, 1 - 2i/H), so doubling
    both dimensions leaves every original pixel center co-located at (2i, 2j).
    """
    f, r, u = pov.basis()
    tan_y = math.tan(math.radians(pov.fov_y) / 2.0)
    tan_x = tan_y * params.aspect
    xs = np.arange(params.width) / params.width * 2.0 - 1.0
    ys = 1.0 - np.arange(params.height) / params.height * 2.0
    px, py = np.meshgrid(xs * tan_x, ys * tan_y)
    dirs = f + px[..., None] * r + py[..., None] * u
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return dirs.reshape(-1, 3)


def _ray_box_span(origin: np.ndarray, dirs: np.ndarray, near: float):
    """Entry/exit distances of each ray against the [-1,1] cube."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_a = (DOMAIN_LO - origin) * inv
        t_b = (DOMAIN_HI - origin) * inv
    t_lo = np.fmin(t_a, t_b)
    t_hi = np.fmax(t_a, t_b)
    # Rays parallel to an axis inside the slab: +-inf from 0-division; fmin/
    # fmax drop NaNs from 0*inf only when the other operand is finite, so
    # patch the remaining NaNs (origin exactly on a face) conservatively.
    t_enter = np.nanmax(np.where(np.isnan(t_lo), -np.inf, t_lo), axis=1)
    t_exit = np.nanmin(np.where(np.isnan(t_hi), np.inf, t_hi), axis=1)
    t_enter = np.maximum(t_enter, near)
    return t_enter, t_exit


class _BlockIndex:
    """Maps sample positions to resident blocks via a finest-cell grid."""

    def __init__(self, blocks: dict):
        self.addrs = sorted(blocks)
        self.blocks = [blocks[a] for a in self.addrs]
        per_axis = [
            int(round((DOMAIN_HI - DOMAIN_LO) / (b.extent[0, 1] - b.extent[0, 0])))
            for b in self.blocks
        ]
        self.cells = max(per_axis) if per_axis else 1
        self.grid = np.full((self.cells,) * 3, -1, dtype=np.int32)
        for idx, (block, bpa) in enumerate(zip(self.blocks, per_axis)):
            width = self.cells // bpa
            lo = np.rint(
                (block.extent[:, 0] - DOMAIN_LO) / (DOMAIN_HI - DOMAIN_LO) * self.cells
            ).astype(int)
            sl = tuple(slice(lo[a], lo[a] + width) for a in range(3))
            self.grid[sl] = idx

    def owner_of(self, positions: np.ndarray) -> np.ndarray:
        scaled = (positions - DOMAIN_LO) / (DOMAIN_HI - DOMAIN_LO) * self.cells
        cell = np.clip(scaled.astype(np.intp), 0, self.cells - 1)
        return self.grid[cell[:, 0], cell[:, 1], cell[:, 2]], cell


def _shade(colors, grads, view_dirs, params):
    """Two-sided Blinn-Phong with a headlight; flat regions stay ambient."""
    norm = np.linalg.norm(grads, axis=1)
    lit = norm > 1e-12
    ndotl = np.zeros(len(grads))
    # Light and half vector both equal the view vector for a headlight.
    ndotl[lit] = np.abs(
        np.einsum("ij,ij->i", grads[lit] / norm[lit, None], -view_dirs[lit])
    )
    diffuse = params.diffuse * ndotl
    spec = params.specular * ndotl**params.shininess
    shaded = colors * (params.ambient + diffuse)[:, None] + spec[:, None]
    return np.clip(shaded, 0.0, 1.0)


def render(
    pov: PointOfView, blocks: dict, tf: TransferFunction, params: RenderParams
) -> Frame:
    """Front-to-back composite of the resident block set into an RGBA frame.

    blocks must cover every sample the rays take inside the domain (the
    visible set); a sample landing in an uncovered cell is a contract
    violation and raises MissingBlockError.
    """
    n_rays = params.width * params.height
    origin = pov.position
    dirs = _ray_grid(pov, params)
    t_enter, t_exit = _ray_box_span(origin, dirs, params.near)
    sd = params.sample_distance
    ref = params.reference_step if params.reference_step is not None else sd
    power = sd / ref

    color = np.zeros((n_rays, 3))
    alpha = np.zeros(n_rays)
    index = _BlockIndex(blocks)

    active = t_enter < t_exit
    step = 0
    while True:
        t = t_enter + (step + 0.5) * sd
        alive = active & (t < t_exit) & (alpha <= params.o_max)
        ids = np.flatnonzero(alive)
        if ids.size == 0:
            break
        pos = origin + t[ids, None] * dirs[ids]
        np.clip(pos, DOMAIN_LO, DOMAIN_HI, out=pos)
        owner, cell = index.owner_of(pos)
        if np.any(owner < 0):
            bad = int(np.flatnonzero(owner < 0)[0])
            raise MissingBlockError(
                f"no resident block covers sample {pos[bad].tolist()} "
                f"(finest cell {tuple(int(c) for c in cell[bad])}); "
                "the resident set does not cover the visible region"
            )
        values = np.empty(ids.size)
        grads = np.empty((ids.size, 3))
        order = np.argsort(owner, kind="stable")
        sorted_owner = owner[order]
        starts = np.flatnonzero(np.r_[True, np.diff(sorted_owner) > 0])
        bounds = np.r_[starts, sorted_owner.size]
        for gi in range(starts.size):
            rows = order[bounds[gi] : bounds[gi + 1]]
            block = index.blocks[sorted_owner[starts[gi]]]
            pts = pos[rows]
            values[rows] = block.values_at(pts)
            grads[rows] = block.gradients_at(pts)

        a_tf = tf.opacity_at(values)
        a_s = 1.0 - (1.0 - a_tf) ** power
        shaded = _shade(tf.color_at(values), grads, dirs[ids], params)
        remain = 1.0 - alpha[ids]
        color[ids] += (remain * a_s)[:, None] * shaded
        alpha[ids] += remain * a_s
        step += 1

    rgba = np.empty((n_rays, 4))
    rgba[:, :3] = color
    rgba[:, 3] = alpha
    quantized = np.clip(np.rint(rgba * 255.0), 0, 255).astype(np.uint8)
    return Frame(
        width=params.width,
        height=params.height,
        rgba=quantized.reshape(params.height, params.width, 4),
    )


def render_ground_truth(
    pov: PointOfView, analytic: AnalyticField, tf: TransferFunction, params: RenderParams
) -> Frame:
    """Reference frame sampled straight from the analytic field."""
    adapter = FieldBlock(analytic)
    return render(pov, {BlockAddress(1, (0, 0, 0)): adapter}, tf, params)
