"""Down-sampling comparison pipeline: raw blocks, trilinear queries, ghosts.

Blocks mirror the spline store's partitioning but keep raw strided samples,
optionally padded by a one-voxel ghost layer pulled from the neighboring
region of the source (clamped replication at volume edges). Values come from
trilinear interpolation; gradients from trilinear-interpolated clipped-index
central differences. Without the ghost layer the clipped index halves the
difference stencil at block faces, which is exactly the cross-boundary
shading artifact this baseline exists to demonstrate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import FormatError
from .partition import (
    BlockAddress,
    LODManifest,
    ManifestEntry,
    _as_triple,
    _check_divisible,
    _extent,
    blocks_per_axis,
)
from .volume import ScalarVolume

__all__ = [
    "DsBlock",
    "DS_HEADER_BYTES",
    "serialize_ds",
    "deserialize_ds",
    "build_ds_store",
    "write_ds_store",
    "load_ds_block",
]

DS_HEADER_BYTES = 16  # three uint32 sample dims plus uint32 ghost width


@dataclass(frozen=True)
class DsBlock:
    """Raw samples (interior plus ghost) with trilinear query semantics."""

    samples: np.ndarray  # (nx+2g, ny+2g, nz+2g) float32
    ghost: int
    extent: np.ndarray  # (3, 2) box of the interior lattice, [-1,1]^3 coords
    lod: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        extent = np.asarray(self.extent, dtype=np.float64).reshape(3, 2)
        if self.ghost not in (0, 1):
            raise ValueError("ghost width must be 0 or 1")
        if any(d <= 2 * self.ghost + 1 for d in samples.shape):
            raise ValueError(f"sample array {samples.shape} too small for ghost {self.ghost}")
        if np.any(extent[:, 1] <= extent[:, 0]):
            raise ValueError("degenerate extent")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "extent", extent)

    @property
    def interior_dims(self) -> tuple[int, int, int]:
        return tuple(d - 2 * self.ghost for d in self.samples.shape)

    @property
    def nbytes(self) -> int:
        return DS_HEADER_BYTES + self.samples.size * 4

    @cached_property
    def _gradient_grids(self) -> np.ndarray:
        """Clipped-index central differences at interior lattice points.

        Shape (3, nx, ny, nz), in units of value per index step. With a ghost
        layer every stencil is a true central difference; without one the
        clipped index at block faces halves the derivative there.
        """
        n = self.interior_dims
        g = self.ghost
        grids = np.empty((3,) + n, dtype=np.float64)
        top = np.array(self.samples.shape) - 1
        for axis in range(3):
            idx = np.arange(n[axis]) + g
            plus = np.minimum(idx + 1, top[axis])
            minus = np.maximum(idx - 1, 0)
            take_plus = [slice(g, g + n[a]) for a in range(3)]
            take_minus = list(take_plus)
            take_plus[axis] = plus
            take_minus[axis] = minus
            grids[axis] = (
                self.samples[tuple(take_plus)].astype(np.float64)
                - self.samples[tuple(take_minus)]
            ) / 2.0
        return grids

    def _continuous_index(self, points: np.ndarray) -> np.ndarray:
        """Map world points to continuous interior-lattice indices."""
        lo = self.extent[:, 0]
        span = self.extent[:, 1] - self.extent[:, 0]
        u = np.clip((np.atleast_2d(points) - lo) / span, 0.0, 1.0)
        n = np.array(self.interior_dims)
        return u * (n - 1)

    def values_at(self, points: np.ndarray) -> np.ndarray:
        x = self._continuous_index(points) + self.ghost
        return _trilinear(self.samples, x)

    def gradients_at(self, points: np.ndarray) -> np.ndarray:
        x = self._continuous_index(points)
        grids = self._gradient_grids
        span = self.extent[:, 1] - self.extent[:, 0]
        scale = (np.array(self.interior_dims) - 1) / span
        out = np.empty((x.shape[0], 3))
        for axis in range(3):
            out[:, axis] = _trilinear(grids[axis], x) * scale[axis]
        return out


def _trilinear(grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Standard trilinear interpolation at continuous indices x (n, 3)."""
    top = np.array(grid.shape) - 1
    base = np.clip(np.floor(x).astype(np.intp), 0, np.maximum(top - 1, 0))
    f = x - base
    i, j, k = base[:, 0], base[:, 1], base[:, 2]
    i1, j1, k1 = np.minimum(i + 1, top[0]), np.minimum(j + 1, top[1]), np.minimum(k + 1, top[2])
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    c00 = grid[i, j, k] * (1 - fx) + grid[i1, j, k] * fx
    c10 = grid[i, j1, k] * (1 - fx) + grid[i1, j1, k] * fx
    c01 = grid[i, j, k1] * (1 - fx) + grid[i1, j, k1] * fx
    c11 = grid[i, j1, k1] * (1 - fx) + grid[i1, j1, k1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def serialize_ds(block: DsBlock) -> bytes:
    header = struct.pack("<4I", *block.samples.shape, block.ghost)
    return header + block.samples.astype("<f4").ravel(order="F").tobytes()


def deserialize_ds(data: bytes, extent, lod: int) -> DsBlock:
    if len(data) < DS_HEADER_BYTES:
        raise FormatError("truncated block file: header missing")
    nx, ny, nz, ghost = struct.unpack_from("<4I", data)
    expected = DS_HEADER_BYTES + nx * ny * nz * 4
    if len(data) != expected:
        raise FormatError(
            f"block length mismatch: expected {expected} bytes for dims "
            f"({nx},{ny},{nz}), found {len(data)}"
        )
    samples = np.frombuffer(data, dtype="<f4", offset=DS_HEADER_BYTES)
    return DsBlock(
        samples=samples.reshape((nx, ny, nz), order="F").copy(),
        ghost=int(ghost),
        extent=np.asarray(extent, dtype=np.float64),
        lod=lod,
    )


def _extract_ghosted(volume: ScalarVolume, lo, span, stride, micro, ghost: int):
    """Strided block samples plus ghost layers, clamped at volume edges."""
    axes = []
    for a in range(3):
        idx = lo[a] + stride[a] * np.arange(-ghost, micro[a] + ghost)
        axes.append(np.clip(idx, 0, volume.dims[a] - 1))
    return np.ascontiguousarray(volume.samples[np.ix_(*axes)])


def build_ds_store(
    vol: ScalarVolume, levels: int, micro_dims, coarsest: int = 2, ghost: int = 1
) -> tuple[LODManifest, dict[BlockAddress, DsBlock]]:
    """Partition every level into raw ghosted blocks; mirrors the spline store."""
    micro = _as_triple(micro_dims)
    finest = coarsest * 2 ** (levels - 1)
    _check_divisible(vol.dims, finest, micro)
    manifest = LODManifest(
        levels=levels,
        micro_dims=micro,
        finest_blocks_per_axis=finest,
        volume_dims=vol.dims,
        bounds=np.asarray(vol.bounds, dtype=np.float64),
        kind="ds",
        ghost=ghost,
    )
    blocks: dict[BlockAddress, DsBlock] = {}
    for lod in range(1, levels + 1):
        bpa = blocks_per_axis(lod, levels, coarsest)
        strides = _check_divisible(vol.dims, bpa, micro)
        spans = [(d - 1) // bpa for d in vol.dims]
        for i in range(bpa):
            for j in range(bpa):
                for k in range(bpa):
                    addr = BlockAddress(lod, (i, j, k))
                    lo = [c * s for c, s in zip((i, j, k), spans)]
                    samples = _extract_ghosted(vol, lo, spans, strides, micro, ghost)
                    extent = _extent(addr.ijk, bpa)
                    block = DsBlock(samples=samples, ghost=ghost, extent=extent, lod=lod)
                    blocks[addr] = block
                    manifest.entries[addr] = ManifestEntry(
                        extent=extent, nbytes=block.nbytes
                    )
    return manifest, blocks


def write_ds_store(store_root, manifest: LODManifest, blocks: dict) -> Path:
    root = Path(store_root)
    for addr in sorted(blocks):
        entry = manifest.entries[addr]
        rel = addr.file_name.replace(".mfa", ".dsb")
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        blob = serialize_ds(blocks[addr])
        target.write_bytes(blob)
        entry.path = rel
        entry.nbytes = len(blob)
    manifest.save(root)
    return root


def load_ds_block(store_root, manifest: LODManifest, addr: BlockAddress) -> DsBlock:
    entry = manifest.entries.get(addr)
    if entry is None or not entry.path:
        raise FormatError(f"manifest has no block file for {addr.key}")
    path = Path(store_root) / entry.path
    if not path.exists():
        raise FormatError(f"missing block file {path}")
    return deserialize_ds(path.read_bytes(), extent=entry.extent, lod=addr.lod)
