"""Multi-level block partitioning with shared boundary samples.

Level 1 is the most detailed; each coarser level halves the block count per
axis. Block (i, j, k) at a level with per-axis span s covers sample indices
[i*s, (i+1)*s] inclusive, so face samples are shared with the next block and
the partition is C0 by construction. Every block is strided down to a common
micro resolution; corner and face samples survive striding exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, PartitionError
from .volume import ScalarVolume

__all__ = [
    "BlockAddress",
    "ManifestEntry",
    "LODManifest",
    "blocks_per_axis",
    "partition_level",
    "build_hierarchy",
    "suggest_dims",
]

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True, order=True)
class BlockAddress:
    """Level index (1 = highest detail) plus block coordinates in the level grid."""

    lod: int
    ijk: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "ijk", tuple(int(v) for v in self.ijk))
        if self.lod < 1:
            raise ValueError(f"lod must be >= 1, got {self.lod}")
        if len(self.ijk) != 3 or any(v < 0 for v in self.ijk):
            raise ValueError(f"bad block coordinates {self.ijk}")

    @property
    def key(self) -> str:
        i, j, k = self.ijk
        return f"{self.lod}/{i}_{j}_{k}"

    @classmethod
    def from_key(cls, key: str) -> "BlockAddress":
        lod, ijk = key.split("/")
        return cls(int(lod), tuple(int(v) for v in ijk.split("_")))

    @property
    def file_name(self) -> str:
        i, j, k = self.ijk
        return f"level-{self.lod}/{i}_{j}_{k}.mfa"

    def parent(self) -> "BlockAddress":
        """Containing block one level coarser (bipartite nesting)."""
        return BlockAddress(self.lod + 1, tuple(v // 2 for v in self.ijk))

    def children(self) -> "list[BlockAddress]":
        """The eight nested blocks one level finer."""
        if self.lod <= 1:
            raise ValueError("level 1 is the finest; no children")
        i, j, k = (2 * v for v in self.ijk)
        return [
            BlockAddress(self.lod - 1, (i + a, j + b, k + c))
            for a in (0, 1)
            for b in (0, 1)
            for c in (0, 1)
        ]


@dataclass
class ManifestEntry:
    """Per-block record; model fields stay None until encoding fills them."""

    extent: np.ndarray  # (3, 2) box in [-1, 1]^3 normalized domain coords
    path: str = ""
    ncp: int | None = None
    is_complex: bool | None = None
    nbytes: int | None = None

    def to_json(self) -> dict:
        return {
            "extent": np.asarray(self.extent).tolist(),
            "path": self.path,
            "ncp": self.ncp,
            "is_complex": self.is_complex,
            "nbytes": self.nbytes,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestEntry":
        return cls(
            extent=np.asarray(obj["extent"], dtype=np.float64),
            path=obj.get("path", ""),
            ncp=obj.get("ncp"),
            is_complex=obj.get("is_complex"),
            nbytes=obj.get("nbytes"),
        )


def blocks_per_axis(lod: int, levels: int, coarsest: int = 2) -> int:
    """Block count per axis at a level: coarsest doubled per finer level."""
    if not 1 <= lod <= levels:
        raise ValueError(f"lod {lod} outside 1..{levels}")
    return coarsest * 2 ** (levels - lod)


@dataclass
class LODManifest:
    """Index of every block in a multi-level store."""

    levels: int
    micro_dims: tuple[int, int, int]
    finest_blocks_per_axis: int
    volume_dims: tuple[int, int, int]
    bounds: np.ndarray  # (3, 2) physical bounds of the source volume
    degree: int | None = None
    error_bound: float | None = None
    kind: str = "mfa"  # "mfa" spline models or "ds" raw downsampled blocks
    ghost: int | None = None  # ghost layer width for "ds" stores
    entries: dict[BlockAddress, ManifestEntry] = field(default_factory=dict)

    def blocks_per_axis(self, lod: int) -> int:
        coarsest = self.finest_blocks_per_axis >> (self.levels - 1)
        return blocks_per_axis(lod, self.levels, coarsest)

    def addresses(self, lod: int | None = None) -> list[BlockAddress]:
        if lod is None:
            return sorted(self.entries)
        return sorted(a for a in self.entries if a.lod == lod)

    def total_model_bytes(self) -> int:
        sizes = [e.nbytes for e in self.entries.values()]
        if any(s is None for s in sizes):
            raise ValueError("manifest has unencoded blocks")
        return int(sum(sizes))

    def to_json(self) -> dict:
        return {
            "levels": self.levels,
            "micro_dims": list(self.micro_dims),
            "finest_blocks_per_axis": self.finest_blocks_per_axis,
            "volume_dims": list(self.volume_dims),
            "bounds": np.asarray(self.bounds).tolist(),
            "degree": self.degree,
            "error_bound": self.error_bound,
            "kind": self.kind,
            "ghost": self.ghost,
            "entries": {a.key: e.to_json() for a, e in sorted(self.entries.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LODManifest":
        try:
            manifest = cls(
                levels=int(obj["levels"]),
                micro_dims=tuple(int(v) for v in obj["micro_dims"]),
                finest_blocks_per_axis=int(obj["finest_blocks_per_axis"]),
                volume_dims=tuple(int(v) for v in obj["volume_dims"]),
                bounds=np.asarray(obj["bounds"], dtype=np.float64),
                degree=obj.get("degree"),
                error_bound=obj.get("error_bound"),
                kind=obj.get("kind", "mfa"),
                ghost=obj.get("ghost"),
            )
            for key, entry in obj["entries"].items():
                manifest.entries[BlockAddress.from_key(key)] = ManifestEntry.from_json(entry)
        except (KeyError, ValueError, TypeError) as err:
            raise FormatError(f"malformed manifest: {err}") from err
        return manifest

    def save(self, store_root) -> Path:
        root = Path(store_root)
        root.mkdir(parents=True, exist_ok=True)
        path = root / MANIFEST_NAME
        path.write_text(json.dumps(self.to_json(), indent=1))
        return path

    @classmethod
    def load(cls, store_root) -> "LODManifest":
        path = Path(store_root)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.exists():
            raise FormatError(f"no manifest at {path}")
        return cls.from_json(json.loads(path.read_text()))


def _as_triple(value) -> tuple[int, int, int]:
    arr = np.broadcast_to(np.asarray(value, dtype=int), (3,))
    return tuple(int(v) for v in arr)


def suggest_dims(dims, levels: int, micro_dims, coarsest: int = 2) -> tuple[int, int, int]:
    """Nearest valid dims at or above the given ones (pad by replication)."""
    micro = _as_triple(micro_dims)
    unit = [coarsest * 2 ** (levels - 1) * (m - 1) for m in micro]
    return tuple(
        int(u * max(1, -(-(d - 1) // u)) + 1) for d, u in zip(_as_triple(dims), unit)
    )


def _check_divisible(dims, bpa: int, micro) -> list[int]:
    """Per-axis stride, or raise with the nearest valid dims."""
    strides = []
    for d, m in zip(dims, micro):
        span, rem = divmod(d - 1, bpa)
        if rem or span % (m - 1) or span < m - 1:
            raise PartitionError(
                f"dims {tuple(dims)} do not split into {bpa} blocks/axis of "
                f"{tuple(micro)} samples; dims must be of the form "
                f"k*{bpa}*{m - 1}+1 per axis, e.g. "
                f"{tuple(bpa * (mm - 1) + 1 for mm in micro)} or "
                f"{tuple(2 * bpa * (mm - 1) + 1 for mm in micro)}"
            )
        strides.append(span // (m - 1))
    return strides


def _extent(ijk, bpa: int) -> np.ndarray:
    """Block box in [-1, 1]^3 normalized domain coordinates."""
    lo = np.asarray(ijk, dtype=np.float64) / bpa
    hi = (np.asarray(ijk, dtype=np.float64) + 1) / bpa
    return np.stack([2 * lo - 1, 2 * hi - 1], axis=1)


def partition_level(
    volume: ScalarVolume, lod: int, blocks_per_axis: int, micro_dims
) -> list[tuple[BlockAddress, ScalarVolume]]:
    """Cut one level into shared-boundary blocks strided to micro resolution."""
    micro = _as_triple(micro_dims)
    dims = volume.dims
    strides = _check_divisible(dims, blocks_per_axis, micro)
    spans = [(d - 1) // blocks_per_axis for d in dims]
    phys = volume.bounds[:, 0]
    phys_step = (volume.bounds[:, 1] - volume.bounds[:, 0]) / (np.asarray(dims) - 1)
    out = []
    for i in range(blocks_per_axis):
        for j in range(blocks_per_axis):
            for k in range(blocks_per_axis):
                ijk = (i, j, k)
                sl = tuple(
                    slice(c * spans[a], c * spans[a] + spans[a] + 1, strides[a])
                    for a, c in enumerate(ijk)
                )
                samples = np.ascontiguousarray(volume.samples[sl])
                lo_idx = np.array([c * spans[a] for a, c in enumerate(ijk)], dtype=np.float64)
                hi_idx = lo_idx + spans
                bounds = np.stack(
                    [phys + lo_idx * phys_step, phys + hi_idx * phys_step], axis=1
                )
                block = ScalarVolume(samples, bounds)
                out.append((BlockAddress(lod, ijk), block))
    return out


def build_hierarchy(
    volume: ScalarVolume, levels: int, micro_dims, coarsest: int = 2
) -> tuple[LODManifest, dict[BlockAddress, ScalarVolume]]:
    """Partition every level; return the manifest skeleton and the blocks.

    The manifest carries addresses and extents only; the encoder fills ncp,
    flags, paths, and byte sizes.
    """
    if levels < 1:
        raise ValueError("need at least one level")
    if coarsest < 1:
        raise ValueError("coarsest blocks per axis must be >= 1")
    micro = _as_triple(micro_dims)
    finest = coarsest * 2 ** (levels - 1)
    # Validate against the finest level up front so the error names the real
    # constraint instead of failing halfway through.
    try:
        _check_divisible(volume.dims, finest, micro)
    except PartitionError:
        good = suggest_dims(volume.dims, levels, micro, coarsest)
        raise PartitionError(
            f"dims {volume.dims} incompatible with {levels} levels of "
            f"{micro} micro-blocks ({finest} blocks/axis at the finest level); "
            f"nearest valid dims: {good} (pad by edge replication)"
        ) from None

    manifest = LODManifest(
        levels=levels,
        micro_dims=micro,
        finest_blocks_per_axis=finest,
        volume_dims=volume.dims,
        bounds=np.asarray(volume.bounds, dtype=np.float64),
    )
    blocks: dict[BlockAddress, ScalarVolume] = {}
    for lod in range(1, levels + 1):
        bpa = blocks_per_axis(lod, levels, coarsest)
        for addr, block in partition_level(volume, lod, bpa, micro):
            manifest.entries[addr] = ManifestEntry(extent=_extent(addr.ijk, bpa))
            blocks[addr] = block
    return manifest, blocks
