"""Adaptive per-block control-point search and cross-level pruned encoding.

Each block gets the smallest control-point count (NCP) whose reconstruction
RMSE beats the error bound, found by sweeping NCP from the block edge length
down to the mathematical minimum degree+1. A block is complex when it needs
more than the minimum. Coarse levels are searched first; a finer block is
only worth searching when the coarser block containing it was complex,
otherwise it is encoded directly at the minimum NCP.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model
from .partition import BlockAddress, LODManifest, build_hierarchy
from .volume import ScalarVolume

__all__ = [
    "ErrorProfile",
    "SearchResult",
    "EncodeStats",
    "error_rmse",
    "in_level_search",
    "cross_level_encode",
    "compression_ratio",
    "encode_volume",
]


@dataclass
class ErrorProfile:
    """NCP -> reconstruction RMSE for one block (dense for a full sweep)."""

    rmse_by_ncp: dict[int, float] = field(default_factory=dict)

    def record(self, ncp: int, rmse: float) -> None:
        self.rmse_by_ncp[int(ncp)] = float(rmse)


@dataclass
class SearchResult:
    ncp_star: int
    profile: ErrorProfile
    is_complex: bool
    met_bound: bool
    model: model.MicroModel


@dataclass
class EncodeStats:
    """Bookkeeping the acceptance checks and CLI report on."""

    total_blocks: int = 0
    searched_blocks: int = 0
    searched_by_level: dict[int, int] = field(default_factory=dict)
    complex_by_level: dict[int, int] = field(default_factory=dict)
    unmet_blocks: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "total_blocks": self.total_blocks,
            "searched_blocks": self.searched_blocks,
            "searched_by_level": {str(k): v for k, v in sorted(self.searched_by_level.items())},
            "complex_by_level": {str(k): v for k, v in sorted(self.complex_by_level.items())},
            "unmet_blocks": list(self.unmet_blocks),
        }


def error_rmse(samples: np.ndarray, block_model: model.MicroModel) -> float:
    """RMSE between the model decoded on the sample lattice and the samples."""
    decoded = block_model.decode_grid(samples.shape)
    diff = decoded - np.asarray(samples, dtype=np.float64)
    return float(np.sqrt(np.mean(diff * diff)))


def _fit_and_measure(samples, ncp, degree, extent, lod):
    m = model.fit(samples, ncp=ncp, degree=degree, extent=extent, lod=lod)
    return m, error_rmse(samples, m)


def in_level_search(
    samples: np.ndarray,
    error_bound: float,
    degree: int,
    extent=((0.0, 1.0),) * 3,
    lod: int = 1,
    assume_monotone: bool = False,
) -> SearchResult:
    """Find the smallest NCP whose RMSE beats the bound for one block.

    The full sweep records every NCP from the edge length down to degree+1;
    RMSE need not be monotone in NCP, so minimality is exact. With
    assume_monotone a bisection probes O(log n) NCPs instead and is only as
    good as the monotonicity assumption.
    """
    if error_bound <= 0:
        raise ValueError("error bound must be positive")
    samples = np.asarray(samples)
    n = samples.shape[0]
    ncp_min = degree + 1
    if n < ncp_min:
        raise ValueError(f"block edge {n} below minimum NCP {ncp_min}")
    profile = ErrorProfile()
    fits: dict[int, model.MicroModel] = {}

    if assume_monotone:
        lo, hi = ncp_min, n
        while lo < hi:
            mid = (lo + hi) // 2
            m, rmse = _fit_and_measure(samples, mid, degree, extent, lod)
            profile.record(mid, rmse)
            fits[mid] = m
            if rmse < error_bound:
                hi = mid
            else:
                lo = mid + 1
        candidate = lo
        if candidate not in fits:
            m, rmse = _fit_and_measure(samples, candidate, degree, extent, lod)
            profile.record(candidate, rmse)
            fits[candidate] = m
        met = profile.rmse_by_ncp[candidate] < error_bound
        ncp_star = candidate if met else n
    else:
        ncp_star, met = n, False
        for ncp in range(n, ncp_min - 1, -1):
            m, rmse = _fit_and_measure(samples, ncp, degree, extent, lod)
            profile.record(ncp, rmse)
            fits[ncp] = m
            if rmse < error_bound:
                ncp_star, met = ncp, True
        if not met:
            ncp_star = n

    if not met:
        warnings.warn(
            f"error bound {error_bound:g} unmeetable for block "
            f"(best rmse {min(profile.rmse_by_ncp.values()):.3g}); using ncp={n}",
            RuntimeWarning,
            stacklevel=2,
        )
    if ncp_star not in fits:  # bisection landing on n without having fit it
        fits[ncp_star], rmse = _fit_and_measure(samples, ncp_star, degree, extent, lod)
        profile.record(ncp_star, rmse)
    return SearchResult(
        ncp_star=ncp_star,
        profile=profile,
        is_complex=ncp_star > ncp_min,
        met_bound=met,
        model=fits[ncp_star],
    )


def _encode_fixed(samples, ncp, degree, extent, lod):
    m, rmse = _fit_and_measure(samples, ncp, degree, extent, lod)
    profile = ErrorProfile()
    profile.record(ncp, rmse)
    return m, profile, rmse


def cross_level_encode(
    manifest: LODManifest,
    blocks: dict[BlockAddress, ScalarVolume],
    error_bound: float,
    degree: int = 2,
    mode: str = "adaptive",
    assume_monotone: bool = False,
    workers: int | None = None,
) -> tuple[dict[BlockAddress, model.MicroModel], EncodeStats]:
    """Encode every block of a hierarchy, coarsest level first.

    Modes: "adaptive" prunes the in-level search to children of complex
    blocks; "exhaustive" searches every block; "fixed:<ncp>" skips searching
    and fits everything at one NCP. The manifest's ncp/flag/size fields are
    filled in place; file paths are left for the store writer. Results are
    deterministic regardless of worker count.
    """
    if mode not in ("adaptive", "exhaustive") and not mode.startswith("fixed:"):
        raise ValueError(f"unknown encode mode {mode!r}")
    stats = EncodeStats(total_blocks=len(blocks))
    models: dict[BlockAddress, model.MicroModel] = {}
    complex_at: set[BlockAddress] = set()
    ncp_min = degree + 1
    manifest.degree = degree
    manifest.error_bound = error_bound

    def search_one(addr: BlockAddress) -> SearchResult:
        entry = manifest.entries[addr]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = in_level_search(
                blocks[addr].samples,
                error_bound,
                degree,
                extent=entry.extent,
                lod=addr.lod,
                assume_monotone=assume_monotone,
            )
        if not result.met_bound:
            for w in caught:
                warnings.warn(f"{addr.key}: {w.message}", RuntimeWarning, stacklevel=3)
        return result

    # Coarsest to finest with a hard barrier: level L's complex set must be
    # final before level L-1 chooses what to search.
    for lod in range(manifest.levels, 0, -1):
        addrs = manifest.addresses(lod)
        if mode == "adaptive":
            searched = [
                a for a in addrs if lod == manifest.levels or a.parent() in complex_at
            ]
        elif mode == "exhaustive":
            searched = list(addrs)
        else:
            searched = []
        skipped = [a for a in addrs if a not in set(searched)]

        results: dict[BlockAddress, SearchResult] = {}
        if searched:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for addr, res in zip(searched, pool.map(search_one, searched)):
                    results[addr] = res
        fixed_ncp = int(mode.split(":", 1)[1]) if mode.startswith("fixed:") else ncp_min

        for addr in addrs:  # deterministic manifest fill order
            entry = manifest.entries[addr]
            if addr in results:
                res = results[addr]
                models[addr] = res.model
                entry.ncp = res.ncp_star
                entry.is_complex = res.is_complex
                if not res.met_bound:
                    stats.unmet_blocks.append(addr.key)
                if res.is_complex:
                    complex_at.add(addr)
                stats.searched_blocks += 1
                stats.searched_by_level[lod] = stats.searched_by_level.get(lod, 0) + 1
            else:
                ncp = min(max(fixed_ncp, ncp_min), blocks[addr].samples.shape[0])
                m, _, _ = _encode_fixed(
                    blocks[addr].samples, ncp, degree, entry.extent, addr.lod
                )
                models[addr] = m
                entry.ncp = ncp
                entry.is_complex = False
            entry.nbytes = model.serialized_size(entry.ncp, degree)
        stats.complex_by_level[lod] = sum(
            1 for a in addrs if manifest.entries[a].is_complex
        )
    return models, stats


def compression_ratio(manifest: LODManifest, raw_bytes: int) -> float:
    """Raw volume bytes over the byte total of every model, all levels."""
    return raw_bytes / manifest.total_model_bytes()


def encode_volume(
    vol: ScalarVolume,
    levels: int,
    micro_dims,
    degree: int = 2,
    error_bound: float = 1e-4,
    coarsest: int = 2,
    mode: str = "adaptive",
    assume_monotone: bool = False,
    workers: int | None = None,
):
    """Partition + encode in one call; returns (manifest, models, stats)."""
    manifest, blocks = build_hierarchy(vol, levels, micro_dims, coarsest=coarsest)
    models, stats = cross_level_encode(
        manifest,
        blocks,
        error_bound,
        degree=degree,
        mode=mode,
        assume_monotone=assume_monotone,
        workers=workers,
    )
    return manifest, models, stats
