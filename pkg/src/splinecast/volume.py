"""Scalar volumes, the Marschner-Lobb test field, and raw-file I/O.

Raw files are headerless little-endian float32 in x-fastest order, with a
JSON sidecar (``<file>.json``) carrying dims, physical bounds, and value
range. Sample (i, j, k) sits at flat offset i + nx·(j + ny·k).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import FormatError

__all__ = [
    "ScalarVolume",
    "AnalyticField",
    "ml_value",
    "ml_gradient",
    "marschner_lobb",
    "sample_grid",
    "ghost_overhead",
    "write_raw",
    "read_raw",
]

# Guard against accidentally materializing an out-of-core-sized grid in RAM.
MAX_GRID_SAMPLES = 512**3


@dataclass(frozen=True)
class ScalarVolume:
    """A dense regular grid of float32 samples with physical bounds.

    samples is indexed [i, j, k] for the x/y/z axes; bounds is (3, 2) with
    one (min, max) row per axis.
    """

    samples: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        bounds = np.asarray(self.bounds, dtype=np.float64).reshape(3, 2)
        if samples.ndim != 3 or min(samples.shape) < 2:
            raise ValueError(f"volume dims must be >= 2 per axis, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("volume contains non-finite samples")
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("degenerate physical bounds")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "bounds", bounds)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.samples.shape

    @property
    def value_range(self) -> tuple[float, float]:
        return float(self.samples.min()), float(self.samples.max())


@dataclass(frozen=True)
class AnalyticField:
    """A scalar field with closed-form value and gradient over physical coords.

    value_fn maps (x, y, z) arrays to values; gradient_fn to (gx, gy, gz).
    """

    value_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    gradient_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], tuple]
    bounds: np.ndarray


def ml_value(x, y, z, f_m: float = 6.0, alpha: float = 0.05):
    """Marschner-Lobb test field: a slow z ramp plus a high-frequency radial
    ripple of relative amplitude alpha, normalized into [0, 1]."""
    x, y, z = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), np.asarray(z, dtype=np.float64)
    r = np.hypot(x, y)
    rho = np.cos(2.0 * np.pi * f_m * np.cos(np.pi * r / 2.0))
    return (1.0 - np.sin(np.pi * z / 2.0) + alpha * (1.0 + rho)) / (2.0 * (1.0 + alpha))


def ml_gradient(x, y, z, f_m: float = 6.0, alpha: float = 0.05):
    """Closed-form partials of ml_value; the radial term is 0 at r=0 by symmetry."""
    x, y, z = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), np.asarray(z, dtype=np.float64)
    r = np.hypot(x, y)
    norm = 2.0 * (1.0 + alpha)
    phase = 2.0 * np.pi * f_m * np.cos(np.pi * r / 2.0)
    # d(rho)/dr = pi^2 f_m sin(phase) sin(pi r / 2)
    drho = np.pi**2 * f_m * np.sin(phase) * np.sin(np.pi * r / 2.0)
    radial = alpha * drho / norm
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(r > 0.0, x / np.where(r > 0.0, r, 1.0), 0.0)
        uy = np.where(r > 0.0, y / np.where(r > 0.0, r, 1.0), 0.0)
    gx = radial * ux
    gy = radial * uy
    gz = -np.cos(np.pi * z / 2.0) * (np.pi / 2.0) / norm
    shape = np.broadcast_shapes(np.shape(gx), np.shape(gz))
    return (
        np.broadcast_to(gx, shape).copy(),
        np.broadcast_to(gy, shape).copy(),
        np.broadcast_to(gz, shape).copy(),
    )


def marschner_lobb(
    f_m: float = 6.0,
    alpha: float = 0.05,
    bounds=((0.0, 7.0), (0.0, 7.0), (0.0, 7.0)),
) -> AnalyticField:
    """The ML field with its parameters baked in, over the given bounds."""

    def value(x, y, z):
        return ml_value(x, y, z, f_m, alpha)

    def gradient(x, y, z):
        return ml_gradient(x, y, z, f_m, alpha)

    return AnalyticField(value, gradient, np.asarray(bounds, dtype=np.float64))


def sample_grid(field: AnalyticField, dims) -> ScalarVolume:
    """Sample a field on a dims grid spanning its bounds inclusively."""
    dims = tuple(int(d) for d in dims)
    if min(dims) < 2:
        raise ValueError(f"dims must be >= 2 per axis, got {dims}")
    total = dims[0] * dims[1] * dims[2]
    if total > MAX_GRID_SAMPLES:
        raise MemoryError(
            f"grid of {total} samples exceeds the in-memory budget of {MAX_GRID_SAMPLES}"
        )
    axes = [np.linspace(field.bounds[a, 0], field.bounds[a, 1], dims[a]) for a in range(3)]
    xs, ys, zs = np.meshgrid(*axes, indexing="ij")
    return ScalarVolume(field.value_fn(xs, ys, zs).astype(np.float32), field.bounds)


def ghost_overhead(n: int, m: int) -> float:
    """Sample blow-up ratio (n+m)^3 / n^3 of partitioning n^3 into m^3 blocks
    that each carry one extra boundary sample per axis."""
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got n={n}, m={m}")
    return (n + m) ** 3 / n**3


def _sidecar(path: Path) -> Path:
    return Path(str(path) + ".json")


def write_raw(path, volume: ScalarVolume) -> None:
    """Write samples as little-endian float32, x-fastest, plus a JSON sidecar."""
    path = Path(path)
    volume.samples.astype("<f4").ravel(order="F").tofile(path)
    lo, hi = volume.value_range
    meta = {
        "dims": list(volume.dims),
        "bounds": volume.bounds.tolist(),
        "value_range": [lo, hi],
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2))


def read_raw(path, dims=None, bounds=None) -> ScalarVolume:
    """Read a raw volume; dims/bounds come from the sidecar unless given."""
    path = Path(path)
    if dims is None or bounds is None:
        side = _sidecar(path)
        if not side.exists():
            raise FormatError(f"missing sidecar {side} and no dims/bounds given")
        meta = json.loads(side.read_text())
        dims = dims or meta["dims"]
        bounds = bounds if bounds is not None else meta["bounds"]
    dims = tuple(int(d) for d in dims)
    expected = 4 * dims[0] * dims[1] * dims[2]
    actual = path.stat().st_size
    if actual != expected:
        raise FormatError(f"size mismatch for {path}: expected {expected} bytes, found {actual}")
    flat = np.fromfile(path, dtype="<f4")
    if not np.all(np.isfinite(flat)):
        raise FormatError(f"non-finite samples in {path}")
    return ScalarVolume(flat.reshape(dims, order="F"), np.asarray(bounds, dtype=np.float64))


def finite_difference_gradient(field: AnalyticField, x, y, z, step: float = 1e-5):
    """Central-difference gradient of a field; test oracle and sanity check."""
    gx = (field.value_fn(x + step, y, z) - field.value_fn(x - step, y, z)) / (2 * step)
    gy = (field.value_fn(x, y + step, z) - field.value_fn(x, y - step, z)) / (2 * step)
    gz = (field.value_fn(x, y, z + step) - field.value_fn(x, y, z - step)) / (2 * step)
    return gx, gy, gz
