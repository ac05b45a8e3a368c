"""Block spline models: fitting, random-access queries, byte-exact files.

On disk a model is [1 byte degree][3·(ncp+degree) float32 knots][ncp³ float32
control points], all little-endian, giving 1 + ((ncp+degree)·3 + ncp³)·4
bytes. The stored knots per axis are t1..t_{ncp+degree} of the full clamped
vector; the leading t0 = 0 is implicit. ncp itself travels in the manifest,
not the file. Control points are x-fastest. See FORMAT.md.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bspline
from .errors import FormatError

__all__ = ["MicroModel", "fit", "serialized_size", "serialize", "deserialize"]


def serialized_size(ncp: int, degree: int) -> int:
    """Exact on-disk byte count of a model file."""
    return 1 + ((ncp + degree) * 3 + ncp**3) * 4


@dataclass(frozen=True)
class MicroModel:
    """One encoded micro-block: a clamped tensor-product B-spline patch."""

    degree: int
    knots: np.ndarray  # (3, ncp+degree+1) float32, full clamped vectors
    control: np.ndarray  # (ncp, ncp, ncp) float32
    extent: np.ndarray  # (3, 2) block box in normalized volume coords
    lod: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float32)
        control = np.asarray(self.control, dtype=np.float32)
        extent = np.asarray(self.extent, dtype=np.float64).reshape(3, 2)
        ncp = control.shape[0]
        if control.shape != (ncp, ncp, ncp):
            raise ValueError(f"control grid must be cubic, got {control.shape}")
        if knots.shape != (3, ncp + self.degree + 1):
            raise ValueError(
                f"knot vectors must be (3, {ncp + self.degree + 1}), got {knots.shape}"
            )
        if not np.all(np.isfinite(control)):
            raise ValueError("non-finite control points")
        if np.any(extent[:, 1] <= extent[:, 0]):
            raise ValueError("degenerate extent")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "control", control)
        object.__setattr__(self, "extent", extent)

    @property
    def ncp(self) -> int:
        return self.control.shape[0]

    @property
    def nbytes(self) -> int:
        return serialized_size(self.ncp, self.degree)

    def params_for(self, points: np.ndarray) -> np.ndarray:
        """Map normalized-volume points (n, 3) to extent-local parameters."""
        lo = self.extent[:, 0]
        span = self.extent[:, 1] - self.extent[:, 0]
        return np.clip((np.atleast_2d(points) - lo) / span, 0.0, 1.0)

    def query_value(self, u: np.ndarray) -> np.ndarray:
        """Spline values at extent-local parameters u (n, 3) or (3,)."""
        return bspline.evaluate_points(self.control, self.degree, u, self.knots)

    def query_gradient(self, u: np.ndarray) -> np.ndarray:
        """Gradient in normalized volume coordinates at parameters u."""
        _, grad = bspline.evaluate_points_with_gradient(
            self.control, self.degree, u, self.knots
        )
        return grad / (self.extent[:, 1] - self.extent[:, 0])

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Values at normalized-volume points (renderer backend hook)."""
        return self.query_value(self.params_for(points))

    def gradients_at(self, points: np.ndarray) -> np.ndarray:
        """Gradients at normalized-volume points (renderer backend hook)."""
        return self.query_gradient(self.params_for(points))

    def decode_grid(self, dims) -> np.ndarray:
        """Evaluate on the uniform dims grid the block was fitted from."""
        return bspline.decode_tensor_product(
            self.control.astype(np.float64), self.degree, tuple(dims)
        )


def fit(samples: np.ndarray, ncp: int, degree: int, extent, lod: int) -> MicroModel:
    """Least-squares tensor-product fit of a micro-block sample grid."""
    samples = np.asarray(samples)
    knots = bspline.clamped_knots(ncp, degree).astype(np.float32)
    control = bspline.fit_tensor_product(samples, ncp, degree)
    return MicroModel(
        degree=degree,
        knots=np.repeat(knots[None, :], 3, axis=0),
        control=control.astype(np.float32),
        extent=np.asarray(extent, dtype=np.float64),
        lod=lod,
    )


def serialize(model: MicroModel) -> bytes:
    """Pack a model into its exact binary layout."""
    if not 0 <= model.degree <= 255:
        raise FormatError(f"degree {model.degree} does not fit the header byte")
    parts = [bytes([model.degree])]
    for axis in range(3):
        parts.append(model.knots[axis, 1:].astype("<f4").tobytes())
    parts.append(model.control.astype("<f4").ravel(order="F").tobytes())
    return b"".join(parts)


def deserialize(data: bytes, ncp: int, extent, lod: int) -> MicroModel:
    """Unpack a model file; ncp comes from the manifest, degree from byte 0."""
    if len(data) < 1:
        raise FormatError("empty micro-model byte string")
    degree = data[0]
    if degree >= ncp:
        raise FormatError(f"degree byte {degree} >= ncp {ncp}")
    expected = serialized_size(ncp, degree)
    if len(data) != expected:
        raise FormatError(
            f"micro-model length mismatch: expected {expected} bytes "
            f"for ncp={ncp}, degree={degree}, found {len(data)}"
        )
    stored = ncp + degree
    knots = np.empty((3, stored + 1), dtype=np.float32)
    knots[:, 0] = 0.0
    off = 1
    for axis in range(3):
        knots[axis, 1:] = np.frombuffer(data, dtype="<f4", count=stored, offset=off)
        off += stored * 4
    control = np.frombuffer(data, dtype="<f4", count=ncp**3, offset=off)
    return MicroModel(
        degree=int(degree),
        knots=knots,
        control=control.reshape((ncp, ncp, ncp), order="F").copy(),
        extent=np.asarray(extent, dtype=np.float64),
        lod=lod,
    )
