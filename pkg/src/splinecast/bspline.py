"""Uniform clamped B-spline bases and separable tensor-product least squares.

Everything here works on the unit parameter interval. Knot vectors are
clamped (first/last degree+1 knots pinned to 0/1) with uniformly spaced
interior knots, and sample parameterization is uniform; both are deliberate,
documented conventions of the on-disk model format.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "clamped_knots",
    "find_spans",
    "basis_values",
    "basis_values_and_derivatives",
    "collocation_matrix",
    "fit_tensor_product",
    "decode_tensor_product",
    "evaluate_points",
    "evaluate_points_with_gradient",
]


def clamped_knots(ncp: int, degree: int) -> np.ndarray:
    """Full clamped knot vector of length ncp+degree+1 on [0, 1]."""
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    if ncp < degree + 1:
        raise ValueError(f"ncp must be >= degree+1 ({degree + 1}), got {ncp}")
    interior = np.arange(1, ncp - degree, dtype=np.float64) / (ncp - degree)
    return np.concatenate(
        [np.zeros(degree + 1), interior, np.ones(degree + 1)]
    )


def find_spans(knots: np.ndarray, ncp: int, degree: int, u: np.ndarray) -> np.ndarray:
    """Knot span index per parameter: k with knots[k] <= u < knots[k+1].

    u == 1 maps into the last non-empty span so clamped-end evaluation works.
    """
    spans = np.searchsorted(knots, u, side="right") - 1
    return np.clip(spans, degree, ncp - 1)


def basis_values(knots: np.ndarray, degree: int, spans: np.ndarray, u: np.ndarray) -> np.ndarray:
    """The degree+1 nonzero basis functions at each u; shape (len(u), degree+1).

    Column j holds N_{span-degree+j, degree}(u). Standard Cox-de Boor
    left/right recurrence, vectorized over the points.
    """
    n = u.shape[0]
    left = np.empty((n, degree + 1))
    right = np.empty((n, degree + 1))
    vals = np.zeros((n, degree + 1))
    vals[:, 0] = 1.0
    for j in range(1, degree + 1):
        left[:, j] = u - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - u
        saved = np.zeros(n)
        for r in range(j):
            tmp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * tmp
            saved = left[:, j - r] * tmp
        vals[:, j] = saved
    return vals


def basis_values_and_derivatives(
    knots: np.ndarray, degree: int, spans: np.ndarray, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero basis functions and their first derivatives at each u.

    Derivatives come from the degree-reduction identity
    N'_{i,p} = p·(N_{i,p-1}/(t_{i+p}-t_i) − N_{i+1,p-1}/(t_{i+p+1}-t_{i+1})).
    """
    vals = basis_values(knots, degree, spans, u)
    n = u.shape[0]
    ders = np.zeros((n, degree + 1))
    if degree == 0:
        return vals, ders
    low = basis_values(knots, degree - 1, spans, u)  # N_{span-degree+1..span, degree-1}
    for j in range(degree + 1):
        i = spans - degree + j
        term = np.zeros(n)
        if j > 0:
            term = low[:, j - 1] / (knots[i + degree] - knots[i])
        if j < degree:
            term = term - low[:, j] / (knots[i + degree + 1] - knots[i + 1])
        ders[:, j] = degree * term
    return vals, ders


def collocation_matrix(params: np.ndarray, knots: np.ndarray, ncp: int, degree: int) -> np.ndarray:
    """Dense matrix B with B[i, j] = N_j(params[i]); shape (len(params), ncp)."""
    params = np.asarray(params, dtype=np.float64)
    spans = find_spans(knots, ncp, degree, params)
    vals = basis_values(knots, degree, spans, params)
    b = np.zeros((params.shape[0], ncp))
    cols = spans[:, None] - degree + np.arange(degree + 1)[None, :]
    b[np.arange(params.shape[0])[:, None], cols] = vals
    return b


@lru_cache(maxsize=512)
def _axis_operator(m: int, ncp: int, degree: int):
    """Cached per-axis fitting operator for m uniform samples -> ncp coefficients.

    The two end control points are pinned to the end samples (endpoint-
    constrained least squares), so fitted blocks reproduce corner samples
    exactly and neighbors sharing face samples get identical face coefficients.
    Returns (B, interior_cols, cho_factor) with interior_cols possibly empty.
    """
    params = np.linspace(0.0, 1.0, m)
    knots = clamped_knots(ncp, degree)
    b = collocation_matrix(params, knots, ncp, degree)
    if ncp <= 2:
        return b, None, None
    bi = b[:, 1:-1]
    factor = cho_factor(bi.T @ bi)
    return b, bi, factor


def fit_tensor_product(values: np.ndarray, ncp: int, degree: int) -> np.ndarray:
    """Separable least-squares spline fit of a sample grid.

    values has one uniform parameter axis per array axis; the result is the
    (ncp, ncp, ncp) coefficient grid minimizing the tensor-product residual
    subject to pinned end coefficients per axis.
    """
    coeff = np.asarray(values, dtype=np.float64)
    if coeff.ndim != 3:
        raise ValueError("expected a 3D sample grid")
    for axis in range(3):
        m = coeff.shape[axis]
        if not degree + 1 <= ncp <= m:
            raise ValueError(f"ncp must be in [{degree + 1}, {m}] for axis {axis}, got {ncp}")
        moved = np.moveaxis(coeff, axis, 0)
        rest = moved.shape[1:]
        flat = moved.reshape(m, -1)
        sol = _fit_axis(flat, ncp, degree)
        coeff = np.moveaxis(sol.reshape((ncp,) + rest), 0, axis)
    return coeff


def _fit_axis(data: np.ndarray, ncp: int, degree: int) -> np.ndarray:
    """Constrained 1D fit of each column of data; shape (m, k) -> (ncp, k)."""
    m = data.shape[0]
    b, bi, factor = _axis_operator(m, ncp, degree)
    first, last = data[0], data[-1]
    if bi is None:  # ncp == 2: both coefficients pinned
        return np.stack([first, last])
    rhs = data - np.outer(b[:, 0], first) - np.outer(b[:, -1], last)
    interior = cho_solve(factor, bi.T @ rhs)
    return np.concatenate([first[None, :], interior, last[None, :]])


def decode_tensor_product(coeff: np.ndarray, degree: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Evaluate a coefficient grid back onto a uniform dims sample grid."""
    out = np.asarray(coeff, dtype=np.float64)
    ncp = coeff.shape[0]
    for axis in range(3):
        b, _, _ = _axis_operator(dims[axis], ncp, degree)
        moved = np.moveaxis(out, axis, 0)
        rest = moved.shape[1:]
        flat = b @ moved.reshape(moved.shape[0], -1)
        out = np.moveaxis(flat.reshape((dims[axis],) + rest), 0, axis)
    return out


def _gather_local(coeff: np.ndarray, degree: int, idx: list[np.ndarray]) -> np.ndarray:
    """Control points feeding each query: shape (n, degree+1, degree+1, degree+1)."""
    offs = np.arange(degree + 1)
    ox = idx[0][:, None, None, None] + offs[None, :, None, None]
    oy = idx[1][:, None, None, None] + offs[None, None, :, None]
    oz = idx[2][:, None, None, None] + offs[None, None, None, :]
    return coeff[ox, oy, oz]


def _per_axis_basis(coeff_shape, degree, u, want_derivatives, knots=None):
    ncp = coeff_shape[0]
    if coeff_shape[1] != ncp or coeff_shape[2] != ncp:
        raise ValueError("coefficient grid must be cubic (isotropic ncp)")
    if knots is None:
        shared = clamped_knots(ncp, degree)
        knots = (shared, shared, shared)
    vals, ders, idx = [], [], []
    for axis in range(3):
        kv = np.asarray(knots[axis], dtype=np.float64)
        ua = np.clip(u[:, axis], 0.0, 1.0)
        spans = find_spans(kv, ncp, degree, ua)
        if want_derivatives:
            v, d = basis_values_and_derivatives(kv, degree, spans, ua)
            ders.append(d)
        else:
            v = basis_values(kv, degree, spans, ua)
        vals.append(v)
        idx.append(spans - degree)
    return vals, ders, idx


def evaluate_points(coeff: np.ndarray, degree: int, u: np.ndarray, knots=None) -> np.ndarray:
    """Spline values at parameters u (n, 3); out-of-range parameters clamp.

    knots is an optional triple of full per-axis vectors; default uniform.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    vals, _, idx = _per_axis_basis(coeff.shape, degree, u, False, knots)
    local = _gather_local(np.asarray(coeff, dtype=np.float64), degree, idx)
    return np.einsum("nabc,na,nb,nc->n", local, vals[0], vals[1], vals[2])


def evaluate_points_with_gradient(
    coeff: np.ndarray, degree: int, u: np.ndarray, knots=None
) -> tuple[np.ndarray, np.ndarray]:
    """Spline values and parameter-space gradients at u; gradient shape (n, 3)."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    vals, ders, idx = _per_axis_basis(coeff.shape, degree, u, True, knots)
    local = _gather_local(np.asarray(coeff, dtype=np.float64), degree, idx)
    value = np.einsum("nabc,na,nb,nc->n", local, vals[0], vals[1], vals[2])
    grad = np.empty((u.shape[0], 3))
    grad[:, 0] = np.einsum("nabc,na,nb,nc->n", local, ders[0], vals[1], vals[2])
    grad[:, 1] = np.einsum("nabc,na,nb,nc->n", local, vals[0], ders[1], vals[2])
    grad[:, 2] = np.einsum("nabc,na,nb,nc->n", local, vals[0], vals[1], ders[2])
    return value, grad
