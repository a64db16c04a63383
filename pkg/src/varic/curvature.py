"""Approximate mean curvature of point-cloud varifolds.

For a point ``x_i`` the estimator is::

    H_i = (1/eps) * sum_{j != i} w_ij * Pi_ij @ (x_j - x_i)
    w_ij = -(C_xi/C_rho) * m_j * rho'(r_ij/eps) / (r_ij * D_i)
    D_i  = sum_l m_l * xi(r_il/eps)

with ``Pi_ij`` the operator compiled from ``(T, S) = (P_i, P_j)``.  For a
natural kernel pair ``C_xi/C_rho = d/n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import KernelPair, constant_ratio
from .neighbors import SpatialIndex
from .operators import OperatorSpec, apply_operator, as_spec, compile_operator
from .varifold import PointCloudVarifold

DENOM_FLOOR = 1e-300


@lru_cache(maxsize=64)
def _ratio(pair: KernelPair, d: int) -> float:
    return constant_ratio(pair, d)


@dataclass(frozen=True)
class Interactions:
    """Weighted neighbour pairs of a set of evaluation rows at scale ``eps``.

    ``i``/``j`` are sorted by ``(i, j)``; ``omega`` are the flow weights
    ``w_ij`` (without the ``1/eps`` factor).
    """

    rows: np.ndarray
    i: np.ndarray
    j: np.ndarray
    diff: np.ndarray
    r: np.ndarray
    omega: np.ndarray
    denominators: np.ndarray
    valid: np.ndarray
    eps: float

    def slot(self) -> np.ndarray:
        return np.searchsorted(self.rows, self.i)


def interactions(V: PointCloudVarifold, pair: KernelPair, eps: float, rows=None,
                 tangential: bool = False, index: SpatialIndex | None = None) -> Interactions:
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    N = V.N
    rows = np.arange(N) if rows is None else np.unique(np.asarray(rows, dtype=np.int64))
    if index is None or index.radius < eps or index.points.shape != V.points.shape:
        index = SpatialIndex(V.points, eps)
    i, j = index.pairs(eps, rows=rows, coincident=True)
    diff = V.points[j] - V.points[i]
    r = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    slot = np.searchsorted(rows, i)
    m = V.masses

    denom = m[rows] * pair.xi.value(np.zeros(len(rows)))
    denom = denom + np.bincount(slot, weights=m[j] * pair.xi.value(r / eps), minlength=len(rows))

    keep = r > 0
    i, j, diff, r, slot = i[keep], j[keep], diff[keep], r[keep], slot[keep]
    has_nb = np.bincount(slot, minlength=len(rows)) > 0
    valid = has_nb & (denom > DENOM_FLOOR * N)

    if tangential:
        Pi = V.tangents[i]
        tdiff = np.einsum("kab,kb->ka", Pi, diff)
        rad = np.sqrt(np.einsum("ij,ij->i", tdiff, tdiff))
        use = rad >= 1e-14 * eps
        i, j, diff, r, slot, rad = i[use], j[use], diff[use], r[use], slot[use], rad[use]
    else:
        rad = r

    ratio = _ratio(pair, V.d)
    safe = np.where(valid, denom, 1.0)
    omega = -ratio * m[j] * pair.rho.derivative(rad / eps) / (rad * safe[slot])
    omega = np.where(valid[slot], omega, 0.0)
    return Interactions(rows, i, j, diff, r, omega, denom, valid, float(eps))


def _accumulate(slot: np.ndarray, vecs: np.ndarray, size: int) -> np.ndarray:
    """Per-row sums in pair order (ascending neighbour index)."""
    out = np.zeros((size,) + vecs.shape[1:])
    if len(vecs) == 0:
        return out
    flat = vecs.reshape(len(vecs), -1)
    acc = out.reshape(size, -1)
    for c in range(flat.shape[1]):
        acc[:, c] = np.bincount(slot, weights=flat[:, c], minlength=size)
    return out


def pair_operator_vectors(V: PointCloudVarifold, spec: OperatorSpec, inter: Interactions) -> np.ndarray:
    """``Pi_ij @ (x_j - x_i)`` for every pair."""
    if not spec.uses_tangents:
        return apply_operator(spec, np.zeros((0, V.n, V.n)), np.zeros((0, V.n, V.n)), inter.diff)
    return apply_operator(spec, V.tangents[inter.i], V.tangents[inter.j], inter.diff)


def pair_operator_matrices(V: PointCloudVarifold, spec: OperatorSpec, inter: Interactions) -> np.ndarray:
    return compile_operator(spec, V.tangents[inter.i], V.tangents[inter.j])


@dataclass(frozen=True)
class CurvatureField:
    H: np.ndarray
    denominators: np.ndarray
    valid: np.ndarray
    rows: np.ndarray


def curvature_from_interactions(V, spec, inter: Interactions) -> np.ndarray:
    contrib = inter.omega[:, None] * pair_operator_vectors(V, spec, inter)
    H = _accumulate(inter.slot(), contrib, len(inter.rows)) / inter.eps
    H[~inter.valid] = 0.0
    return H


def mean_curvature_field(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str,
                         rows=None, tangential: bool = False, index=None) -> CurvatureField:
    """Approximate mean curvature at every point (or at ``rows``)."""
    spec = as_spec(spec)
    inter = interactions(V, pair, eps, rows=rows, tangential=tangential, index=index)
    H = curvature_from_interactions(V, spec, inter)
    return CurvatureField(H, inter.denominators, inter.valid, inter.rows)


def mean_curvature(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str,
                   i: int) -> tuple[np.ndarray, bool]:
    if not 0 <= i < V.N:
        raise IndexError(f"point index {i} out of range for {V.N} points")
    f = mean_curvature_field(V, pair, eps, spec, rows=[i])
    return f.H[0], bool(f.valid[0])


def mean_curvature_tangential(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str,
                              i: int) -> tuple[np.ndarray, bool]:
    """Variant whose kernel sees only the tangential offset ``|P_i (x_j - x_i)|``.

    Damps the influence of neighbours displaced along the normal.
    """
    if not 0 <= i < V.N:
        raise IndexError(f"point index {i} out of range for {V.N} points")
    f = mean_curvature_field(V, pair, eps, spec, rows=[i], tangential=True)
    return f.H[0], bool(f.valid[0])


def weighted_radius(inter: Interactions) -> np.ndarray:
    """``(1/eps) sum_j w_ij r_ij^2`` per row; equals ``d`` for natural pairs."""
    return _accumulate(inter.slot(), inter.omega * inter.r**2, len(inter.rows)) / inter.eps
