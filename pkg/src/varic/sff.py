"""Approximate second fundamental form of point-cloud varifolds.

``beta`` reuses the curvature weights: for each ``(j, k)`` it is the
mean-curvature sum with every neighbour contribution multiplied by
``(P_l)_jk``::

    beta_ijk = (1/eps) sum_l w_il (P_l)_jk [Pi_il (x_l - x_i)]_i

``c`` is the eta-weighted average of neighbouring projectors and
``A_ijk = beta_ijk - c_jk ((I + c)^-1 H)_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import DENOM_FLOOR, _accumulate, curvature_from_interactions, interactions, pair_operator_vectors
from .kernels import KernelPair
from .neighbors import SpatialIndex
from .operators import OperatorSpec, as_spec
from .varifold import PointCloudVarifold

MAX_COND = 1e8


class SffError(ValueError):
    pass


@dataclass(frozen=True)
class SffField:
    """Per-row tensors ``beta[r, i, j, k]``, ``c[r, j, k]``, ``A[r, i, j, k]``."""

    rows: np.ndarray
    beta: np.ndarray
    c: np.ndarray
    A: np.ndarray
    H: np.ndarray
    valid: np.ndarray


def _rows(V, rows):
    return np.arange(V.N) if rows is None else np.unique(np.asarray(rows, dtype=np.int64))


def beta_field(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str, rows=None,
               index: SpatialIndex | None = None):
    """``(beta, valid)`` for the requested rows; invalid rows are zero."""
    spec = as_spec(spec)
    inter = interactions(V, pair, eps, rows=_rows(V, rows), index=index)
    vec = inter.omega[:, None] * pair_operator_vectors(V, spec, inter)
    contrib = vec[:, :, None, None] * V.tangents[inter.j][:, None, :, :]
    B = _accumulate(inter.slot(), contrib, len(inter.rows)) / inter.eps
    B[~inter.valid] = 0.0
    return B, inter.valid.copy()


def beta(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str, i: int):
    if not 0 <= i < V.N:
        raise IndexError(f"point index {i} out of range for {V.N} points")
    B, ok = beta_field(V, pair, eps, spec, rows=[i])
    return B[0], bool(ok[0])


def c_field(V: PointCloudVarifold, pair: KernelPair, eps: float, rows=None, index: SpatialIndex | None = None):
    """``(c, valid)``: eta-weighted averages of projectors over the eps-ball (self included)."""
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    rows = _rows(V, rows)
    if index is None or index.radius < eps or index.points.shape != V.points.shape:
        index = SpatialIndex(V.points, eps)
    i, j = index.pairs(eps, rows=rows, coincident=True)
    r = np.linalg.norm(V.points[j] - V.points[i], axis=1)
    slot = np.searchsorted(rows, i)
    m = V.masses
    w_self = m[rows] * pair.eta.value(np.zeros(len(rows)))
    w = m[j] * pair.eta.value(r / eps)
    den = w_self + np.bincount(slot, weights=w, minlength=len(rows))
    num = w_self[:, None, None] * V.tangents[rows] + _accumulate(slot, w[:, None, None] * V.tangents[j], len(rows))
    valid = den > DENOM_FLOOR * V.N
    c = np.where(valid[:, None, None], num / np.where(valid, den, 1.0)[:, None, None], 0.0)
    return c, valid


def c_matrix(V: PointCloudVarifold, pair: KernelPair, eps: float, i: int):
    if not 0 <= i < V.N:
        raise IndexError(f"point index {i} out of range for {V.N} points")
    c, ok = c_field(V, pair, eps, rows=[i])
    return c[0], bool(ok[0])


def assemble_A(beta_t, c, H) -> np.ndarray:
    """``A_ijk = beta_ijk - c_jk ((I + c)^-1 H)_i`` for one point.

    Raises :class:`SffError` when ``I + c`` has condition number above 1e8.
    """
    beta_t, c, H = (np.asarray(a, dtype=float) for a in (beta_t, c, H))
    n = len(H)
    M = np.eye(n) + c
    cond = np.linalg.cond(M)
    if not cond <= MAX_COND:
        raise SffError(f"I + c is singular or ill-conditioned (condition number {cond:.3g})")
    u = np.linalg.solve(M, H)
    return beta_t - u[:, None, None] * c[None, :, :]


def sff_field(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str = "S", rows=None,
              h_spec: OperatorSpec | str = "S") -> SffField:
    """beta (with ``spec``), c, and A using ``H`` computed with ``h_spec``.

    A point is valid when both beta and c are; A is zero elsewhere.
    """
    rows = _rows(V, rows)
    index = SpatialIndex(V.points, eps)
    B, okb = beta_field(V, pair, eps, spec, rows=rows, index=index)
    c, okc = c_field(V, pair, eps, rows=rows, index=index)
    H = curvature_from_interactions(V, as_spec(h_spec), interactions(V, pair, eps, rows=rows, index=index))
    valid = okb & okc
    A = np.zeros_like(B)
    for r in np.flatnonzero(valid):
        A[r] = assemble_A(B[r], c[r], H[r])
    H[~valid] = 0.0
    return SffField(rows, B, c, A, H, valid)
