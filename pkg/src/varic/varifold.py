"""Point-cloud varifolds ``V = sum_i m_i delta_(x_i, P_i)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neighbors import SpatialIndex


class VarifoldError(ValueError):
    pass


class InsufficientNeighborsError(VarifoldError):
    def __init__(self, indices):
        self.indices = [int(i) for i in indices]
        shown = ", ".join(map(str, self.indices[:20]))
        more = "" if len(self.indices) <= 20 else f" (+{len(self.indices) - 20} more)"
        super().__init__(f"points with too few neighbours for a tangent estimate: {shown}{more}")


def projector_defects(P: np.ndarray, d: int) -> tuple[float, float, float]:
    """(symmetry, idempotence, trace) defects of a stack of matrices, worst case."""
    P = np.asarray(P, dtype=float)
    if P.ndim == 2:
        P = P[None]
    if len(P) == 0:
        return 0.0, 0.0, 0.0
    sym = np.abs(P - np.swapaxes(P, -1, -2)).max()
    idem = np.sqrt(((P @ P - P) ** 2).sum(axis=(-1, -2))).max()
    tr = np.abs(np.trace(P, axis1=-2, axis2=-1) - d).max()
    return float(sym), float(idem), float(tr)


def check_projectors(P: np.ndarray, d: int, tol: float = 1e-10) -> None:
    sym, idem, tr = projector_defects(P, d)
    if sym > 1e-2 * tol or idem > tol or tr > tol:
        raise VarifoldError(
            f"invalid rank-{d} projector: symmetry {sym:.3g}, idempotence {idem:.3g}, trace {tr:.3g}")


def projector_onto(basis: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span of ``basis`` (n x d)."""
    q, _ = np.linalg.qr(np.atleast_2d(basis))
    P = q @ q.T
    return 0.5 * (P + P.T)


def uniform_masses(N: int, total: float = 1.0) -> np.ndarray:
    if N < 1:
        raise VarifoldError(f"need at least one point, got N={N}")
    if not total > 0:
        raise VarifoldError(f"total mass must be positive, got {total}")
    return np.full(N, total / N)


@dataclass(frozen=True)
class PointCloudVarifold:
    points: np.ndarray
    masses: np.ndarray
    tangents: np.ndarray
    d: int

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise VarifoldError(f"points must be an (N, n) array, got shape {pts.shape}")
        N, n = pts.shape
        m = np.array(self.masses, dtype=float).reshape(-1)
        P = np.array(self.tangents, dtype=float)
        if not 1 <= self.d < n:
            raise VarifoldError(f"need 1 <= d < n, got d={self.d}, n={n}")
        if m.shape != (N,):
            raise VarifoldError(f"expected {N} masses, got {m.shape}")
        if np.any(~(m > 0)):
            raise VarifoldError("masses must be positive")
        if P.shape != (N, n, n):
            raise VarifoldError(f"expected tangents of shape {(N, n, n)}, got {P.shape}")
        for arr in (pts, m, P):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "tangents", P)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def N(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.N

    def validate(self, tol: float = 1e-10) -> None:
        check_projectors(self.tangents, self.d, tol)

    def with_points(self, points) -> PointCloudVarifold:
        return PointCloudVarifold(points, self.masses, self.tangents, self.d)

    def replace(self, points=None, masses=None, tangents=None) -> PointCloudVarifold:
        return PointCloudVarifold(
            self.points if points is None else points,
            self.masses if masses is None else masses,
            self.tangents if tangents is None else tangents,
            self.d,
        )

    def transformed(self, R: np.ndarray, shift=None) -> PointCloudVarifold:
        """Image under ``x -> R x + shift`` (R orthogonal); projectors map to ``R P R^T``."""
        R = np.asarray(R, dtype=float)
        pts = self.points @ R.T
        if shift is not None:
            pts = pts + np.asarray(shift, dtype=float)
        P = np.einsum("ab,ibc,dc->iad", R, self.tangents, R)
        return PointCloudVarifold(pts, self.masses, P, self.d)


def _sign_convention(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its first non-negligible component is positive."""
    out = vecs.copy()
    for k in range(out.shape[-1]):
        col = out[..., :, k]
        big = np.abs(col) > 1e-12
        first = np.argmax(big, axis=-1)
        lead = np.take_along_axis(col, first[..., None], axis=-1)[..., 0]
        out[..., :, k] = col * np.where(lead < 0, -1.0, 1.0)[..., None]
    return out


def _pca_projectors(points, masses, i, j, d, rows):
    n = points.shape[1]
    diff = points[j] - points[i]
    w = masses[j]
    cov = np.zeros((len(rows), n, n))
    slot = np.searchsorted(rows, i)
    np.add.at(cov, slot, w[:, None, None] * diff[:, :, None] * diff[:, None, :])
    evals, evecs = np.linalg.eigh(cov)
    # eigh sorts ascending; take the top-d block, largest first
    top = evecs[..., ::-1][..., :d]
    top = _sign_convention(top)
    P = top @ np.swapaxes(top, -1, -2)
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def estimate_tangents_pca(points, masses, radius: float, d: int, rows=None, strict: bool = True,
                          fallback=None) -> np.ndarray:
    """Projectors onto the top-``d`` principal directions of mass-weighted neighbour offsets.

    Neighbours are the points within ``radius`` (the point itself excluded).
    With ``strict`` an :class:`InsufficientNeighborsError` lists every point
    that has fewer than ``d`` neighbours; otherwise those points keep the
    matching entry of ``fallback``.
    """
    points = np.asarray(points, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if not radius > 0:
        raise VarifoldError("radius must be positive")
    N, n = points.shape
    rows = np.arange(N) if rows is None else np.asarray(rows, dtype=np.int64)
    index = SpatialIndex(points, radius)
    i, j = index.pairs(radius, rows=rows)
    counts = np.bincount(np.searchsorted(rows, i), minlength=len(rows))
    bad = rows[counts < d]
    if len(bad) and strict:
        raise InsufficientNeighborsError(bad)
    P = _pca_projectors(points, masses, i, j, d, rows)
    if len(bad):
        if fallback is None:
            raise InsufficientNeighborsError(bad)
        fb = np.asarray(fallback, dtype=float)
        sel = counts < d
        P[sel] = fb[rows[sel]]
    return P


def pca_varifold(points, radius: float, d: int, masses=None) -> PointCloudVarifold:
    points = np.asarray(points, dtype=float)
    m = uniform_masses(len(points)) if masses is None else np.asarray(masses, dtype=float)
    return PointCloudVarifold(points, m, estimate_tangents_pca(points, m, radius, d), d)
