"""Samplers for analytic test shapes and their exact mean curvature vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64
from .varifold import PointCloudVarifold, uniform_masses

SHAPES = ("circle", "sphere", "torus", "segment", "plane")
ON_SHAPE_TOL = 1e-8
GOLDEN = (1 + 5**0.5) / 2


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeSampler:
    """Description of a sampled shape.

    ``radius`` is the circle/sphere radius or the torus major radius,
    ``minor_radius`` the torus tube radius and ``extent`` the side length of
    segments and plane patches (centred on ``center``).  Spheres in R^3 use a
    Fibonacci lattice (``lattice="fibonacci"``, uniform masses) or a
    colatitude/longitude grid (``lattice="uv"``) whose masses are the area
    elements, so that kernel sums become smooth product quadratures away from
    the poles; the uv grid has ``nlat * 2 nlat`` points with
    ``nlat = round(sqrt(N / 2))``.  ``jitter`` perturbs
    the parameter lattice by that fraction of a cell; ``noise`` displaces each
    point along the analytic normal by a uniform amount in ``[-noise, noise]``.
    """

    shape: str
    N: int
    radius: float = 1.0
    minor_radius: float = 0.5
    n: int = 2
    d: int | None = None
    center: tuple[float, ...] | None = None
    extent: float = 2.0
    jitter: float = 0.0
    noise: float = 0.0
    seed: int = 0
    lattice: str = "fibonacci"

    @property
    def dim(self) -> int:
        if self.shape in ("circle", "segment"):
            return 1
        if self.shape == "torus":
            return 2
        if self.shape == "sphere":
            return self.n - 1
        return self.d if self.d is not None else self.n - 1

    @property
    def ambient(self) -> int:
        if self.center is not None:
            return len(self.center)
        return 3 if self.shape == "torus" else self.n

    def origin(self) -> np.ndarray:
        return np.zeros(self.ambient) if self.center is None else np.asarray(self.center, dtype=float)


def _random_rotation(rng: SplitMix64, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(n * n).reshape(n, n))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _validate(s: ShapeSampler) -> None:
    if s.shape not in SHAPES:
        raise ShapeError(f"unknown shape {s.shape!r}; expected one of {SHAPES}")
    if s.N < 1:
        raise ShapeError("N must be positive")
    n = s.ambient
    if s.shape == "circle" and n < 2:
        raise ShapeError("circle needs n >= 2")
    if s.shape == "sphere" and n < 2:
        raise ShapeError("sphere needs n >= 2")
    if s.lattice not in ("fibonacci", "uv"):
        raise ShapeError(f"unknown lattice {s.lattice!r}")
    if s.lattice == "uv" and not (s.shape == "sphere" and n == 3):
        raise ShapeError("the uv lattice is only available for spheres in R^3")
    if s.shape == "torus" and n != 3:
        raise ShapeError("torus is only supported in R^3")
    if s.shape == "torus" and not 0 < s.minor_radius < s.radius:
        raise ShapeError("torus needs 0 < minor_radius < radius")
    if s.shape == "plane" and not 1 <= s.dim < n:
        raise ShapeError(f"plane patch needs 1 <= d < n, got d={s.dim}, n={n}")
    if s.shape == "segment" and n < 2:
        raise ShapeError("segment needs n >= 2")


def _frame(s: ShapeSampler, rng: SplitMix64):
    """Points, unit normals used for noise, and tangent projectors (centred at 0)."""
    n, N = s.ambient, s.N
    if s.shape == "circle" or (s.shape == "sphere" and n == 2):
        u = rng.uniform(N, -0.5, 0.5) * s.jitter
        theta = 2 * np.pi * (np.arange(N) + u) / N
        radial = np.zeros((N, n))
        radial[:, 0], radial[:, 1] = np.cos(theta), np.sin(theta)
        t = np.zeros((N, n))
        t[:, 0], t[:, 1] = -np.sin(theta), np.cos(theta)
        return s.radius * radial, radial, t[:, :, None] * t[:, None, :]
    if s.shape == "sphere":
        if n == 3 and s.lattice == "uv":
            nlat = max(2, round(math.sqrt(N / 2)))
            theta = np.pi * (np.arange(nlat) + 0.5) / nlat
            phi = 2 * np.pi * (np.arange(2 * nlat) + rng.uniform(1)[0]) / (2 * nlat)
            th, ph = (a.ravel() for a in np.meshgrid(theta, phi, indexing="ij"))
            unit = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
        elif n == 3:
            k = np.arange(N) + 0.5 + s.jitter * rng.uniform(N, -0.5, 0.5)
            z = 1 - 2 * k / N
            phi = 2 * np.pi * np.arange(N) / GOLDEN
            rho = np.sqrt(np.clip(1 - z * z, 0.0, None))
            unit = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
            unit = unit @ _random_rotation(rng, 3).T
        else:
            unit = rng.normal(N * n).reshape(N, n)
        unit /= np.linalg.norm(unit, axis=1, keepdims=True)
        P = np.eye(n) - unit[:, :, None] * unit[:, None, :]
        return s.radius * unit, unit, P
    if s.shape == "torus":
        R, r = s.radius, s.minor_radius
        offset = rng.uniform(1)[0]
        u = 2 * np.pi * (np.arange(N) + s.jitter * rng.uniform(N, -0.5, 0.5)) / N
        v = 2 * np.pi * np.mod(np.arange(N) / GOLDEN + offset, 1.0)
        nu = np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=1)
        pts = np.stack([(R + r * np.cos(v)) * np.cos(u), (R + r * np.cos(v)) * np.sin(u), r * np.sin(v)], axis=1)
        P = np.eye(3) - nu[:, :, None] * nu[:, None, :]
        return pts, nu, P
    d = s.dim
    m = max(1, round(N ** (1.0 / d)))
    if m**d != N:
        raise ShapeError(f"{s.shape} sampling needs N to be a perfect {d}-th power, got {N}")
    h = s.extent / m
    axes = (np.arange(m) + 0.5) * h - s.extent / 2
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid + s.jitter * h * rng.uniform(N * d, -0.5, 0.5).reshape(N, d)
    pts = np.zeros((N, n))
    pts[:, :d] = grid
    normal = np.zeros((N, n))
    normal[:, d] = 1.0
    P = np.zeros((N, n, n))
    P[:, range(d), range(d)] = 1.0
    return pts, normal, P


def sample_shape(s: ShapeSampler) -> PointCloudVarifold:
    """Varifold sampled from the shape with exact tangent projectors (uniform masses except on uv grids)."""
    _validate(s)
    rng = SplitMix64(s.seed)
    pts, normal, P = _frame(s, rng)
    if s.noise:
        pts = pts + s.noise * rng.uniform(s.N, -1.0, 1.0)[:, None] * normal
    pts = pts + s.origin()
    if s.lattice == "uv":
        # midpoint-rule area element sin(theta) dtheta dphi
        w = np.linalg.norm(normal[:, :2], axis=1)
        masses = w / w.sum()
    else:
        masses = uniform_masses(len(pts))
    return PointCloudVarifold(pts, masses, P, s.dim)


def shape_residual(s: ShapeSampler, points) -> np.ndarray:
    """Distance-like residual of the implicit shape equation (zero on the shape)."""
    x = np.atleast_2d(np.asarray(points, dtype=float)) - s.origin()
    n = x.shape[1]
    if s.shape == "circle":
        return np.abs(np.hypot(x[:, 0], x[:, 1]) - s.radius) + np.linalg.norm(x[:, 2:], axis=1)
    if s.shape == "sphere":
        return np.abs(np.linalg.norm(x, axis=1) - s.radius)
    if s.shape == "torus":
        rho = np.hypot(x[:, 0], x[:, 1])
        return np.abs((rho - s.radius) ** 2 + x[:, 2] ** 2 - s.minor_radius**2)
    d = s.dim
    off = np.linalg.norm(x[:, d:], axis=1)
    outside = np.clip(np.abs(x[:, :d]).max(axis=1) - s.extent / 2, 0.0, None)
    return off + outside if n > d else outside


def analytic_mean_curvature(s: ShapeSampler, point) -> np.ndarray:
    """Exact mean curvature vector (sum of principal curvatures, pointing inward)."""
    _validate(s)
    x = np.asarray(point, dtype=float)
    res = shape_residual(s, x)
    if np.any(res > ON_SHAPE_TOL):
        raise ShapeError(f"point off the {s.shape} (residual {float(res.max()):.3g})")
    y = np.atleast_2d(x) - s.origin()
    if s.shape in ("circle", "sphere"):
        d = s.dim
        H = -d * y / s.radius**2
        if s.shape == "circle":
            H[:, 2:] = 0.0
    elif s.shape == "torus":
        rho = np.hypot(y[:, 0], y[:, 1])
        axis = np.stack([y[:, 0] / rho, y[:, 1] / rho, np.zeros(len(y))], axis=1)
        tube = y - s.radius * axis
        nu = tube / s.minor_radius
        cos_v = (rho - s.radius) / s.minor_radius
        kappa = 1 / s.minor_radius + cos_v / (s.radius + s.minor_radius * cos_v)
        H = -kappa[:, None] * nu
    else:
        H = np.zeros_like(y)
    return H.reshape(np.shape(x))


def probe_indices(s: ShapeSampler, count: int = 16, margin: float = 0.0, points=None) -> np.ndarray:
    """``count`` fixed pseudo-random sample indices, seeded by the sampler seed.

    For patches and segments only points at least ``margin`` inside the
    boundary are eligible.
    """
    rng = SplitMix64(s.seed ^ 0x5EED)
    if s.shape in ("plane", "segment"):
        pts = sample_shape(s).points if points is None else np.asarray(points)
        local = pts - s.origin()
        ok = np.flatnonzero(np.abs(local[:, :s.dim]).max(axis=1) <= s.extent / 2 - margin)
    elif s.lattice == "uv":
        # keep kernel supports away from the singular poles of the grid
        pts = sample_shape(s).points if points is None else np.asarray(points)
        colat = np.arccos(np.clip((pts[:, 2] - s.origin()[2]) / s.radius, -1.0, 1.0))
        cap = 2 * math.asin(min(1.0, margin / (2 * s.radius))) + 0.3
        ok = np.flatnonzero((colat >= cap) & (colat <= np.pi - cap))
    else:
        ok = np.arange(s.N)
    if len(ok) == 0:
        raise ShapeError("no eligible probe points; reduce the margin")
    count = min(count, len(ok))
    picked: list[int] = []
    while len(picked) < count:
        k = int(ok[rng.integers(1, len(ok))[0]])
        if k not in picked:
            picked.append(k)
    return np.array(sorted(picked), dtype=np.int64)


def default_n_rule(shape: str, eps: float, d: int) -> int:
    """Sample count used by convergence sweeps.

    Circles: ``ceil(20 eps^-3)`` jittered samples; uv spheres: ``50 eps^-3``
    targets; otherwise ``ceil(50 eps^-(d + 0.5))``.  The cubic rates make the
    sampling fluctuation of tangential components decay faster than eps.
    """
    if shape == "circle":
        return int(math.ceil(20.0 * eps**-3))
    if shape == "sphere":
        return int(math.ceil(50.0 * eps**-3))
    return int(math.ceil(50.0 * eps ** (-d - 0.5)))
