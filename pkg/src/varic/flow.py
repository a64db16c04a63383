"""Mean curvature flow of point-cloud varifolds.

Three schemes share the velocity ``x_i' = H_eps^Pi(x_i)``:

* ``rk4``: classical Runge-Kutta on the ODE system;
* ``explicit``: ``X^{k+1} = X^k + tau H(X^k)``;
* ``implicit``: weights and operators frozen at step ``k``, positions
  implicit, i.e. the block system ``A X^{k+1} = X^k`` with
  ``A_ii = I + (tau/eps) sum_j w_ij Pi_ij`` and ``A_ij = -(tau/eps) w_ij Pi_ij``.

With ``implicit_weights`` the weights are instead re-evaluated at the
candidate ``X^{k+1}`` (Picard iteration), which is the fully implicit
scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .curvature import Interactions, curvature_from_interactions, interactions, pair_operator_matrices
from .kernels import KernelPair, get_pair, normalization
from .neighbors import GridError, SpatialIndex
from .operators import OperatorSpec, as_spec
from .varifold import PointCloudVarifold, estimate_tangents_pca

SCHEMES = ("rk4", "explicit", "implicit")
MASS_POLICIES = ("frozen", "recompute-per-step")
TANGENT_POLICIES = ("frozen", "recompute-per-step", "recompute-per-rhs")
_SCHEME_ALIASES = {"continuous-rk4": "rk4", "continuous": "rk4"}


class FlowError(ValueError):
    pass


class FlowDivergedError(FlowError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class FlowConfig:
    """Flow parameters.  ``tau`` is the time step of every scheme.

    ``tangent_radius`` is the PCA radius used when tangents are recomputed
    (defaults to ``epsilon``).  ``center`` is the reference point for the
    radius and barrier-constant diagnostics.
    """

    epsilon: float
    tau: float
    scheme: str = "rk4"
    operator: str = "2*Id"
    kernel: str = "bump"
    mass_policy: str = "frozen"
    tangent_policy: str = "recompute-per-step"
    implicit_masses: bool = False
    implicit_weights: bool = False
    max_steps: int = 1_000_000
    tol: float = 1e-12
    max_iter: int = 500
    outer_max_iter: int = 100
    tangent_radius: float | None = None
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", _SCHEME_ALIASES.get(self.scheme, self.scheme))
        if not self.epsilon > 0:
            raise FlowError(f"epsilon must be positive, got {self.epsilon}")
        if not self.tau > 0:
            raise FlowError(f"tau must be positive, got {self.tau}")
        if self.scheme not in SCHEMES:
            raise FlowError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.mass_policy not in MASS_POLICIES:
            raise FlowError(f"unknown mass policy {self.mass_policy!r}")
        if self.tangent_policy not in TANGENT_POLICIES:
            raise FlowError(f"unknown tangent policy {self.tangent_policy!r}")
        if not self.tol > 0 or self.max_iter < 1 or self.outer_max_iter < 1 or self.max_steps < 0:
            raise FlowError("solver tolerance and iteration limits must be positive")
        as_spec(self.operator)

    @property
    def spec(self) -> OperatorSpec:
        return as_spec(self.operator)


@dataclass(frozen=True)
class StepInfo:
    step: int
    time: float
    r_min: float
    r_max: float
    barrier_c: float
    solver_iters: int


@dataclass
class Trajectory:
    """Stored snapshots ``(step, time, V)`` and one :class:`StepInfo` per step."""

    times: list[float] = field(default_factory=list)
    states: list[PointCloudVarifold] = field(default_factory=list)
    diagnostics: list[StepInfo] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)

    def append(self, step: int, t: float, V: PointCloudVarifold):
        if self.times and not t > self.times[-1]:
            raise FlowError("trajectory times must be strictly increasing")
        self.steps.append(step)
        self.times.append(float(t))
        self.states.append(V)

    def __len__(self):
        return len(self.states)

    @property
    def final(self) -> PointCloudVarifold:
        return self.states[-1]


def rhs(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str,
        index: SpatialIndex | None = None) -> np.ndarray:
    """Velocities ``H_eps(x_i)``; points without valid estimate get zero."""
    spec = as_spec(spec)
    return curvature_from_interactions(V, spec, interactions(V, pair, eps, index=index))


def recompute_masses(points, pair: KernelPair, eps: float, d: int) -> np.ndarray:
    """``m_i = eps^d C_rho / sum_l rho(|x_l - x_i| / eps)`` (self term included).

    The inverse of a kernel density estimate: for uniform-density samples of
    a d-dimensional set this gives masses approximating the area per point.
    """
    points = np.asarray(points, dtype=float)
    index = SpatialIndex(points, eps)
    i, j = index.pairs(eps, coincident=True)
    r = np.linalg.norm(points[j] - points[i], axis=1)
    dens = pair.rho.value(np.zeros(len(points))) + np.bincount(i, weights=pair.rho.value(r / eps),
                                                                 minlength=len(points))
    return eps**d * normalization(pair.rho, d).value / dens


class Flow:
    """Stepper bound to a kernel pair and configuration."""

    def __init__(self, config: FlowConfig, pair: KernelPair | None = None, n: int | None = None):
        self.config = config
        if pair is None:
            if n is None:
                raise FlowError("need either a kernel pair or the ambient dimension")
            pair = get_pair(config.kernel, n)
        self.pair = pair
        self.spec = config.spec

    # policies
    def _tangents(self, V: PointCloudVarifold, points) -> np.ndarray:
        radius = self.config.tangent_radius or self.config.epsilon
        return estimate_tangents_pca(points, V.masses, radius, V.d, strict=False, fallback=V.tangents)

    def refresh(self, V: PointCloudVarifold) -> PointCloudVarifold:
        """Apply the per-step mass and tangent policies to a new state."""
        c = self.config
        masses = recompute_masses(V.points, self.pair, c.epsilon, V.d) if c.mass_policy != "frozen" else None
        tangents = self._tangents(V, V.points) if c.tangent_policy != "frozen" else None
        if masses is None and tangents is None:
            return V
        return V.replace(masses=masses, tangents=tangents)

    def velocity(self, V: PointCloudVarifold) -> np.ndarray:
        return rhs(V, self.pair, self.config.epsilon, self.spec)

    # schemes
    def step_continuous(self, V: PointCloudVarifold, dt: float | None = None) -> tuple[PointCloudVarifold, int]:
        dt = self.config.tau if dt is None else dt
        if dt == 0:
            return V, 0
        per_rhs = self.config.tangent_policy == "recompute-per-rhs"

        def f(X):
            W = V.replace(points=X, tangents=self._tangents(V, X) if per_rhs else None)
            return self.velocity(W)

        X = V.points
        k1 = f(X)
        k2 = f(X + 0.5 * dt * k1)
        k3 = f(X + 0.5 * dt * k2)
        k4 = f(X + dt * k3)
        Xn = X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return self.refresh(V.with_points(Xn)), 4

    def step_explicit(self, V: PointCloudVarifold, dt: float | None = None) -> tuple[PointCloudVarifold, int]:
        dt = self.config.tau if dt is None else dt
        if dt == 0:
            return V, 0
        return self.refresh(V.with_points(V.points + dt * self.velocity(V))), 1

    def step_implicit(self, V: PointCloudVarifold, dt: float | None = None) -> tuple[PointCloudVarifold, int]:
        c = self.config
        dt = c.tau if dt is None else dt
        if dt == 0:
            return V, 0
        if c.implicit_weights:
            X, iters = self._solve_fully_implicit(V, dt)
        elif c.implicit_masses:
            X, iters = self._solve_implicit_masses(V, dt)
        else:
            X, iters = solve_implicit(V, self.pair, c.epsilon, self.spec, dt, c.tol, c.max_iter)
        return self.refresh(V.with_points(X)), iters

    def _solve_implicit_masses(self, V, dt):
        c = self.config
        X, total = solve_implicit(V, self.pair, c.epsilon, self.spec, dt, c.tol, c.max_iter)
        scale = max(np.linalg.norm(V.points), np.finfo(float).tiny)
        for _ in range(c.outer_max_iter):
            W = V.replace(masses=recompute_masses(X, self.pair, c.epsilon, V.d))
            Xn, it = solve_implicit(W, self.pair, c.epsilon, self.spec, dt, c.tol, c.max_iter)
            total += it
            change = np.linalg.norm(Xn - X)
            X = Xn
            if change <= c.tol * scale:
                return X, total
        raise SolverError("implicit-mass fixed point did not converge", change / scale)

    def _solve_fully_implicit(self, V, dt):
        c = self.config
        X, total = solve_implicit(V, self.pair, c.epsilon, self.spec, dt, c.tol, c.max_iter)
        scale = max(np.linalg.norm(V.points), np.finfo(float).tiny)
        for _ in range(c.outer_max_iter):
            W = V.with_points(X)
            if c.implicit_masses:
                W = W.replace(masses=recompute_masses(X, self.pair, c.epsilon, V.d))
            inter = interactions(W, self.pair, c.epsilon)
            Xn, it = _solve_system(W, inter, self.spec, dt, V.points, c.tol, c.max_iter)
            total += it
            change = np.linalg.norm(Xn - X)
            X = Xn
            if change <= c.tol * scale:
                return X, total
        raise SolverError("implicit-weight Picard iteration did not converge", change / scale)

    def step(self, V: PointCloudVarifold, dt: float | None = None) -> tuple[PointCloudVarifold, int]:
        return {"rk4": self.step_continuous, "explicit": self.step_explicit,
                "implicit": self.step_implicit}[self.config.scheme](V, dt)


def _operator_blocks(V, spec, inter: Interactions, dt: float) -> np.ndarray:
    """``(dt/eps) w_ij Pi_ij`` for every pair."""
    return (dt / inter.eps) * inter.omega[:, None, None] * pair_operator_matrices(V, spec, inter)


def _apply_A(X: np.ndarray, i, j, blocks, N) -> np.ndarray:
    """``A X`` in difference form ``X_i + sum_j B_ij (X_i - X_j)``."""
    out = X.copy()
    contrib = np.einsum("kab,kb->ka", blocks, X[i] - X[j])
    for a in range(X.shape[1]):
        out[:, a] += np.bincount(i, weights=contrib[:, a], minlength=N)
    return out


def implicit_residual(V, pair, eps, spec, dt, X_new) -> float:
    """``||A X^{k+1} - X^k|| / ||X^k||`` for the frozen-weight system."""
    spec = as_spec(spec)
    inter = interactions(V, pair, eps)
    blocks = _operator_blocks(V, spec, inter, dt)
    res = np.linalg.norm(_apply_A(np.asarray(X_new, float), inter.i, inter.j, blocks, V.N) - V.points)
    return res / max(np.linalg.norm(V.points), np.finfo(float).tiny)


def assemble_system(V, spec, inter: Interactions, dt: float) -> sp.csr_matrix:
    """Sparse ``nN x nN`` matrix ``A`` (point-major ordering)."""
    N, n = V.N, V.n
    blocks = _operator_blocks(V, spec, inter, dt)
    diag = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    np.add.at(diag, inter.i, blocks)
    bi = np.concatenate([np.arange(N), inter.i])
    bj = np.concatenate([np.arange(N), inter.j])
    vals = np.concatenate([diag, -blocks])
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rows = bi[:, None, None] * n + a
    cols = bj[:, None, None] * n + b
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(N * n, N * n))


def _solve_system(V, inter, spec, dt, b, tol, max_iter) -> tuple[np.ndarray, int]:
    """Block-Jacobi iteration, falling back to a sparse direct solve.

    Returns the solution and the number of Jacobi sweeps (plus one for a
    direct solve).  Raises :class:`SolverError` if the residual tolerance
    cannot be met.
    """
    N, n = b.shape
    blocks = _operator_blocks(V, spec, inter, dt)
    i, j = inter.i, inter.j
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    if len(i) == 0:
        return b.copy(), 0
    diag = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    np.add.at(diag, i, blocks)
    diag_inv = np.linalg.inv(diag)

    X = b.copy()
    res = np.linalg.norm(_apply_A(X, i, j, blocks, N) - b) / scale
    best = res
    stalled = 0
    it = 0
    # iterate past the acceptance tolerance so independent re-evaluation of
    # the residual (different summation order) still passes
    target = 0.1 * tol
    while res > target and it < max_iter:
        off = np.einsum("kab,kb->ka", blocks, X[j])
        acc = b.copy()
        for a in range(n):
            acc[:, a] += np.bincount(i, weights=off[:, a], minlength=N)
        X = np.einsum("kab,kb->ka", diag_inv, acc)
        it += 1
        res = np.linalg.norm(_apply_A(X, i, j, blocks, N) - b) / scale
        if res < 0.9 * best:
            best, stalled = res, 0
        else:
            stalled += 1
            if stalled >= 10 or not np.isfinite(res):
                break
    if res <= tol:
        return X, it

    A = assemble_system(V, spec, inter, dt)
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"implicit system is singular: {exc}", res) from exc
    X = lu.solve(b.ravel()).reshape(N, n)
    for _ in range(3):
        r = _apply_A(X, i, j, blocks, N) - b
        res = np.linalg.norm(r) / scale
        if res <= target:
            return X, it + 1
        X = X - lu.solve(r.ravel()).reshape(N, n)
    res = np.linalg.norm(_apply_A(X, i, j, blocks, N) - b) / scale
    if res <= tol and np.all(np.isfinite(X)):
        return X, it + 1
    raise SolverError("implicit solve did not reach the residual tolerance", res)


def solve_implicit(V: PointCloudVarifold, pair: KernelPair, eps: float, spec: OperatorSpec | str, dt: float,
                   tol: float = 1e-12, max_iter: int = 500) -> tuple[np.ndarray, int]:
    """Solve ``A X = X^k`` with weights and operators of ``V``."""
    spec = as_spec(spec)
    inter = interactions(V, pair, eps)
    return _solve_system(V, inter, spec, dt, V.points, tol, max_iter)


def barrier_constant_or_nan(V, center, eps, spec) -> float:
    from .barriers import BarrierError, barrier_constant

    try:
        return barrier_constant(V, center, eps, spec)
    except BarrierError:
        return math.nan


def _info(step, t, V, center, eps, spec, iters) -> StepInfo:
    r = np.linalg.norm(V.points - center, axis=1)
    return StepInfo(step, t, float(r.min()), float(r.max()), barrier_constant_or_nan(V, center, eps, spec), iters)


def run_flow(V0: PointCloudVarifold, config: FlowConfig, pair: KernelPair | None = None, steps: int | None = None,
             t_end: float | None = None, keep_every: int = 1,
             callback: Callable[[int, float, PointCloudVarifold, StepInfo], None] | None = None) -> Trajectory:
    """Advance ``V0`` by ``steps`` steps (or up to ``t_end``, last step shortened).

    Every ``keep_every``-th state (and the last) is stored; ``callback`` sees
    every state including the initial one.
    """
    if (steps is None) == (t_end is None):
        raise FlowError("give exactly one of steps and t_end")
    if keep_every < 1:
        raise FlowError("keep_every must be positive")
    flow = Flow(config, pair, n=V0.n)
    tau = config.tau
    if steps is None:
        if t_end < 0:
            raise FlowError("t_end must be non-negative")
        steps = int(math.ceil(t_end / tau - 1e-9))
    if steps < 0 or steps > config.max_steps:
        raise FlowError(f"step count {steps} outside [0, {config.max_steps}]")
    center = np.zeros(V0.n) if config.center is None else np.asarray(config.center, dtype=float)

    traj = Trajectory()
    info = _info(0, 0.0, V0, center, config.epsilon, flow.spec, 0)
    traj.append(0, 0.0, V0)
    traj.diagnostics.append(info)
    if callback:
        callback(0, 0.0, V0, info)
    V, t = V0, 0.0
    for k in range(1, steps + 1):
        t_next = float(t_end) if (t_end is not None and k == steps) else k * tau
        try:
            V, iters = flow.step(V, t_next - t)
        except GridError as exc:
            raise FlowDivergedError(f"positions diverged during step {k} (t = {t_next!r}): {exc}") from exc
        if not np.all(np.isfinite(V.points)):
            raise FlowDivergedError(f"non-finite positions after step {k} (t = {t_next!r})")
        t = t_next
        info = _info(k, t, V, center, config.epsilon, flow.spec, iters)
        traj.diagnostics.append(info)
        if k % keep_every == 0 or k == steps:
            traj.append(k, t, V)
        if callback:
            callback(k, t, V, info)
    return traj


def with_config(config: FlowConfig, **changes) -> FlowConfig:
    return replace(config, **changes)
