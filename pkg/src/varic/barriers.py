"""Sphere-barrier checks and epsilon-convergence studies.

The checkers name the inequality they test.  Discrete-scheme inequalities
hold exactly in exact arithmetic and are checked to 1e-10; continuous (RK4)
trajectories get an integration allowance of ``10 * dt`` on the radius.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curvature import curvature_from_interactions, interactions
from .kernels import KernelPair, default_bump_pair
from .operators import OperatorSpec, apply_operator, as_spec, limit_factor
from .shapes import (ShapeSampler, analytic_mean_curvature, default_n_rule, probe_indices, sample_shape)
from .varifold import PointCloudVarifold

MACHINE_TOL = 1e-10
ROUNDOFF_FLOOR = 1e-12


class BarrierError(ValueError):
    pass


def barrier_constant(V: PointCloudVarifold, center, eps: float, spec: OperatorSpec | str = "2*Id") -> float:
    """``max [Pi_ij (x_i - x_j) . (x_i - z)] / r_ij^2`` over closest points ``i``.

    ``i`` ranges over the points at minimal distance from ``z = center`` and
    ``j`` over neighbours with ``0 < r_ij < eps``.
    """
    spec = as_spec(spec)
    z = np.asarray(center, dtype=float)
    rad = np.linalg.norm(V.points - z, axis=1)
    closest = np.flatnonzero(rad == rad.min())
    best = -math.inf
    for i in closest:
        # direct scan: only the few closest points are needed
        diff = V.points[i] - V.points
        r2 = np.einsum("ij,ij->i", diff, diff)
        j = np.flatnonzero((r2 > 0) & (r2 < eps * eps))
        if len(j) == 0:
            continue
        diff, r2 = diff[j], r2[j]
        Ti = np.broadcast_to(V.tangents[i], (len(j),) + V.tangents[i].shape)
        val = apply_operator(spec, Ti, V.tangents[j], diff) @ (V.points[i] - z) / r2
        best = max(best, float(val.max()))
    if best == -math.inf:
        raise BarrierError("no closest point has a neighbour within epsilon")
    return best


@dataclass(frozen=True)
class BarrierStep:
    step: int
    time: float
    r_min: float
    r_max: float
    bound: float
    slack: float
    passed: bool


@dataclass
class BarrierReport:
    """Per-step results; ``passed`` is true iff every step passes."""

    inequality: str
    steps: list[BarrierStep] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.steps)

    @property
    def failures(self) -> list[BarrierStep]:
        return [s for s in self.steps if not s.passed]

    @property
    def min_slack(self) -> float:
        return min((s.slack for s in self.steps), default=math.inf)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time", "r_min", "r_max", "bound", "slack", "pass"])
        for s in self.steps:
            w.writerow([s.step, repr(s.time), repr(s.r_min), repr(s.r_max), repr(s.bound), repr(s.slack),
                        int(s.passed)])
        return buf.getvalue()


def _frames(traj):
    """``(steps, times, point arrays)`` from a Trajectory or a sequence of ``(t, points)``."""
    if hasattr(traj, "states"):
        return list(traj.steps), list(traj.times), [V.points for V in traj.states]
    times, pts = [], []
    for t, X in traj:
        times.append(float(t))
        pts.append(X.points if isinstance(X, PointCloudVarifold) else np.asarray(X, dtype=float))
    return list(range(len(times))), times, pts


def check_internal_barrier(traj, center, R0: float, d: int) -> BarrierReport:
    """``max_i |x_i - z| <= sqrt(R0^2 - 2 d t_k) + 1e-10`` while ``R0^2 > 2 d t_k``."""
    steps, times, pts = _frames(traj)
    z = np.asarray(center, dtype=float)
    r0 = np.linalg.norm(pts[0] - z, axis=1)
    if np.any(r0 > R0):
        raise BarrierError(f"initial cloud is not inside B(center, {R0}): max radius {r0.max():.17g}")
    rep = BarrierReport("max_i |x_i - z| <= sqrt(R0^2 - 2 d t)")
    for k, t, X in zip(steps, times, pts):
        if not R0**2 > 2 * d * t:
            continue
        r = np.linalg.norm(X - z, axis=1)
        bound = math.sqrt(R0**2 - 2 * d * t)
        slack = bound + MACHINE_TOL - float(r.max())
        rep.steps.append(BarrierStep(k, t, float(r.min()), float(r.max()), bound, slack, slack >= 0))
    return rep


def check_external_barrier(traj, center, R0: float, d: int, dt: float | None = None,
                           c_values: Sequence[float] | None = None) -> BarrierReport:
    """Continuous-flow external barrier with an integration allowance ``10 dt``.

    Checks ``min_i |x_i - z| >= sqrt(R0^2 - 2 d t) - 10 dt`` and the running
    bound ``r(t)^2 >= R0^2 - 2 d int_0^t c(s) ds`` (left rectangle rule over
    the stored times, same allowance on the radius).  ``c_values`` are the
    barrier constants at the stored states; by default they are taken from
    the trajectory diagnostics, which is valid only when these were recorded
    for the same center.  A NaN constant (closest point isolated, hence
    stationary) contributes zero.
    """
    steps, times, pts = _frames(traj)
    z = np.asarray(center, dtype=float)
    r0 = np.linalg.norm(pts[0] - z, axis=1)
    if np.any(r0 < R0):
        raise BarrierError(f"initial cloud is not outside B(center, {R0}): min radius {r0.min():.17g}")
    if dt is None:
        dt = max(np.diff(times), default=0.0)
    tol = 10.0 * dt
    if c_values is None:
        if not hasattr(traj, "diagnostics"):
            raise BarrierError("c_values are required for plain (time, points) sequences")
        by_step = {info.step: info.barrier_c for info in traj.diagnostics}
        c_values = [by_step[k] for k in steps]
    c = np.nan_to_num(np.asarray(c_values, dtype=float), nan=0.0)
    integral = np.concatenate([[0.0], np.cumsum(c[:-1] * np.diff(times))])
    rep = BarrierReport("min_i |x_i - z| >= sqrt(R0^2 - 2 d t) and r^2 >= R0^2 - 2 d int c")
    for k, t, X, I in zip(steps, times, pts, integral):
        r = np.linalg.norm(X - z, axis=1)
        plain = math.sqrt(max(R0**2 - 2 * d * t, 0.0))
        sharp = math.sqrt(max(R0**2 - 2 * d * I, 0.0))
        bound = max(plain, sharp)
        slack = float(r.min()) - bound + tol
        rep.steps.append(BarrierStep(k, t, float(r.min()), float(r.max()), bound, slack, slack >= 0))
    return rep


def check_weak_external_discrete(traj, center, d: int, tau: float) -> BarrierReport:
    """``|x_p^k - z|^2 <= |x_p^{k+1} - z|^2 + 2 d tau + 1e-10``, ``p = argmin_i |x_i^k - z|``.

    Needs consecutive steps.  ``bound`` holds ``|x_p^{k+1} - z|^2 + 2 d tau``
    and ``r_min``/``r_max`` describe step ``k``.
    """
    steps, times, pts = _frames(traj)
    if any(b - a != 1 for a, b in zip(steps, steps[1:])):
        raise BarrierError("the weak external check needs every step of the trajectory")
    z = np.asarray(center, dtype=float)
    rep = BarrierReport("|x_p^k - z|^2 <= |x_p^{k+1} - z|^2 + 2 d tau")
    for k in range(len(pts) - 1):
        r2 = np.einsum("ij,ij->i", pts[k] - z, pts[k] - z)
        p = int(np.argmin(r2))
        nxt = pts[k + 1][p] - z
        bound = float(nxt @ nxt) + 2 * d * tau
        slack = bound + MACHINE_TOL - float(r2[p])
        rep.steps.append(BarrierStep(steps[k], times[k], math.sqrt(r2.min()), math.sqrt(r2.max()), bound, slack,
                                     slack >= 0))
    return rep


def min_radius_decay(traj, center, d: int, tau: float) -> BarrierReport:
    """``r_min(k+1)^2 > r_min(k)^2 - 2 d tau`` (meaningful when the closest point is stable)."""
    steps, times, pts = _frames(traj)
    z = np.asarray(center, dtype=float)
    rep = BarrierReport("r_min(k+1)^2 > r_min(k)^2 - 2 d tau")
    for k in range(len(pts) - 1):
        a = np.einsum("ij,ij->i", pts[k] - z, pts[k] - z)
        b = np.einsum("ij,ij->i", pts[k + 1] - z, pts[k + 1] - z)
        bound = float(a.min()) - 2 * d * tau
        slack = float(b.min()) - bound
        rep.steps.append(BarrierStep(steps[k], times[k], math.sqrt(a.min()), math.sqrt(a.max()), bound, slack,
                                     slack > 0))
    return rep


# convergence studies

def study_sampler(shape: str, eps: float, N: int | None = None, seed: int = 0, n: int | None = None) -> ShapeSampler:
    """Documented sampling per shape for convergence sweeps.

    * circle: jitter 0.5, ``N = ceil(20 eps^-3)``;
    * sphere (R^3): uv grid with area masses, ``N = 50 eps^-3``;
    * torus: ``N = ceil(50 eps^-2.5)``;
    * plane/segment (d = n - 1): regular grid, N rounded up to a perfect power.
    """
    if shape == "circle":
        return ShapeSampler("circle", N or default_n_rule("circle", eps, 1), jitter=0.5, seed=seed)
    if shape == "sphere":
        return ShapeSampler("sphere", N or default_n_rule("sphere", eps, 2), n=3, lattice="uv", seed=seed)
    if shape == "torus":
        return ShapeSampler("torus", N or default_n_rule("torus", eps, 2), n=3, radius=2.0, minor_radius=0.5,
                            jitter=0.5, seed=seed)
    if shape in ("plane", "segment"):
        amb = n or (3 if shape == "plane" else 2)
        d = amb - 1 if shape == "plane" else 1
        target = N or default_n_rule(shape, eps, d)
        m = int(math.ceil(target ** (1.0 / d) - 1e-9))
        return ShapeSampler(shape, m**d, n=amb, d=d, seed=seed)
    raise BarrierError(f"no convergence sampler for shape {shape!r}")


@dataclass(frozen=True)
class StudyRow:
    spec: str
    epsilon: float
    N: int
    max_error: float
    slope: float
    max_norm: float
    target_factor: float


@dataclass
class ConvergenceTable:
    rows: list[StudyRow]

    def errors(self, spec: str) -> list[float]:
        return [r.max_error for r in self.rows if r.spec == spec]

    def norms(self, spec: str) -> list[float]:
        return [r.max_norm for r in self.rows if r.spec == spec]

    def specs(self) -> list[str]:
        return list(dict.fromkeys(r.spec for r in self.rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["spec", "epsilon", "N", "max_error", "slope", "max_norm"])
        for r in self.rows:
            w.writerow([r.spec, repr(r.epsilon), r.N, repr(r.max_error), repr(r.slope), repr(r.max_norm)])
        return buf.getvalue()


def strictly_decreasing(values: Sequence[float], floor: float = ROUNDOFF_FLOOR) -> bool:
    """Strict decrease, except that values already at the round-off floor may stay there."""
    return all(b < a or (a <= floor and b <= floor) for a, b in zip(values, values[1:]))


def loglog_slope(eps: Sequence[float], err: Sequence[float]) -> float:
    e, v = np.asarray(eps, dtype=float), np.asarray(err, dtype=float)
    if len(e) < 2 or np.any(v <= 0):
        return math.nan
    return float(np.polyfit(np.log(e), np.log(v), 1)[0])


def convergence_study(shape: str, specs: Sequence[str], epsilons: Sequence[float], n_rule=None,
                      pair: KernelPair | None = None, probes: int = 16, seed: int = 0,
                      n: int | None = None) -> ConvergenceTable:
    """Max probe error of each spec against ``limit_factor(spec) * H`` along an epsilon sweep.

    The target is the analytic curvature for converging specs and zero for
    null specs.  ``n_rule(eps)`` overrides the per-shape sample count.
    """
    eps_list = [float(e) for e in epsilons]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise BarrierError("epsilon list must be strictly decreasing")
    parsed = [(str(s), as_spec(s)) for s in specs]
    raw: dict[str, list[tuple[float, int, float, float]]] = {name: [] for name, _ in parsed}
    for eps in eps_list:
        s = study_sampler(shape, eps, N=None if n_rule is None else int(n_rule(eps)), seed=seed, n=n)
        V = sample_shape(s)
        p = pair or default_bump_pair(V.n)
        margin = max(eps_list) if shape in ("plane", "segment", "sphere") else 0.0
        rows = probe_indices(s, probes, margin=margin, points=V.points)
        H_true = np.stack([analytic_mean_curvature(s, V.points[r]) for r in rows])
        inter = interactions(V, p, eps, rows=rows)
        for name, spec in parsed:
            H = curvature_from_interactions(V, spec, inter)
            err = float(np.linalg.norm(H - limit_factor(spec) * H_true, axis=1).max())
            norm = float(np.linalg.norm(H, axis=1).max())
            raw[name].append((eps, V.N, err, norm))
    out = []
    for name, spec in parsed:
        slope = loglog_slope([r[0] for r in raw[name]], [r[2] for r in raw[name]])
        for eps, N, err, norm in raw[name]:
            out.append(StudyRow(name, eps, N, err, slope, norm, limit_factor(spec)))
    return ConvergenceTable(out)
