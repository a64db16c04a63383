"""Radial kernel profiles used by the varifold estimators.

All profiles are functions of a dimensionless radius ``s = |y - x| / epsilon``
supported on ``[0, 1]``.  A *natural* pair ``(rho, xi)`` in ambient dimension
``n`` satisfies ``-s * rho'(s) == n * xi(s)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

ArrayFn = Callable[[np.ndarray], np.ndarray]

NATURAL_TOL = 1e-12


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelProfile:
    """A compactly supported radial profile with its analytic derivative.

    ``value`` and ``derivative`` accept arrays and return arrays of the same
    shape; both vanish for ``s >= 1``.
    """

    name: str
    value_fn: ArrayFn = field(repr=False)
    derivative_fn: ArrayFn = field(repr=False)

    def value(self, s):
        return self.value_fn(np.asarray(s, dtype=float))

    def derivative(self, s):
        return self.derivative_fn(np.asarray(s, dtype=float))

    def __call__(self, s):
        return self.value(s)


@dataclass(frozen=True)
class KernelPair:
    rho: KernelProfile
    xi: KernelProfile
    eta: KernelProfile
    n: int
    is_natural: bool


@dataclass(frozen=True)
class NaturalPairReport:
    max_defect: float
    grid_size: int
    passed: bool


@dataclass(frozen=True)
class Normalization:
    value: float
    d: int
    error_bound: float


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s, dtype=float)
    inside = (s >= 0) & (s < 1)
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


def _bump_derivative(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s, dtype=float)
    inside = (s >= 0) & (s < 1)
    si = s[inside]
    q = 1.0 - si * si
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * si / (q * q))
    return out


def _bump_xi(n: int) -> tuple[ArrayFn, ArrayFn]:
    # xi(s) = -s rho'(s) / n = 2 s^2 rho(s) / (n (1-s^2)^2)
    def value(s):
        out = np.zeros_like(s, dtype=float)
        inside = (s >= 0) & (s < 1)
        si = s[inside]
        q = 1.0 - si * si
        out[inside] = np.exp(1.0 - 1.0 / q) * (2.0 * si * si / (q * q)) / n
        return out

    def derivative(s):
        out = np.zeros_like(s, dtype=float)
        inside = (s >= 0) & (s < 1)
        si = s[inside]
        q = 1.0 - si * si
        # d/ds [2 s^2 q^-2 e^{1-1/q}] with q' = -2s
        g = 2.0 * si * si / (q * q)
        dg = 4.0 * si / (q * q) + 8.0 * si**3 / q**3
        rho = np.exp(1.0 - 1.0 / q)
        drho = rho * (-2.0 * si / (q * q))
        out[inside] = (dg * rho + g * drho) / n
        return out

    return value, derivative


BUMP = KernelProfile("bump", _bump, _bump_derivative)


def default_bump_pair(n: int) -> KernelPair:
    """Smooth bump ``rho(s) = exp(1 - 1/(1 - s^2))`` and its natural partner."""
    if n < 2:
        raise KernelError(f"ambient dimension must be >= 2, got {n}")
    xi_val, xi_der = _bump_xi(n)
    xi = KernelProfile(f"bump-xi(n={n})", xi_val, xi_der)
    return KernelPair(rho=BUMP, xi=xi, eta=xi, n=n, is_natural=True)


def natural_defect(pair: KernelPair, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.abs(-s * pair.rho.derivative(s) - pair.n * pair.xi.value(s))


def validate_natural_pair(pair: KernelPair, n: int | None = None, grid_size: int = 10_000) -> NaturalPairReport:
    """Check ``-s rho'(s) = n xi(s)`` on a uniform grid of ``[0, 1]``."""
    if grid_size < 100:
        raise KernelError("grid_size must be >= 100")
    n = pair.n if n is None else n
    s = np.linspace(0.0, 1.0, grid_size)
    defect = np.abs(-s * pair.rho.derivative(s) - n * pair.xi.value(s))
    worst = float(defect.max())
    return NaturalPairReport(max_defect=worst, grid_size=grid_size, passed=worst <= NATURAL_TOL)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def normalization(profile: KernelProfile, d: int) -> Normalization:
    """``d * omega_d * int_0^1 profile(t) t^(d-1) dt`` by adaptive quadrature."""
    if d < 1:
        raise KernelError(f"varifold dimension must be >= 1, got {d}")
    scale = d * unit_ball_volume(d)

    def integrand(t):
        return float(profile.value(np.array([t]))[0]) * t ** (d - 1)

    with np.errstate(all="ignore"):
        val, err, info = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12,
                                        limit=200, full_output=True)[:3]
    bound = scale * err
    if bound > 1e-10 or not np.isfinite(val):
        raise KernelError(f"quadrature did not converge for {profile.name}: error {bound:.3g}")
    return Normalization(value=scale * val, d=d, error_bound=bound)


def constant_ratio(pair: KernelPair, d: int) -> float:
    """``C_xi / C_rho``; exactly ``d / n`` for natural pairs."""
    if pair.is_natural:
        return d / pair.n
    c_rho = normalization(pair.rho, d).value
    c_xi = normalization(pair.xi, d).value
    if c_rho <= 0:
        raise KernelError("C_rho must be positive")
    return c_xi / c_rho


def _spline_profile(name: str, s: np.ndarray, values: np.ndarray) -> KernelProfile:
    spline = CubicSpline(s, values)
    dspline = spline.derivative()

    def value(x):
        out = np.where((x >= 0) & (x < 1), spline(np.clip(x, 0.0, 1.0)), 0.0)
        return np.maximum(out, 0.0)

    def derivative(x):
        return np.where((x >= 0) & (x < 1), dspline(np.clip(x, 0.0, 1.0)), 0.0)

    return KernelProfile(name, value, derivative)


def load_tabulated_pair(path: str | Path, n: int) -> KernelPair:
    """Kernel pair from a CSV with columns ``s, rho`` and optionally ``xi``.

    Without an ``xi`` column the partner is derived as ``-s rho'(s) / n`` from
    the spline.  Naturality is always validated, never assumed.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows or lineno > 1:
                    raise KernelError(f"{path}:{lineno}: non-numeric kernel table row") from None
                # header line
    if len(rows) < 4:
        raise KernelError(f"{path}: need at least 4 tabulated rows")
    table = np.array(rows)
    s = table[:, 0]
    if s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
        raise KernelError(f"{path}: s column must increase strictly from 0 to 1")
    rho = _spline_profile(f"tab-rho({Path(path).name})", s, table[:, 1])
    if table.shape[1] >= 3:
        xi = _spline_profile(f"tab-xi({Path(path).name})", s, table[:, 2])
    else:
        d2 = CubicSpline(s, table[:, 1]).derivative(2)
        inside = lambda x: (x >= 0) & (x < 1)  # noqa: E731

        def xi_val(x):
            return np.maximum(-x * rho.derivative(x) / n, 0.0)

        def xi_der(x):
            return np.where(inside(x), -(rho.derivative(x) + x * d2(np.clip(x, 0.0, 1.0))) / n, 0.0)

        xi = KernelProfile(f"tab-xi({Path(path).name})", xi_val, xi_der)
    pair = KernelPair(rho=rho, xi=xi, eta=xi, n=n, is_natural=False)
    report = validate_natural_pair(pair, n)
    return KernelPair(rho=rho, xi=xi, eta=xi, n=n, is_natural=report.passed)


def get_pair(name: str, n: int) -> KernelPair:
    if name == "bump":
        return default_bump_pair(n)
    if name.endswith(".csv"):
        return load_tabulated_pair(name, n)
    raise KernelError(f"unknown kernel {name!r}")


def with_eta(pair: KernelPair, eta: KernelProfile) -> KernelPair:
    return KernelPair(rho=pair.rho, xi=pair.xi, eta=eta, n=pair.n, is_natural=pair.is_natural)
