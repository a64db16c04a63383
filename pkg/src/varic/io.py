"""Point-cloud files and flat ``key = value`` run configurations.

Cloud files are ASCII.  The header line is ``n d N has_mass has_tangent``,
followed by ``N`` rows of ``n`` coordinates, the mass when ``has_mass`` is 1
and the ``n*n`` row-major projector entries when ``has_tangent`` is 1.
Numbers are written with 17 significant digits, which round-trips every
double exactly.  Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .varifold import PointCloudVarifold, estimate_tangents_pca, projector_defects, uniform_masses

PROJECTOR_FILE_TOL = 1e-6


class CloudFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class CloudFile:
    n: int
    d: int
    points: np.ndarray
    masses: np.ndarray | None
    tangents: np.ndarray | None


def _int_field(tok: str, name: str, path) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CloudFormatError(f"{path}: header field {name} is not an integer: {tok!r}") from None


def read_cloud(path: str | Path) -> CloudFile:
    lines = [ln.split() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln[0].startswith("#")]
    if not lines:
        raise CloudFormatError(f"{path}: empty file")
    head = lines[0]
    if len(head) != 5:
        raise CloudFormatError(f"{path}: header must be 'n d N has_mass has_tangent', got {' '.join(head)!r}")
    n, d, N, hm, ht = (_int_field(t, name, path) for t, name in zip(head, ("n", "d", "N", "has_mass", "has_tangent")))
    if n < 2 or not 1 <= d < n or N < 0 or hm not in (0, 1) or ht not in (0, 1):
        raise CloudFormatError(f"{path}: invalid header values {head}")
    width = n + hm + ht * n * n
    rows = lines[1:]
    if len(rows) != N:
        raise CloudFormatError(f"{path}: header announces {N} rows, found {len(rows)}")
    data = np.empty((N, width))
    for k, row in enumerate(rows):
        if len(row) != width:
            raise CloudFormatError(f"{path}: row {k} has {len(row)} fields, expected {width}")
        try:
            data[k] = [float(t) for t in row]
        except ValueError:
            raise CloudFormatError(f"{path}: row {k} contains a non-numeric field") from None
    if not np.all(np.isfinite(data)):
        raise CloudFormatError(f"{path}: non-finite values")
    points = data[:, :n]
    masses = data[:, n] if hm else None
    tangents = data[:, n + hm:].reshape(N, n, n) if ht else None
    if masses is not None and np.any(masses <= 0):
        raise CloudFormatError(f"{path}: masses must be positive")
    if tangents is not None:
        for k in range(N):
            sym, idem, tr = projector_defects(tangents[k], d)
            if max(sym, idem, tr) > PROJECTOR_FILE_TOL:
                raise CloudFormatError(f"{path}: row {k} is not a rank-{d} projector "
                                       f"(symmetry {sym:.3g}, idempotence {idem:.3g}, trace {tr:.3g})")
    return CloudFile(n, d, points, masses, tangents)


def load_cloud(path: str | Path, tangent_radius: float | None = None) -> PointCloudVarifold:
    """Read a cloud; missing masses default to ``1/N``, missing tangents need ``tangent_radius`` (PCA)."""
    cf = read_cloud(path)
    N = len(cf.points)
    if N == 0:
        raise CloudFormatError(f"{path}: cloud has no points")
    masses = uniform_masses(N) if cf.masses is None else cf.masses
    tangents = cf.tangents
    if tangents is None:
        if tangent_radius is None:
            raise CloudFormatError(f"{path}: file has no tangents and no PCA radius was given")
        tangents = estimate_tangents_pca(cf.points, masses, tangent_radius, cf.d)
    return PointCloudVarifold(cf.points, masses, tangents, cf.d)


def format_cloud(V: PointCloudVarifold, has_mass: bool = True, has_tangent: bool = True) -> str:
    out = [f"{V.n} {V.d} {V.N} {int(has_mass)} {int(has_tangent)}"]
    for k in range(V.N):
        vals = list(V.points[k])
        if has_mass:
            vals.append(V.masses[k])
        if has_tangent:
            vals.extend(V.tangents[k].ravel())
        out.append(" ".join(fmt(v) for v in vals))
    return "\n".join(out) + "\n"


def save_cloud(V: PointCloudVarifold, path: str | Path, has_mass: bool = True, has_tangent: bool = True) -> None:
    Path(path).write_text(format_cloud(V, has_mass, has_tangent))


# configuration

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _parse_bool(s: str) -> bool:
    try:
        return _BOOL[s.lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {s!r}") from None


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(t) for t in s.replace(",", " ").split())


def _parse_strings(s: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in s.split(",") if t.strip())


def _positive(conv):
    def parse(s):
        v = conv(s)
        if not v > 0:
            raise ValueError(f"must be positive, got {s!r}")
        return v
    return parse


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise ValueError(f"must be non-negative, got {s!r}")
    return v


@dataclass(frozen=True)
class RunConfig:
    """Validated settings read from a flat ``key = value`` file.

    Every field is optional; command-line flags take precedence.
    """

    kernel: str | None = None
    epsilon: float | None = None
    operator: str | None = None
    operators: tuple[str, ...] | None = None
    epsilons: tuple[float, ...] | None = None
    scheme: str | None = None
    tau: float | None = None
    steps: int | None = None
    t_end: float | None = None
    snapshot_every: int | None = None
    mass_policy: str | None = None
    tangent_policy: str | None = None
    implicit_masses: bool | None = None
    implicit_weights: bool | None = None
    tol: float | None = None
    max_iter: int | None = None
    tangential: bool | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None
    check: str | None = None
    shape: str | None = None
    n: int | None = None
    N: int | None = None
    seed: int | None = None
    probes: int | None = None
    input: str | None = None
    out: str | None = None
    out_prefix: str | None = None


_PARSERS = {
    "kernel": str, "epsilon": _positive(float), "operator": str, "operators": _parse_strings,
    "epsilons": _parse_floats, "scheme": str, "tau": _positive(float), "steps": _nonneg_int,
    "t_end": float, "snapshot_every": _positive(int), "mass_policy": str, "tangent_policy": str,
    "implicit_masses": _parse_bool, "implicit_weights": _parse_bool, "tol": _positive(float),
    "max_iter": _positive(int), "tangential": _parse_bool, "center": _parse_floats, "radius": _positive(float),
    "check": str, "shape": str, "n": _positive(int), "N": _positive(int), "seed": _nonneg_int,
    "probes": _positive(int), "input": str, "out": str, "out_prefix": str,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Unknown or repeated keys are errors."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return RunConfig(**values)


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(), str(path))


def thread_cap(env=None) -> int | None:
    """Validated ``VARIC_THREADS`` value (None when unset)."""
    env = os.environ if env is None else env
    raw = env.get("VARIC_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"VARIC_THREADS must be a positive integer, got {raw!r}") from None
    if v < 1:
        raise ConfigError(f"VARIC_THREADS must be a positive integer, got {raw!r}")
    return v
