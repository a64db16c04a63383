import numpy as np
import pytest
from hypothesis import settings

from varic.rng import SplitMix64
from varic.varifold import PointCloudVarifold, projector_onto

# fixed example sequence so that recorded test output is reproducible
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


def random_projectors(g: SplitMix64, N: int, n: int, d: int) -> np.ndarray:
    return np.stack([projector_onto(g.normal(n * d).reshape(n, d)) for _ in range(N)])


def random_cloud(seed: int, N: int | None = None, n: int | None = None, d: int | None = None,
                 scale: float = 1.0) -> PointCloudVarifold:
    """Uniform points in ``[0, scale]^n`` with random masses and random projectors."""
    g = SplitMix64(seed)
    n = n or 2 + int(g.integers(1, 2)[0])
    d = d or 1 + int(g.integers(1, n - 1)[0])
    N = N or 2 + int(g.integers(1, 299)[0])
    X = g.uniform(N * n, 0.0, scale).reshape(N, n)
    m = g.uniform(N, 0.5, 1.5)
    return PointCloudVarifold(X, m, random_projectors(g, N, n, d), d)


def brute_pairs(points, r, coincident=False):
    """O(N^2) oracle: sorted ordered pairs with ``0 < |x_i - x_j| <= r``."""
    X = np.asarray(points, dtype=float)
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    ok = d2 <= r * r
    np.fill_diagonal(ok, False)
    if not coincident:
        ok &= d2 > 0
    return np.nonzero(ok)


def line_cloud(N: int, h: float = 1.0, n: int = 2) -> PointCloudVarifold:
    X = np.zeros((N, n))
    X[:, 0] = h * np.arange(N)
    P = np.zeros((N, n, n))
    P[:, 0, 0] = 1.0
    return PointCloudVarifold(X, np.full(N, 1.0 / N), P, 1)


def two_points(delta: float) -> PointCloudVarifold:
    X = np.array([[0.0, 0.0], [delta, 0.0]])
    P = np.zeros((2, 2, 2))
    P[:, 0, 0] = 1.0
    return PointCloudVarifold(X, np.array([0.5, 0.5]), P, 1)


@pytest.fixture
def rng():
    return SplitMix64(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
