import numpy as np
import pytest

from varic.shapes import (ShapeError, ShapeSampler, analytic_mean_curvature, default_n_rule, probe_indices,
                          sample_shape, shape_residual)


def test_circle_four_points():
    V = sample_shape(ShapeSampler("circle", 4))
    assert np.allclose(V.points, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)
    for x, P in zip(V.points, V.tangents):
        assert np.abs(P @ x).max() <= 1e-15
    assert np.allclose(V.masses, 0.25)


def test_sphere_on_shape():
    V = sample_shape(ShapeSampler("sphere", 100, n=3, jitter=0.4, seed=3))
    assert np.abs(np.linalg.norm(V.points, axis=1) - 1).max() <= 1e-14
    V.validate()


def test_torus_implicit_equation():
    s = ShapeSampler("torus", 1000, n=3, radius=2.0, minor_radius=0.5, jitter=0.5, seed=1)
    assert shape_residual(s, sample_shape(s).points).max() <= 1e-12


@pytest.mark.parametrize("shape,kw", [("circle", {}), ("sphere", {"n": 3}), ("sphere", {"n": 4}),
                                      ("plane", {"n": 3}), ("segment", {"n": 2})])
def test_centered_samples_lie_on_shape(shape, kw):
    N = 64 if shape in ("plane", "segment") else 200
    s = ShapeSampler(shape, N, center=(0.5,) * kw.get("n", 2), jitter=0.3, seed=2, **kw)
    V = sample_shape(s)
    assert shape_residual(s, V.points).max() <= 1e-14
    V.validate()


def test_noise_moves_along_normal():
    s = ShapeSampler("circle", 300, noise=0.05, seed=8)
    r = np.linalg.norm(sample_shape(s).points, axis=1)
    assert 0 < np.abs(r - 1).max() <= 0.05


def test_uv_lattice_masses_follow_area():
    s = ShapeSampler("sphere", 800, n=3, lattice="uv")
    V = sample_shape(s)
    assert V.N == 20 * 40
    sin_t = np.linalg.norm(V.points[:, :2], axis=1)
    assert np.allclose(V.masses / V.masses.sum(), sin_t / sin_t.sum())


def test_uv_only_for_sphere_r3():
    with pytest.raises(ShapeError):
        sample_shape(ShapeSampler("circle", 10, lattice="uv"))


@pytest.mark.parametrize("bad", [ShapeSampler("cube", 10), ShapeSampler("torus", 10, center=(0.0,) * 4),
                                 ShapeSampler("torus", 10, n=3, minor_radius=3.0), ShapeSampler("circle", 0),
                                 ShapeSampler("plane", 10, n=3)])
def test_invalid_samplers(bad):
    with pytest.raises(ShapeError):
        sample_shape(bad)


class TestAnalyticCurvature:
    def test_circle(self):
        s = ShapeSampler("circle", 10)
        assert np.allclose(analytic_mean_curvature(s, [1.0, 0.0]), [-1.0, 0.0])

    def test_sphere_north_pole(self):
        s = ShapeSampler("sphere", 10, n=3)
        assert np.allclose(analytic_mean_curvature(s, [0.0, 0.0, 1.0]), [0.0, 0.0, -2.0])

    def test_scaled_circle(self):
        s = ShapeSampler("circle", 10, radius=2.0, center=(1.0, 1.0))
        assert np.allclose(analytic_mean_curvature(s, [3.0, 1.0]), [-0.5, 0.0])

    def test_plane(self):
        s = ShapeSampler("plane", 16, n=3)
        assert np.all(analytic_mean_curvature(s, [0.1, 0.2, 0.0]) == 0)

    def test_torus_outer_equator(self):
        # principal curvatures 1/r and 1/(R + r), normal pointing away from the axis
        s = ShapeSampler("torus", 10, n=3, radius=2.0, minor_radius=0.5)
        assert np.allclose(analytic_mean_curvature(s, [2.5, 0.0, 0.0]), [-(2.0 + 1 / 2.5), 0, 0])

    def test_off_shape(self):
        with pytest.raises(ShapeError):
            analytic_mean_curvature(ShapeSampler("circle", 10), [1.1, 0.0])


def test_probe_indices_deterministic_and_interior():
    s = ShapeSampler("plane", 400, n=3)
    a, b = probe_indices(s, 16, margin=0.4), probe_indices(s, 16, margin=0.4)
    assert np.array_equal(a, b) and len(a) == 16 == len(set(a.tolist()))
    pts = sample_shape(s).points[a]
    assert np.abs(pts[:, :2]).max() <= 0.6


def test_default_n_rule():
    assert default_n_rule("circle", 0.1, 1) == 20000
    assert default_n_rule("torus", 0.5, 2) == int(np.ceil(50 * 0.5**-2.5))
