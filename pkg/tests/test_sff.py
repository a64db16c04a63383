import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varic.barriers import study_sampler
from varic.curvature import mean_curvature_field
from varic.kernels import default_bump_pair
from varic.operators import compile_operator, parse_operator
from varic.shapes import ShapeSampler, probe_indices, sample_shape
from varic.sff import SffError, assemble_A, beta, beta_field, c_field, c_matrix, sff_field
from varic.varifold import PointCloudVarifold, projector_onto

from conftest import random_cloud


def beta_oracle(V, pair, eps, spec, i):
    """Literal sum for one point."""
    X, m, P = V.points, V.masses, V.tangents
    r = np.linalg.norm(X - X[i], axis=1)
    D = (m * pair.xi.value(r / eps)).sum()
    out = np.zeros((V.n,) * 3)
    for l in range(V.N):
        if l == i or r[l] == 0 or r[l] > eps:
            continue
        w = -(V.d / V.n) * m[l] * pair.rho.derivative(np.array([r[l] / eps]))[0] / (r[l] * D)
        v = compile_operator(spec, P[i], P[l]) @ (X[l] - X[i])
        out += w * v[:, None, None] * P[l][None]
    return out / eps


def circle_oracle(theta):
    t = np.array([-np.sin(theta), np.cos(theta)])
    dP = np.array([[np.sin(2 * theta), -np.cos(2 * theta)], [-np.cos(2 * theta), -np.sin(2 * theta)]])
    P = np.outer(t, t)
    H = -np.array([np.cos(theta), np.sin(theta)])
    return t[:, None, None] * dP[None] + H[:, None, None] * P[None]


class TestBeta:
    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("spec", ["S", "S.Tperp", "2*Id - T"])
    def test_loop_oracle(self, seed, spec):
        V = random_cloud(seed, N=40)
        pair = default_bump_pair(V.n)
        B, ok = beta_field(V, pair, 0.35, spec)
        for i in range(0, V.N, 7):
            assert np.allclose(B[i], beta_oracle(V, pair, 0.35, spec, i), rtol=1e-12, atol=1e-12)

    def test_circle_component(self):
        V = sample_shape(ShapeSampler("circle", 4000))
        B, ok = beta(V, default_bump_pair(2), 0.05, "S", 0)
        assert ok
        # first index normal direction, (j, k) = tangent direction
        assert abs(B[0, 1, 1] - (-1.0)) <= 0.1
        assert np.abs(B - circle_oracle(0.0)).max() <= 0.1

    def test_flat_plane_zero(self):
        V = sample_shape(ShapeSampler("plane", 400, n=3))
        interior = np.flatnonzero(np.abs(V.points[:, :2]).max(axis=1) <= 0.7)
        f = sff_field(V, default_bump_pair(3), 0.3, "S", rows=interior)
        assert f.valid.all()
        assert np.abs(f.beta).max() <= 1e-10 and np.abs(f.A).max() <= 1e-10

    def test_symmetry_in_jk(self):
        V = random_cloud(3, N=80, n=3)
        B, _ = beta_field(V, default_bump_pair(3), 0.4, "Tperp.S")
        assert np.array_equal(B, np.swapaxes(B, 2, 3))

    @settings(max_examples=15)
    @given(st.integers(0, 2**32), st.floats(-2, 2), st.floats(-2, 2))
    def test_linearity_in_spec(self, seed, a, b):
        V = random_cloud(seed, N=50)
        pair = default_bump_pair(V.n)
        combo = parse_operator("S").scaled(a) + parse_operator("Tperp.Sperp").scaled(b)
        ref = a * beta_field(V, pair, 0.3, "S")[0] + b * beta_field(V, pair, 0.3, "Tperp.Sperp")[0]
        got = beta_field(V, pair, 0.3, combo)[0]
        assert np.abs(got - ref).max() <= 1e-13 * max(1.0, np.abs(ref).max())

    def test_s_tperp_vanishes(self):
        norms = []
        for eps in (0.4, 0.2, 0.1, 0.05):
            s = study_sampler("circle", eps)
            V = sample_shape(s)
            B, _ = beta_field(V, default_bump_pair(2), eps, "S.Tperp", rows=probe_indices(s, 16))
            norms.append(np.linalg.norm(B.reshape(len(B), -1), axis=1).max())
        assert norms[-1] <= 0.1 * norms[0]

    def test_s_and_s_t_agree_in_limit(self):
        diffs = []
        for eps in (0.2, 0.05):
            s = study_sampler("circle", eps)
            V = sample_shape(s)
            rows = probe_indices(s, 16)
            diffs.append(np.abs(beta_field(V, default_bump_pair(2), eps, "S", rows=rows)[0]
                                - beta_field(V, default_bump_pair(2), eps, "S.T", rows=rows)[0]).max())
        assert diffs[1] < diffs[0]

    def test_index_error(self):
        with pytest.raises(IndexError):
            beta(random_cloud(0, N=5), default_bump_pair(2), 0.3, "S", 5)


class TestC:
    def test_constant_axis_projector_exact(self):
        V = random_cloud(4, N=60, n=3, d=2)
        P = np.diag([1.0, 1.0, 0.0])
        W = V.replace(tangents=np.broadcast_to(P, V.tangents.shape))
        c, ok = c_field(W, default_bump_pair(3), 0.4)
        assert np.all(c[ok] == P)

    def test_constant_projector(self):
        V = random_cloud(5, N=60, n=3, d=1)
        P = projector_onto(np.array([[1.0], [2.0], [-0.5]]))
        W = V.replace(tangents=np.broadcast_to(P, V.tangents.shape))
        c, ok = c_field(W, default_bump_pair(3), 0.4)
        assert ok.any() and np.abs(c[ok] - P).max() <= 1e-15

    def test_circle_limit(self):
        errs = []
        for N, eps in ((500, 0.2), (2000, 0.05), (8000, 0.0125)):
            c, ok = c_matrix(sample_shape(ShapeSampler("circle", N)), default_bump_pair(2), eps, 0)
            errs.append(np.abs(c - np.diag([0.0, 1.0])).max())
        assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-3

    def test_isolated_point_invalid(self):
        X = np.array([[0.0, 0.0], [5.0, 0.0]])
        V = PointCloudVarifold(X, np.ones(2), np.stack([np.diag([1.0, 0.0])] * 2), 1)
        c, ok = c_matrix(V, default_bump_pair(2), 0.5, 0)
        assert not ok and np.all(c == 0)

    def test_symmetric(self):
        c, _ = c_field(random_cloud(6, N=80), default_bump_pair(3), 0.4)
        assert np.array_equal(c, np.swapaxes(c, 1, 2))


class TestAssemble:
    def test_dense_oracle(self):
        V = sample_shape(ShapeSampler("circle", 4000))
        pair = default_bump_pair(2)
        f = sff_field(V, pair, 0.05, "S", rows=[0])
        Binv = np.linalg.inv(np.eye(2) + f.c[0])
        expected = f.beta[0] - np.einsum("jk,i->ijk", f.c[0], Binv @ f.H[0])
        assert np.allclose(f.A[0], expected, atol=1e-12)
        assert f.A[0, 0, 1, 1] == pytest.approx(f.beta[0, 0, 1, 1] - f.c[0, 1, 1] * (Binv @ f.H[0])[0], abs=1e-12)
        H = mean_curvature_field(V, pair, 0.05, "S", rows=[0]).H[0]
        assert np.array_equal(f.H[0], H)

    def test_projector_c_always_invertible(self):
        P = projector_onto(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        A = assemble_A(np.zeros((3, 3, 3)), P, np.array([1.0, 2.0, 3.0]))
        assert np.isfinite(A).all()
        assert np.allclose(np.linalg.eigvalsh(np.eye(3) + P), [1, 2, 2])

    def test_flat(self):
        assert np.all(assemble_A(np.zeros((2, 2, 2)), np.diag([1.0, 0.0]), np.zeros(2)) == 0)

    @pytest.mark.parametrize("shift", [0.0, 1e-10])
    def test_ill_conditioned(self, shift):
        c = np.diag([-1.0 + shift, 0.0])
        with pytest.raises(SffError):
            assemble_A(np.zeros((2, 2, 2)), c, np.ones(2))
