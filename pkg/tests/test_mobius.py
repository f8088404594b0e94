import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from mobius_sphere.mobius import (
    INF,
    J,
    LowerTriangular,
    MobiusTransform,
    PoleError,
    apply,
    frame_transform,
    frame_transform_matrix,
    gen_exp,
    gen_exp_matrix,
    gen_log,
    gen_log_matrix,
    mobius_diff,
    mobius_hess0,
    random_su2,
    sample_transform,
    scale_factor,
)

finite = st.floats(-5, 5, allow_nan=False)
points = st.builds(complex, finite, finite)
seeds = st.integers(0, 2**32 - 1)


def random_mobius(rng, spread=1.0):
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return MobiusTransform.from_matrix(np.eye(2) + spread * m)


def chordal(z, w):
    # distance on the sphere, well defined at infinity
    def unit(v):
        v = np.asarray(v, dtype=complex)
        inf = ~np.isfinite(v)
        vv = np.where(inf, 0, v)
        d = 1 + np.abs(vv) ** 2
        x = np.stack([2 * vv.real / d, 2 * vv.imag / d, (np.abs(vv) ** 2 - 1) / d])
        return np.where(inf, np.array([0, 0, 1.0]).reshape(3, *([1] * vv.ndim)), x)

    return np.linalg.norm(unit(z) - unit(w), axis=0)


def same_up_to_sign(m1, m2, tol):
    return min(np.abs(m1 - m2).max(), np.abs(m1 + m2).max()) < tol


class TestMobiusTransform:
    def test_determinant_normalized(self):
        g = MobiusTransform(2, 1, 1, 3)
        assert np.isclose(np.linalg.det(g.matrix), 1)

    def test_singular_rejected(self):
        with pytest.raises(ValueError):
            MobiusTransform(1, 2, 2, 4)

    def test_identity_fixes_points(self):
        z = np.array([0, 1 + 1j, -3j, INF])
        out = apply(MobiusTransform.identity(), z)
        assert np.allclose(out[:3], z[:3]) and np.isinf(out[3])

    def test_infinity_maps_to_a_over_c(self):
        g = MobiusTransform(1, 2, 3, 7)
        assert np.isclose(g(INF), g.a / g.c)

    def test_pole_maps_to_infinity(self):
        g = MobiusTransform(1, 0, 1, 1)
        assert np.isinf(g(-1.0 + 0j))

    def test_inverse(self, rng):
        g = random_mobius(rng)
        z = rng.normal(size=20) + 1j * rng.normal(size=20)
        assert np.allclose(g.inverse()(g(z)), z)

    @settings(max_examples=200, deadline=None)
    @given(seeds, points)
    def test_group_action(self, seed, z):
        rng = np.random.default_rng(seed)
        g, h = random_mobius(rng), random_mobius(rng)
        assert chordal((g @ h)(z), g(h(z))) < 1e-10

    def test_group_action_near_infinity(self, rng):
        g, h = random_mobius(rng), random_mobius(rng)
        z = np.array([1e12 + 3e11j, -4e13j, INF, 1e-13])
        assert chordal((g @ h)(z), g(h(z))).max() < 1e-10

    def test_J_involution(self, rng):
        z = rng.normal(size=10) + 1j * rng.normal(size=10)
        assert np.allclose(J(J(z)), z)
        assert np.allclose(J(z), -1 / z)
        assert same_up_to_sign(J.matrix, J.inverse().matrix, 1e-15)


class TestGenLog:
    def test_origin_identity(self):
        assert np.allclose(gen_log_matrix(0), np.eye(2))
        assert np.allclose(gen_exp(0).matrix, np.eye(2))

    def test_sends_point_to_origin(self):
        z = 1 + 1j
        assert abs(gen_log(z)(z)) < 1e-15
        assert abs(gen_exp(z)(0) - z) < 1e-15

    def test_infinity(self):
        assert np.allclose(gen_log_matrix(INF), [[0, -1], [1, 0]])

    def test_ray_lands_on_positive_real_axis(self):
        z = 0.7 * np.exp(0.9j)
        w = gen_log(z)(1.3 * z)
        assert abs(w.imag) < 1e-14 and w.real > 0

    def test_exp_differential(self):
        z = 2j
        g = gen_exp(z)
        assert np.isclose(abs(mobius_diff(g, 0)), 1 + abs(z) ** 2)

    def test_unitary(self, rng):
        z = rng.normal(size=50) + 1j * rng.normal(size=50)
        m = gen_log_matrix(z)
        assert np.allclose(m @ np.conj(np.swapaxes(m, -1, -2)), np.eye(2))
        assert np.allclose(gen_exp_matrix(z) @ m, np.eye(2))


class TestFrameTransform:
    def test_identity(self):
        D = frame_transform(MobiusTransform.identity(), 0.3 - 2j)
        assert np.isclose(D.a, 1) and abs(D.n) < 1e-15

    def test_rotation_fixing_origin(self):
        g = MobiusTransform(np.exp(0.4j), 0, 0, np.exp(-0.4j))
        D = frame_transform(g, 0)
        assert np.allclose(D.matrix, g.matrix)

    def test_lower_triangular(self, rng):
        worst = 0.0
        for _ in range(1000):
            g = random_mobius(rng, spread=2.0)
            z = complex(*rng.normal(size=2) * 3)
            worst = max(worst, abs(frame_transform_matrix(g, z)[0, 1]))
        assert worst < 1e-10

    def test_cocycle(self, rng):
        for _ in range(1000):
            g, h = random_mobius(rng), random_mobius(rng)
            z = complex(*rng.normal(size=2))
            lhs = frame_transform(g @ h, z).matrix
            rhs = (frame_transform(g, h(z)) @ frame_transform(h, z)).matrix
            assert same_up_to_sign(lhs, rhs, 1e-9 * max(1, np.abs(lhs).max()))

    def test_differential_is_scale_factor(self, rng):
        for _ in range(1000):
            g = random_mobius(rng)
            z = complex(*rng.normal(size=2))
            D = frame_transform(g, z).to_mobius()
            lam = scale_factor(g, z)
            assert abs(abs(mobius_diff(D, 0)) ** 2 - lam) < 1e-9 * max(1.0, lam)


class TestScaleFactor:
    def test_identity(self):
        assert scale_factor(MobiusTransform.identity(), 1 + 2j) == 1

    def test_diagonal_at_origin(self):
        k = 3.0
        g = MobiusTransform(k**0.5, 0, 0, k**-0.5)
        assert np.isclose(scale_factor(g, 0), k**2)

    def test_positive_at_infinity(self, rng):
        g = random_mobius(rng)
        lam_inf = scale_factor(g, INF)
        lam_far = scale_factor(g, 1e8 + 0j)
        assert lam_inf > 0 and np.isclose(lam_inf, lam_far, rtol=1e-6)

    def test_cocycle(self, rng):
        for _ in range(1000):
            g, h = random_mobius(rng), random_mobius(rng)
            z = complex(*rng.normal(size=2))
            lhs = scale_factor(g @ h, z)
            assert abs(lhs - scale_factor(g, h(z)) * scale_factor(h, z)) < 1e-9 * max(1.0, lhs)


class TestDerivatives:
    def test_identity(self):
        assert mobius_diff(MobiusTransform.identity(), 0.2j) == 1
        assert mobius_hess0(MobiusTransform.identity()) == 0

    def test_known_value(self):
        assert np.isclose(mobius_diff(MobiusTransform(1, 0, 1, 1), 1), 0.25)

    def test_against_finite_differences(self, rng):
        g = random_mobius(rng)
        h = 1e-4
        d2 = (g(h) - 2 * g(0) + g(-h)) / h**2
        assert abs(mobius_hess0(g) - d2) < 1e-5 * max(1, abs(d2))
        x = 0.3 + 0.1j
        assert abs(mobius_diff(g, x) - (g(x + h) - g(x - h)) / (2 * h)) < 1e-6

    def test_poles(self):
        g = MobiusTransform(1, 0, 1, 1)
        with pytest.raises(PoleError):
            mobius_diff(g, -1)
        with pytest.raises(PoleError):
            mobius_hess0(MobiusTransform(0, -1, 1, 0))


class TestLowerTriangular:
    def test_inverse_conjugation(self, rng):
        for _ in range(1000):
            a = complex(*rng.normal(size=2))
            L = LowerTriangular(a, complex(*rng.normal(size=2)))
            conj = np.linalg.inv(J.matrix) @ L.matrix.T @ J.matrix
            assert same_up_to_sign(L.inverse().matrix, conj, 1e-9 * max(1, np.abs(conj).max()))

    def test_composition_matches_matrices(self, rng):
        A = LowerTriangular(1.2 - 0.3j, 0.5j)
        Bm = LowerTriangular(0.4j, -1.1)
        assert np.allclose((A @ Bm).matrix, A.matrix @ Bm.matrix)

    def test_zero_a_rejected(self):
        with pytest.raises(ValueError):
            LowerTriangular(0, 1)


class TestSampleTransform:
    def test_rotation_for_unit_scale(self):
        g = sample_transform(1, 3)
        assert g.is_unitary()
        z = np.linspace(-3, 3, 11) + 0.5j
        assert np.allclose(scale_factor(g, z), 1)

    def test_max_scale_by_grid_search(self):
        g = sample_transform(4, 11)
        theta, phi = np.meshgrid(np.linspace(1e-3, np.pi - 1e-3, 800), np.linspace(0, 2 * np.pi, 800))
        z = np.tan(theta / 2) * np.exp(1j * phi)
        lam = scale_factor(g, z)
        start = np.unravel_index(lam.argmax(), lam.shape)
        res = minimize(
            lambda p: -scale_factor(g, np.tan(p[0] / 2) * np.exp(1j * p[1])),
            [theta[start], phi[start]],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-15},
        )
        assert abs(-res.fun - 4) < 1e-9
        assert 3.9 < lam.max() <= 4 + 1e-9

    def test_unit_determinant(self, rng):
        for k in (1, 2, 8, 12):
            g = sample_transform(k, rng)
            assert np.isclose(np.linalg.det(g.matrix), 1)

    def test_rejects_small_scale(self):
        with pytest.raises(ValueError):
            sample_transform(0.5)

    def test_seeded(self):
        assert np.array_equal(sample_transform(3, 7).matrix, sample_transform(3, 7).matrix)

    def test_haar_su2_unitary(self, rng):
        assert random_su2(rng).is_unitary()
