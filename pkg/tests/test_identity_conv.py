import numpy as np
import pytest

from mobius_sphere.identity_conv import (
    DeltaTable,
    cached_delta,
    convolve_with_response,
    identity_convolve,
    precompute_delta,
    precompute_filter_response,
)
from mobius_sphere.mobius import apply_matrix, gen_log_matrix
from mobius_sphere.sht import grid_spec, legendre_table, random_coeffs, sht_inverse, synthesize, wigner_D_matrix


def sphere_quadrature(n):
    """Gauss-Legendre in theta (the integrands carry half-angle terms) times uniform phi."""
    x, w = np.polynomial.legendre.leggauss(n)
    theta = 0.5 * np.pi * (x + 1)
    wt = 0.5 * np.pi * w * np.sin(theta)
    phi = 2 * np.pi * (np.arange(n) + 0.5) / n
    T, P = np.meshgrid(theta, phi, indexing="ij")
    return T.ravel(), P.ravel(), (wt[:, None] * np.full(n, 2 * np.pi / n)).ravel()


def delta_2d(B, n):
    """Full integral  int Y_l^m(z) W^{l'}_{m' m''}(log_z) dz  for every index, no reduction."""
    T, P, W = sphere_quadrature(n)
    z = np.tan(T / 2) * np.exp(1j * P)
    logs = gen_log_matrix(z)
    lam = legendre_table(B, T)[0]  # [l, m, k]
    ms = np.arange(-B + 1, B)
    Yv = lam * np.exp(1j * ms[None, :, None] * P[None, None, :])
    out = np.zeros((B, 2 * B - 1, B, 2 * B - 1, 2 * B - 1), complex)  # [l', m', l, m, m'']
    c = B - 1
    for lp in range(B):
        sign = (-1.0) ** np.arange(-lp, lp + 1)
        Wk = np.stack([wigner_D_matrix(lp, g) for g in logs]) * sign[None, :, None] * sign[None, None, :]
        sl = slice(c - lp, c + lp + 1)
        out[lp, sl, :, :, sl] = np.einsum("kab,lmk,k->almb", Wk, Yv, W)
    return out


@pytest.fixture(scope="module")
def full8():
    return delta_2d(8, 64)


class TestDelta:
    def test_shape_and_mask(self):
        T = precompute_delta(4)
        assert T.values.shape == (4, 7, 4, 7)
        assert np.all(T.values[~T.valid_mask()] == 0)

    def test_immutable(self):
        T = precompute_delta(3)
        with pytest.raises(ValueError):
            T.values[0, 0, 0, 0] = 1

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            DeltaTable(3, np.zeros((3, 5, 3, 4)))

    def test_deterministic(self):
        assert np.array_equal(precompute_delta(6).values, precompute_delta(6).values)

    def test_matches_2d_quadrature(self, full8):
        T = precompute_delta(8)
        diag = np.einsum("abcdd->abcd", full8)
        assert np.abs(diag - T.values).max() < 1e-8

    def test_off_diagonal_orders_vanish(self, full8):
        off = full8.copy()
        idx = np.arange(15)
        off[:, :, :, idx, idx] = 0
        assert np.abs(off).max() < 1e-10

    def test_cached(self):
        assert cached_delta(5) is cached_delta(5)


def direct_identity_conv(psi_c, f_c, B, oversample=4):
    """(psi * f)(y) = int psi(z) f(log_z y) dz on a 4x oversampled quadrature grid."""
    T, P, W = sphere_quadrature(oversample * 2 * B)
    psi = synthesize(psi_c, T, P)
    logs = gen_log_matrix(np.tan(T / 2) * np.exp(1j * P))
    y = grid_spec(B).z.ravel()
    out = np.empty(y.size, complex)
    for k, yk in enumerate(y):
        p = apply_matrix(logs, yk)
        theta = np.where(np.isfinite(p), 2 * np.arctan(np.abs(p)), np.pi)
        out[k] = np.sum(W * psi * synthesize(f_c, theta, np.angle(np.where(np.isfinite(p), p, 1))))
    return out.reshape(2 * B, 2 * B)


class TestIdentityConvolve:
    def test_direct_quadrature_oracle(self, rng):
        B = 8
        psi, f = random_coeffs(B, rng, real=False), random_coeffs(B, rng, real=False)
        spectral = sht_inverse(identity_convolve(psi, f, precompute_delta(B)))
        direct = direct_identity_conv(psi, f, B)
        assert np.linalg.norm(spectral - direct) / np.linalg.norm(direct) < 1e-6

    def test_delta_filter_at_north_pole(self, rng):
        # a filter concentrated near z = 0 reproduces psi up to scale
        B = 16
        psi = random_coeffs(B, rng, band=4)
        f = np.zeros_like(psi)
        f[:, B - 1] = np.sqrt((2 * np.arange(B) + 1) / (4 * np.pi))  # sum_l Y_l^0(0) Y_l^0
        out = identity_convolve(psi, f, cached_delta(B))
        assert np.abs(out[:4] - psi[:4]).max() < 1e-10

    def test_response_cache_equivalent(self, rng):
        B = 8
        T = cached_delta(B)
        psi, f = random_coeffs(B, rng, size=3), random_coeffs(B, rng)
        resp = precompute_filter_response(f, T)
        assert np.allclose(convolve_with_response(psi, resp), identity_convolve(psi, f, T))

    def test_mismatched_band(self, rng):
        with pytest.raises(ValueError):
            identity_convolve(random_coeffs(4, rng), random_coeffs(8, rng), cached_delta(8))

    def test_zero(self, rng):
        out = identity_convolve(np.zeros((8, 15)), random_coeffs(8, rng), cached_delta(8))
        assert not out.any()
