"""Spectral identity convolution ``(psi * f)(y) = int psi(z) f(log_z y) dz``.

Writing ``log_z`` as a rotation with Euler angles ``(0, theta, phi)`` makes the
longitude integral collapse, so the whole operator is driven by one table

    Delta[l', m', l, m''] = 2 pi int Lambda_{l m''}(theta) W^{l'}_{m' m''}(theta) sin(theta) dtheta,

where ``Lambda`` is the theta-part of ``Y_l^{m''}`` and
``W^{l'}_{m'n}(theta) = (-1)^{m'+n} d^{l'}_{m'n}(theta)`` is the harmonic
rotation matrix of that Euler rotation.
"""

from __future__ import annotations

import functools

import numpy as np

from .sht import legendre_table, wigner_d_matrix


class DeltaTable:
    """Dense ``Delta[l', m'+B-1, l, m''+B-1]`` table for band-limit ``B``."""

    __slots__ = ("B", "values")

    def __init__(self, B, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (B, 2 * B - 1, B, 2 * B - 1):
            raise ValueError(f"table shape {values.shape} does not match band-limit {B}")
        values.setflags(write=False)
        self.B = B
        self.values = values

    def valid_mask(self):
        """Mask of entries with ``|m'| <= l'`` and ``|m''| <= min(l, l')``."""
        B = self.B
        l = np.arange(B)
        m = np.arange(-B + 1, B)
        lp = l[:, None, None, None]
        mp = m[None, :, None, None]
        ll = l[None, None, :, None]
        mpp = m[None, None, None, :]
        return (np.abs(mp) <= lp) & (np.abs(mpp) <= np.minimum(ll, lp))


def precompute_delta(B, nodes=None):
    """Build the Delta table with Gauss-Legendre quadrature in theta (4B nodes)."""
    if B < 1:
        raise ValueError("band limit must be positive")
    nodes = 4 * B if nodes is None else nodes
    x, w = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * np.pi * (x + 1.0)
    weights = 0.5 * np.pi * w * np.sin(theta) * 2 * np.pi
    lam = legendre_table(B, theta)[0]  # [l, m'', k]
    c = B - 1
    out = np.zeros((B, 2 * B - 1, B, 2 * B - 1))
    for lp in range(B):
        d = wigner_d_matrix(lp, theta)  # [k, m'+lp, n+lp]
        sign = (-1.0) ** np.arange(-lp, lp + 1)
        wmat = d * sign[None, :, None] * sign[None, None, :]
        sl = slice(c - lp, c + lp + 1)
        out[lp, sl, :, sl] = np.einsum("kab,lbk,k->alb", wmat, lam[:, sl, :], weights, optimize=True)
    return DeltaTable(B, out)


@functools.lru_cache(maxsize=8)
def cached_delta(B):
    return precompute_delta(B)


def _check(table, *coeffs):
    for c in coeffs:
        if c.shape[-2:] != (table.B, 2 * table.B - 1):
            raise ValueError(
                f"coefficients of shape {c.shape[-2:]} do not match table band-limit {table.B}"
            )


def precompute_filter_response(f_coeffs, table):
    """Cache ``R[l', l, m''] = sum_m' f[l', m'] Delta[l', m', l, m'']``."""
    f_coeffs = np.asarray(f_coeffs, dtype=complex)
    _check(table, f_coeffs)
    return np.einsum("...ab,abcd->...acd", f_coeffs, table.values, optimize=True)


def convolve_with_response(psi_coeffs, response):
    """Identity convolution against a filter already reduced by :func:`precompute_filter_response`."""
    psi_coeffs = np.asarray(psi_coeffs, dtype=complex)
    return np.einsum("...ld,...ald->...ad", psi_coeffs, response, optimize=True)


def identity_convolve(psi_coeffs, f_coeffs, table):
    """Harmonic coefficients of ``psi *_e f``."""
    psi_coeffs = np.asarray(psi_coeffs, dtype=complex)
    _check(table, psi_coeffs)
    return convolve_with_response(psi_coeffs, precompute_filter_response(f_coeffs, table))
