"""Equiangular sphere grid, spherical harmonic transforms and Wigner matrices.

Grids are ``(..., 2B, 2B)`` arrays indexed ``[theta_i, phi_j]`` with
``theta_i = pi (2i+1) / (4B)`` and ``phi_j = pi j / B``; no sample sits on a
pole.  Harmonic coefficients are dense ``(..., B, 2B-1)`` complex arrays
indexed ``[l, m + B - 1]``; entries with ``|m| > l`` are zero.  Harmonics are
orthonormal with the Condon-Shortley phase.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from math import factorial

import numpy as np


@functools.lru_cache(maxsize=None)
def fejer_weights(B):
    """Quadrature weights in ``cos(theta)`` exact for Legendre degrees below 2B."""
    n = 2 * B
    theta = np.pi * (2 * np.arange(n) + 1) / (4 * B)
    vander = np.polynomial.legendre.legvander(np.cos(theta), n - 1).T
    rhs = np.zeros(n)
    rhs[0] = 2.0
    w = np.linalg.lstsq(vander, rhs, rcond=None)[0]
    w.setflags(write=False)
    return w


def legendre_table(L, theta, nderiv=0):
    """Normalized associated Legendre functions and their theta derivatives.

    Returns an array of shape ``(nderiv + 1, L, 2L - 1) + theta.shape`` whose
    entry ``[k, l, m + L - 1]`` is the k-th theta derivative of the
    theta-part of ``Y_l^m`` (zero for ``|m| > l``).
    """
    theta = np.asarray(theta, dtype=float)
    x, y = np.cos(theta), np.sin(theta)
    out = np.zeros((nderiv + 1, L, 2 * L - 1) + theta.shape)
    p = out[0]
    c = L - 1
    pmm = np.full(theta.shape, 1.0 / np.sqrt(4 * np.pi))
    for m in range(L):
        if m > 0:
            pmm = -np.sqrt((2 * m + 1) / (2 * m)) * y * pmm
        p[m, c + m] = pmm
        if m + 1 < L:
            p[m + 1, c + m] = np.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, L):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = np.sqrt((2 * l + 1) * ((l - 1) ** 2 - m * m) / ((2 * l - 3) * (l * l - m * m)))
            p[l, c + m] = a * x * p[l - 1, c + m] - b * p[l - 2, c + m]
    for m in range(1, L):
        p[:, c - m] = (-1) ** m * p[:, c + m]
    if nderiv:
        ls = np.arange(L)[:, None]
        ms = np.arange(-c, c + 1)[None, :]
        up = np.sqrt(np.clip((ls - ms) * (ls + ms + 1), 0, None))
        down = np.sqrt(np.clip((ls + ms) * (ls - ms + 1), 0, None))
        extra = (Ellipsis,) + (None,) * theta.ndim
        up, down = up[extra], down[extra]
        for k in range(1, nderiv + 1):
            prev = out[k - 1]
            shifted_up = np.zeros_like(prev)
            shifted_up[:, :-1] = prev[:, 1:]
            shifted_dn = np.zeros_like(prev)
            shifted_dn[:, 1:] = prev[:, :-1]
            out[k] = 0.5 * (up * shifted_up - down * shifted_dn)
            out[k][np.abs(ms[0]) > ls[:, 0][:, None]] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Sampling grid and transform tables for band-limit ``B``."""

    B: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    legendre: np.ndarray  # (2B-1, B, 2B): [m, l, i]
    analysis: np.ndarray  # legendre scaled by quadrature weights and pi/B

    @property
    def shape(self):
        return (2 * self.B, 2 * self.B)

    @property
    def z(self):
        """Stereographic coordinates of the grid points, shape ``(2B, 2B)``."""
        return np.tan(self.theta / 2)[:, None] * np.exp(1j * self.phi)[None, :]

    @property
    def area(self):
        """Per-point area weights (sum to 4 pi), shape ``(2B, 2B)``."""
        return np.repeat((np.pi / self.B) * self.weights[:, None], 2 * self.B, axis=1)

    @property
    def m_index(self):
        """FFT bin of each order ``m = -(B-1) .. B-1``."""
        return np.arange(-self.B + 1, self.B) % (2 * self.B)


@functools.lru_cache(maxsize=None)
def grid_spec(B):
    if B < 1:
        raise ValueError("band limit must be positive")
    n = 2 * B
    theta = np.pi * (2 * np.arange(n) + 1) / (4 * B)
    phi = np.pi * np.arange(n) / B
    w = fejer_weights(B)
    leg = np.ascontiguousarray(np.moveaxis(legendre_table(B, theta)[0], 1, 0))
    analysis = leg * (w * np.pi / B)[None, None, :]
    for arr in (theta, phi, leg, analysis):
        arr.setflags(write=False)
    return GridSpec(B, theta, phi, w, leg, analysis)


def coeff_shape(B):
    return (B, 2 * B - 1)


def valid_mask(B):
    """Boolean ``(B, 2B-1)`` mask of stored ``(l, m)`` pairs with ``|m| <= l``."""
    l = np.arange(B)[:, None]
    m = np.arange(-B + 1, B)[None, :]
    return np.abs(m) <= l


def random_coeffs(B, rng, size=(), real=True, band=None, decay=0.0):
    """Random band-limited coefficients; ``band`` truncates to ``l < band``.

    ``decay`` damps degree ``l`` by ``(1 + l) ** -decay``.
    """
    rng = np.random.default_rng(rng)
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    c = rng.standard_normal(shape + coeff_shape(B)) + 1j * rng.standard_normal(shape + coeff_shape(B))
    keep = valid_mask(B)
    if band is not None:
        keep = keep & (np.arange(B)[:, None] < band)
    c = c * keep * (1.0 + np.arange(B))[:, None] ** -decay
    return enforce_real(c) if real else c


def enforce_real(coeffs):
    """Project coefficients onto those of a real function."""
    coeffs = np.array(coeffs, dtype=complex)
    B = coeffs.shape[-2]
    c = B - 1
    coeffs[..., c] = coeffs[..., c].real
    for m in range(1, B):
        coeffs[..., c - m] = (-1) ** m * np.conj(coeffs[..., c + m])
    return coeffs


def _check_grid(values, B):
    if values.shape[-2:] != (2 * B, 2 * B):
        raise ValueError(f"expected grid of shape (..., {2 * B}, {2 * B}), got {values.shape}")


def sht_forward(values, B=None):
    """Harmonic coefficients of grid samples (exact for band-limited input)."""
    values = np.asarray(values)
    if B is None:
        B = values.shape[-1] // 2
    spec = grid_spec(B)
    _check_grid(values, B)
    batch = values.shape[:-2]
    flat = values.reshape((-1, 2 * B, 2 * B))
    c = B - 1
    if np.isrealobj(values):
        g = np.fft.rfft(flat, axis=-1)[..., :B]  # orders 0..B-1
        g = np.moveaxis(g, (0, 1, 2), (2, 1, 0))  # [m, i, batch]
        half = np.matmul(spec.analysis[c:], g)  # [m, l, batch]
        out = np.zeros((flat.shape[0], B, 2 * B - 1), dtype=complex)
        out[..., c:] = np.moveaxis(half, (0, 1, 2), (2, 1, 0))
        out = enforce_real(out)
    else:
        g = np.fft.fft(flat, axis=-1)[..., spec.m_index]
        g = np.moveaxis(g, (0, 1, 2), (2, 1, 0))
        out = np.moveaxis(np.matmul(spec.analysis, g), (0, 1, 2), (2, 1, 0))
    return out.reshape(batch + (B, 2 * B - 1))


def sht_inverse(coeffs, B=None, real=False):
    """Synthesize coefficients on the grid of band-limit ``B`` (default: their own).

    With ``real=True`` only orders ``m >= 0`` are read and a real grid is returned.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    Bc = coeffs.shape[-2]
    if B is None:
        B = Bc
    if Bc > B:
        raise ValueError(f"coefficients of band-limit {Bc} do not fit a grid of band-limit {B}")
    if Bc < B:
        padded = np.zeros(coeffs.shape[:-2] + coeff_shape(B), dtype=complex)
        padded[..., :Bc, B - Bc : B + Bc - 1] = coeffs
        coeffs = padded
    spec = grid_spec(B)
    batch = coeffs.shape[:-2]
    flat = np.moveaxis(coeffs.reshape((-1, B, 2 * B - 1)), (0, 1, 2), (2, 1, 0))  # [m, l, batch]
    c = B - 1
    if real:
        s = np.matmul(np.swapaxes(spec.legendre[c:], 1, 2), flat[c:])  # [m>=0, i, batch]
        s = np.moveaxis(s, (0, 1, 2), (2, 1, 0))
        full = np.zeros(s.shape[:-1] + (B + 1,), dtype=complex)
        full[..., :B] = s
        out = np.fft.irfft(full, n=2 * B, axis=-1) * (2 * B)
    else:
        s = np.matmul(np.swapaxes(spec.legendre, 1, 2), flat)  # [m, i, batch]
        s = np.moveaxis(s, (0, 1, 2), (2, 1, 0))
        full = np.zeros(s.shape[:-1] + (2 * B,), dtype=complex)
        full[..., spec.m_index] = s
        out = np.fft.ifft(full, axis=-1) * (2 * B)
    return out.reshape(batch + (2 * B, 2 * B))


def synthesize(coeffs, theta, phi, derivatives=False, chunk=2048):
    """Evaluate a harmonic series at arbitrary points.

    With ``derivatives=True`` returns a dict with the value and the partials
    ``t, p, tt, tp, pp`` in (theta, phi).  ``coeffs`` may carry leading batch
    axes; results have shape ``batch + theta.shape``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    B = coeffs.shape[-2]
    batch = coeffs.shape[:-2]
    cf = coeffs.reshape((-1, B, 2 * B - 1))
    ms = np.arange(-B + 1, B)
    th, ph = theta.ravel(), phi.ravel()
    keys = ("f", "t", "p", "tt", "tp", "pp") if derivatives else ("f",)
    res = {k: np.empty((cf.shape[0], th.size), dtype=complex) for k in keys}
    for start in range(0, th.size, chunk):
        sl = slice(start, start + chunk)
        leg = legendre_table(B, th[sl], nderiv=2 if derivatives else 0)
        phase = np.exp(1j * np.outer(ms, ph[sl]))  # [m, p]
        parts = np.einsum("blm,klmp->kbmp", cf, leg, optimize=True)
        res["f"][:, sl] = np.einsum("bmp,mp->bp", parts[0], phase)
        if derivatives:
            im = (1j * ms)[:, None]
            res["t"][:, sl] = np.einsum("bmp,mp->bp", parts[1], phase)
            res["p"][:, sl] = np.einsum("bmp,mp->bp", parts[0], phase * im)
            res["tt"][:, sl] = np.einsum("bmp,mp->bp", parts[2], phase)
            res["tp"][:, sl] = np.einsum("bmp,mp->bp", parts[1], phase * im)
            res["pp"][:, sl] = np.einsum("bmp,mp->bp", parts[0], phase * im * im)
    out = {k: v.reshape(batch + theta.shape) for k, v in res.items()}
    return out if derivatives else out["f"]


@functools.lru_cache(maxsize=None)
def _grid_derivative_tables(B):
    spec = grid_spec(B)
    leg = np.moveaxis(legendre_table(B, spec.theta, nderiv=2), 2, 1)  # [k, m, l, i]
    return np.ascontiguousarray(np.swapaxes(leg, 2, 3))  # [k, m, i, l]


def spectral_gradients(coeffs, B=None):
    """Theta/phi partials of a band-limited field on its grid.

    Accepts coefficients; returns a dict with keys ``t, p, tt, tp, pp`` (and
    ``f``), each a grid of shape ``(..., 2B, 2B)``.  Real fields give real
    derivatives.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    Bc = coeffs.shape[-2]
    B = Bc if B is None else B
    if Bc != B:
        raise ValueError("coefficient band-limit must match the grid")
    spec = grid_spec(B)
    tables = _grid_derivative_tables(B)
    batch = coeffs.shape[:-2]
    flat = np.moveaxis(coeffs.reshape((-1, B, 2 * B - 1)), (0, 1, 2), (2, 1, 0))  # [m, l, b]
    ms = np.arange(-B + 1, B)

    def to_grid(s):  # s: [m, i, b]
        s = np.moveaxis(s, (0, 1, 2), (2, 1, 0))
        full = np.zeros(s.shape[:-1] + (2 * B,), dtype=complex)
        full[..., spec.m_index] = s
        return np.fft.ifft(full, axis=-1) * (2 * B)

    s0 = np.matmul(tables[0], flat)
    s1 = np.matmul(tables[1], flat)
    s2 = np.matmul(tables[2], flat)
    im = (1j * ms)[:, None, None]
    out = {
        "f": to_grid(s0),
        "t": to_grid(s1),
        "p": to_grid(s0 * im),
        "tt": to_grid(s2),
        "tp": to_grid(s1 * im),
        "pp": to_grid(s0 * im * im),
    }
    return {k: v.reshape(batch + (2 * B, 2 * B)) for k, v in out.items()}


# --- Wigner matrices -------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _jy_eigen(l):
    m = np.arange(-l, l + 1)
    jp = np.sqrt((l - m[:-1]) * (l + m[:-1] + 1.0))
    jy = np.zeros((2 * l + 1, 2 * l + 1), dtype=complex)
    # J_y = (J_+ - J_-) / 2i with J_+|m> = sqrt((l-m)(l+m+1)) |m+1>
    jy[np.arange(1, 2 * l + 1), np.arange(2 * l)] = jp / 2j
    jy[np.arange(2 * l), np.arange(1, 2 * l + 1)] = -jp / 2j
    lam, vec = np.linalg.eigh(jy)
    return lam, vec


def wigner_d_matrix(l, beta):
    """Real matrices ``d^l_{mn}(beta)`` indexed ``[..., m + l, n + l]``."""
    beta = np.asarray(beta, dtype=float)
    lam, vec = _jy_eigen(l)
    phase = np.exp(-1j * beta[..., None] * lam)
    d = np.einsum("mk,...k,nk->...mn", vec, phase, vec.conj())
    return d.real


def wigner_d(l, m, n, beta):
    if max(abs(m), abs(n)) > l:
        raise ValueError("orders must satisfy |m|, |n| <= l")
    return wigner_d_matrix(l, beta)[..., m + l, n + l]


def _su2_matrix(g, tol=1e-9):
    m = g.matrix if hasattr(g, "matrix") else np.asarray(g, dtype=complex)
    if np.abs(m @ m.conj().T - np.eye(2)).max() > tol:
        raise ValueError("Wigner matrices need a unitary group element")
    return m


def wigner_D(l, m, n, g):
    """``D^l_{mn}`` of an SU(2) element from its Cayley-Klein entries.

    Uses the closed-form sum over products of matrix entries; intended for
    moderate ``l`` (the alternating sum loses digits for large ``l``).
    """
    if max(abs(m), abs(n)) > l:
        raise ValueError("orders must satisfy |m|, |n| <= l")
    g = _su2_matrix(g)
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    norm = np.sqrt(float(factorial(l + m) * factorial(l - m) * factorial(l + n) * factorial(l - n)))
    total = 0j
    for k in range(max(0, n - m), min(l + n, l - m) + 1):
        denom = factorial(l + n - k) * factorial(k) * factorial(m - n + k) * factorial(l - m - k)
        total += a ** (l + n - k) * d ** (l - m - k) * b ** (m - n + k) * c**k / denom
    return norm * total


def euler_zyz(g):
    """Angles ``(alpha, beta, gamma)`` with ``g = Rz(alpha) Ry(beta) Rz(gamma)`` up to sign."""
    g = _su2_matrix(g)
    beta = 2 * np.arctan2(abs(g[1, 0]), abs(g[0, 0]))
    s, c = np.angle(g[1, 0]), np.angle(g[0, 0])
    if abs(g[1, 0]) < 1e-15:
        s = -c
    if abs(g[0, 0]) < 1e-15:
        c = -s
    return s - c, beta, -s - c


def wigner_D_matrix(l, g):
    """Full ``D^l(g)`` for SU(2) ``g``, stable for all ``l``."""
    alpha, beta, gamma = euler_zyz(g)
    m = np.arange(-l, l + 1)
    return np.exp(-1j * m * alpha)[:, None] * wigner_d_matrix(l, beta) * np.exp(-1j * m * gamma)[None, :]


def rotate_coeffs(coeffs, g):
    """Coefficients of ``y -> psi(g^{-1} y)`` for an SU(2) rotation ``g``."""
    coeffs = np.asarray(coeffs, dtype=complex)
    B = coeffs.shape[-2]
    ginv = np.linalg.inv(_su2_matrix(g))
    out = np.zeros_like(coeffs)
    for l in range(B):
        m = np.arange(-l, l + 1)
        sign = (-1.0) ** m
        w = sign[:, None] * wigner_D_matrix(l, ginv) * sign[None, :]
        sl = slice(B - 1 - l, B + l)
        out[..., l, sl] = coeffs[..., l, sl] @ w
    return out
