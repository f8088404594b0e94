"""Spherical log-polar (Fourier-Mellin) basis ``|z|^{is-t} e^{im arg z}`` and filters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sht import grid_spec, sht_forward

DEFAULT_T = 0.15


class SingularPointError(ValueError):
    """Raised when a basis function is evaluated at 0 or infinity."""


def eval_basis(m, s, t, z):
    """``B^t_{ms}(z) = |z|^{is - t} e^{i m arg z}``; ``z`` must avoid 0 and infinity."""
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    if np.any((r == 0) | ~np.isfinite(r)):
        raise SingularPointError("log-polar basis is singular at 0 and infinity")
    out = np.exp((1j * s - t) * np.log(r) + 1j * m * np.angle(z))
    return out[()] if out.ndim == 0 else out


def conjugate_symmetrize(b):
    """Average ``b`` with its mirror so ``b[..., -m, -s] == conj(b[..., m, s])``."""
    b = np.asarray(b, dtype=complex)
    return 0.5 * (b + np.conj(b[..., ::-1, ::-1]))


@dataclass(frozen=True, eq=False)
class LogPolarFilter:
    """Real filter ``sum_{|m|<=M, |s|<=N} b[m+M, s+N] B^t_{ms}``."""

    b: np.ndarray
    t: float = DEFAULT_T

    def __post_init__(self):
        b = np.asarray(self.b, dtype=complex)
        if b.ndim != 2 or b.shape[0] % 2 == 0 or b.shape[1] % 2 == 0:
            raise ValueError("coefficients must be a (2M+1, 2N+1) array")
        if not abs(self.t) < 1:
            raise ValueError("localization exponent must satisfy |t| < 1")
        if np.abs(b - np.conj(b[::-1, ::-1])).max(initial=0.0) > 1e-12 * max(1.0, np.abs(b).max()):
            raise ValueError("coefficients must satisfy b[-m,-s] = conj(b[m,s])")
        object.__setattr__(self, "b", b)

    @property
    def M(self):
        return (self.b.shape[0] - 1) // 2

    @property
    def N(self):
        return (self.b.shape[1] - 1) // 2

    @classmethod
    def random(cls, M=1, N=1, t=DEFAULT_T, rng=None, scale=1.0):
        rng = np.random.default_rng(rng)
        shape = (2 * M + 1, 2 * N + 1)
        b = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
        return cls(conjugate_symmetrize(b), t)

    def __call__(self, z):
        return eval_filter(self, z)


def eval_filter(f, z):
    """Real value of the filter at points ``z`` (off the poles)."""
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    if np.any((r == 0) | ~np.isfinite(r)):
        raise SingularPointError("log-polar filters are singular at 0 and infinity")
    logr, ang = np.log(r), np.angle(z)
    ms = np.arange(-f.M, f.M + 1)
    ss = np.arange(-f.N, f.N + 1)
    radial = np.exp(np.multiply.outer(logr, 1j * ss - f.t))  # (..., s)
    angular = np.exp(1j * np.multiply.outer(ang, ms))  # (..., m)
    val = np.einsum("...m,ms,...s->...", angular, f.b, radial)
    return val.real


def filter_to_sh(f, B):
    """Harmonic coefficients of the filter sampled on the band-limit ``B`` grid."""
    return sht_forward(eval_filter(f, grid_spec(B).z), B)
