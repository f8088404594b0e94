"""Möbius transformations of the extended complex plane.

Points of the sphere are handled through the stereographic coordinate
``z = tan(theta/2) * exp(i*phi)``.  The point at infinity is a regular value,
represented by :data:`INF`; anything non-finite is read as infinity.  Formulas
switch to the reciprocal chart ``w = 1/z`` when ``|z| > 1`` so neither pole
overflows.

Most functions accept arrays of points and broadcast.  Group elements are
:class:`MobiusTransform` objects wrapping a unit-determinant 2x2 matrix; bulk
fields of elements are plain ``(..., 2, 2)`` arrays.
"""

from __future__ import annotations

import numpy as np

INF = complex(np.inf, 0.0)


class PoleError(ZeroDivisionError):
    """Raised when a derivative is requested at a pole of the transform."""


def is_infinite(z):
    """Boolean mask of points equal to the point at infinity."""
    return ~np.isfinite(np.asarray(z, dtype=complex))


def _normalize(m):
    m = np.asarray(m, dtype=complex)
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if np.any(det == 0):
        raise ValueError("singular matrix cannot represent a Möbius transformation")
    return m / np.sqrt(det)[..., None, None]


def apply_matrix(m, z):
    """Apply stacked ``(..., 2, 2)`` matrices to points ``z`` with broadcasting."""
    m = np.asarray(m, dtype=complex)
    z = np.asarray(z, dtype=complex)
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    with np.errstate(all="ignore"):
        inf = ~np.isfinite(z)
        outer = inf | (np.abs(z) > 1.0)
        w = np.where(inf, 0.0, 1.0 / np.where(outer, z, 1.0))
        zin = np.where(outer, 0.0, z)
        num = np.where(outer, a + b * w, a * zin + b)
        den = np.where(outer, c + d * w, c * zin + d)
        out = num / den
    out = np.where(np.isfinite(out) & (den != 0), out, INF)
    return out[()] if out.ndim == 0 else out


class MobiusTransform:
    """Unit-determinant complex 2x2 matrix acting by ``(az + b) / (cz + d)``.

    The matrix is renormalized to determinant one (principal square root)
    on construction, so compositions do not drift.
    """

    __slots__ = ("matrix",)

    def __init__(self, a, b, c, d):
        m = _normalize(np.array([[a, b], [c, d]], dtype=complex))
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    a = property(lambda self: self.matrix[0, 0])
    b = property(lambda self: self.matrix[0, 1])
    c = property(lambda self: self.matrix[1, 0])
    d = property(lambda self: self.matrix[1, 1])

    def __matmul__(self, other):
        if isinstance(other, LowerTriangular):
            other = other.to_mobius()
        return MobiusTransform.from_matrix(self.matrix @ other.matrix)

    def __call__(self, z):
        return apply_matrix(self.matrix, z)

    def inverse(self):
        return MobiusTransform(self.d, -self.b, -self.c, self.a)

    def is_unitary(self, tol=1e-9):
        m = self.matrix
        return bool(np.abs(m @ m.conj().T - np.eye(2)).max() < tol)

    def __repr__(self):
        a, b, c, d = (complex(v) for v in self.matrix.ravel())
        return f"MobiusTransform({a:.6g}, {b:.6g}, {c:.6g}, {d:.6g})"


J = MobiusTransform(0, -1, 1, 0)


class LowerTriangular:
    """Origin-preserving element ``[[a, 0], [n, 1/a]]``.

    ``a`` and ``n`` may be arrays, in which case the object is a field of
    elements (one per grid point, say).
    """

    __slots__ = ("a", "n")

    def __init__(self, a, n):
        a = np.asarray(a, dtype=complex)
        if np.any(a == 0):
            raise ValueError("lower-triangular element needs a != 0")
        self.a = a
        self.n = np.asarray(n, dtype=complex)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=complex)
        return cls(m[..., 0, 0], m[..., 1, 0])

    @property
    def matrix(self):
        a, n = np.broadcast_arrays(self.a, self.n)
        m = np.zeros(a.shape + (2, 2), dtype=complex)
        m[..., 0, 0] = a
        m[..., 1, 0] = n
        m[..., 1, 1] = 1.0 / a
        return m

    def to_mobius(self):
        return MobiusTransform.from_matrix(self.matrix)

    def inverse(self):
        return LowerTriangular(1.0 / self.a, -self.n)

    def __matmul__(self, other):
        # [[a1,0],[n1,1/a1]] [[a2,0],[n2,1/a2]] = [[a1 a2, 0],[n1 a2 + n2/a1, 1/(a1 a2)]]
        return LowerTriangular(self.a * other.a, self.n * other.a + other.n / self.a)

    def __call__(self, z):
        return apply_matrix(self.matrix, z)


def apply(g, z):
    """Image of ``z`` under ``g``; infinity maps to ``a/c`` and poles to infinity."""
    return g(z)


def gen_log_matrix(z):
    """Stacked SU(2) matrices rotating each ``z`` to the origin.

    For ``z = tan(theta/2) e^{i phi}`` this is the rotation with Euler angles
    ``(0, theta, phi)``; rays through ``z`` land on the positive real axis.
    ``z = 0`` gives the identity and ``z = inf`` gives ``[[0, -1], [1, 0]]``.
    """
    z = np.asarray(z, dtype=complex)
    inf = is_infinite(z)
    zf = np.where(inf, 0.0, z)
    r = np.abs(zf)
    # cos(theta/2) and sin(theta/2) from r = tan(theta/2), safe for r -> inf
    norm = np.hypot(1.0, r)
    cos_h = np.where(inf, 0.0, 1.0 / norm)
    sin_h = np.where(inf, 1.0, r / norm)
    half = np.exp(0.5j * np.angle(zf))
    m = np.empty(z.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = cos_h * half.conj()
    m[..., 0, 1] = -sin_h * half
    m[..., 1, 0] = sin_h * half.conj()
    m[..., 1, 1] = cos_h * half
    return m


def gen_exp_matrix(z):
    """Inverse of :func:`gen_log_matrix` (its conjugate transpose)."""
    return np.swapaxes(gen_log_matrix(z), -1, -2).conj()


def gen_log(z):
    return MobiusTransform.from_matrix(gen_log_matrix(complex(z)))


def gen_exp(z):
    return MobiusTransform.from_matrix(gen_exp_matrix(complex(z)))


def frame_transform(g, z):
    """Origin-preserving factor ``log_{gz} . g . exp_z`` as a LowerTriangular field."""
    gm = g.matrix if isinstance(g, MobiusTransform) else np.asarray(g, dtype=complex)
    z = np.asarray(z, dtype=complex)
    m = gen_log_matrix(apply_matrix(gm, z)) @ gm @ gen_exp_matrix(z)
    return LowerTriangular.from_matrix(m)


def frame_transform_matrix(g, z):
    """Full matrix product behind :func:`frame_transform`, upper-right kept."""
    gm = g.matrix if isinstance(g, MobiusTransform) else np.asarray(g, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return gen_log_matrix(apply_matrix(gm, z)) @ gm @ gen_exp_matrix(z)


def scale_factor(g, z):
    """Conformal factor ``(1+|z|^2)^2 / (|az+b|^2 + |cz+d|^2)^2`` of ``g`` at ``z``."""
    gm = g.matrix if isinstance(g, MobiusTransform) else np.asarray(g, dtype=complex)
    a, b, c, d = gm[..., 0, 0], gm[..., 0, 1], gm[..., 1, 0], gm[..., 1, 1]
    z = np.asarray(z, dtype=complex)
    with np.errstate(all="ignore"):
        inf = is_infinite(z)
        outer = inf | (np.abs(z) > 1.0)
        w = np.where(inf, 0.0, 1.0 / np.where(outer, z, 1.0))
        zin = np.where(outer, 0.0, z)
        # in the outer chart numerator and denominator are both divided by |z|^4
        num = np.where(outer, 1.0 + np.abs(w) ** 2, 1.0 + np.abs(zin) ** 2)
        den = np.where(
            outer,
            np.abs(a + b * w) ** 2 + np.abs(c + d * w) ** 2,
            np.abs(a * zin + b) ** 2 + np.abs(c * zin + d) ** 2,
        )
    out = (num / den) ** 2
    return out[()] if out.ndim == 0 else out


def mobius_diff(g, x):
    """Complex derivative ``1/(cx+d)^2`` of ``g`` at ``x`` (zero at infinity)."""
    x = np.asarray(x, dtype=complex)
    inf = is_infinite(x)
    den = g.c * np.where(inf, 0.0, x) + g.d
    if np.any((den == 0) & ~inf):
        raise PoleError("derivative requested at a pole of the transform")
    out = np.where(inf, 0.0, 1.0 / np.where(den == 0, 1.0, den) ** 2)
    return out[()] if out.ndim == 0 else out


def mobius_hess0(g):
    """Second complex derivative of ``g`` at the origin, ``-2c/d^3``."""
    d = np.asarray(g.d, dtype=complex)
    if np.any(d == 0):
        raise PoleError("the origin is a pole of the transform")
    out = -2.0 * np.asarray(g.c) / d**3
    return out[()] if out.ndim == 0 else out


def random_su2(rng):
    """Haar-random SU(2) element from a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return MobiusTransform(q[0] + 1j * q[1], q[2] + 1j * q[3], -q[2] + 1j * q[3], q[0] - 1j * q[1])


def sample_transform(max_scale, rng_seed=None):
    """Random ``R1 . diag(k^{1/4}, k^{-1/4}) . R2`` whose largest scale factor is ``k``.

    ``rng_seed`` may be an int, ``None`` or a ``numpy.random.Generator``.
    """
    if not max_scale >= 1:
        raise ValueError(f"max_scale must be >= 1, got {max_scale}")
    rng = np.random.default_rng(rng_seed)
    r1, r2 = random_su2(rng), random_su2(rng)
    q = max_scale**0.25
    return r1 @ MobiusTransform(q, 0, 0, 1.0 / q) @ r2
