"""Frame and density operators derived from the local 2-jet of a feature.

At each point ``x`` the feature is pulled back to the origin by ``exp_x``; its
complex differential ``d`` and Hessian ``H`` there define the frame

    T(x) = [[d^{-1/2}, 0], [(H/2) d^{-3/2}, d^{1/2}]]

and the density ``rho(x) = |d|^2``.  Where ``d`` vanishes the frame is
undefined, the density is zero and the point is flagged as degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .mobius import LowerTriangular, gen_exp_matrix, mobius_diff, mobius_hess0
from .sht import grid_spec, sht_forward, spectral_gradients, synthesize

DEGENERACY = 1e-8
MODES = ("L", "Cnz", "U1")


@dataclass(eq=False)
class FrameField:
    """Per-point lower-triangular frames; ``degenerate`` marks undefined points.

    Degenerate entries hold the identity so the field stays usable in bulk.
    """

    frames: LowerTriangular
    degenerate: np.ndarray

    @property
    def a(self):
        return self.frames.a

    @property
    def n(self):
        return self.frames.n


def _coeffs(psi):
    psi = np.asarray(psi)
    if np.iscomplexobj(psi) and psi.shape[-1] == 2 * psi.shape[-2] - 1:
        return psi  # already harmonic coefficients
    return sht_forward(psi)


def _wirtinger(parts, theta, phi):
    # theta/phi partials -> planar Wirtinger derivatives at z = tan(theta/2) e^{i phi}
    r = np.tan(theta / 2)
    dth = 2.0 / (1.0 + r**2)  # dtheta/dr
    d2th = -4.0 * r / (1.0 + r**2) ** 2
    f_r = parts["t"] * dth
    f_rr = parts["tt"] * dth**2 + parts["t"] * d2th
    f_rp = parts["tp"] * dth
    f_p, f_pp = parts["p"], parts["pp"]
    rot = np.exp(-1j * phi)
    psi_z = 0.5 * rot * (f_r - 1j * f_p / r)
    psi_zz = 0.25 * rot**2 * (f_rr - f_r / r - 2j * f_rp / r + 2j * f_p / r**2 - f_pp / r**2)
    return psi_z, psi_zz


def chart_derivatives(psi):
    """Wirtinger derivatives ``(psi_z, psi_zz)`` on the grid in the stereographic chart.

    ``psi`` is a real grid ``(..., 2B, 2B)`` or its harmonic coefficients.
    With ``r = tan(theta/2)`` the chart Jacobian is ``dr/dtheta = (1+r^2)/2``.
    """
    coeffs = _coeffs(psi)
    spec = grid_spec(coeffs.shape[-2])
    parts = {k: v.real for k, v in spectral_gradients(coeffs).items()}
    return _wirtinger(parts, spec.theta[:, None], spec.phi[None, :])


def _pull_to_origin(psi_z, psi_zz, z):
    exp = gen_exp_matrix(z)
    g = SimpleNamespace(c=exp[..., 1, 0], d=exp[..., 1, 1])
    g1 = mobius_diff(g, 0.0)
    g2 = mobius_hess0(g)
    return psi_z * g1, psi_zz * g1**2 + psi_z * g2


def local_jet(psi):
    """Differential and Hessian at the origin of ``psi o exp_x`` for every grid point ``x``."""
    coeffs = _coeffs(psi)
    psi_z, psi_zz = chart_derivatives(coeffs)
    return _pull_to_origin(psi_z, psi_zz, grid_spec(coeffs.shape[-2]).z)


def local_jet_at(coeffs, z):
    """:func:`local_jet` at arbitrary finite, nonzero points, by exact synthesis."""
    z = np.asarray(z, dtype=complex)
    theta = 2 * np.arctan(np.abs(z))
    phi = np.angle(z)
    parts = {k: v.real for k, v in synthesize(coeffs, theta, phi, derivatives=True).items()}
    psi_z, psi_zz = _wirtinger(parts, theta, phi)
    return _pull_to_origin(psi_z, psi_zz, z)


def frame_from_jet(d, h):
    """``(a, n)`` of the frame built from a differential and Hessian (principal root)."""
    root = np.sqrt(d)
    return 1.0 / root, 0.5 * h / (d * root)


def _degenerate(d, threshold, floor):
    mag = np.abs(d)
    axes = tuple(range(mag.ndim - 2, mag.ndim))
    scale = np.maximum(mag.max(axis=axes, keepdims=True), floor)
    return mag <= threshold * scale


def _roundoff_floor(psi):
    # spectral derivatives of a constant carry noise ~ eps B^2 |psi|; a
    # differential below this level is treated as zero
    psi = np.asarray(psi)
    B = psi.shape[-2] if np.iscomplexobj(psi) else psi.shape[-1] // 2
    axes = tuple(range(psi.ndim - 2, psi.ndim))
    return 1e3 * np.finfo(float).eps * B**2 * np.abs(psi).max(axis=axes, keepdims=True) / DEGENERACY


def frames_and_density(psi, threshold=DEGENERACY):
    """Frame field and density of a real feature from one derivative pass.

    Leading axes are channels; each channel gets its own degeneracy scale.
    """
    d, h = local_jet(psi)
    degenerate = _degenerate(d, threshold, _roundoff_floor(psi))
    a, n = frame_from_jet(np.where(degenerate, 1.0, d), np.where(degenerate, 0.0, h))
    rho = np.where(degenerate, 0.0, np.abs(d) ** 2)
    return FrameField(LowerTriangular(a, n), degenerate), rho


def frame_operator(psi, threshold=DEGENERACY):
    """Frame field of a real feature (per channel for leading axes)."""
    return frames_and_density(psi, threshold)[0]


def density_operator(psi, threshold=DEGENERACY):
    """Density ``|d|^2``, zeroed at degenerate points."""
    return frames_and_density(psi, threshold)[1]


def restrict_frames(field, mode):
    """Restrict frames to a subgroup: ``L`` keeps them, ``Cnz`` drops the shear
    ``n``, ``U1`` additionally drops the scale of ``a``."""
    if mode == "L":
        return field
    if mode == "Cnz":
        a = field.a
    elif mode == "U1":
        a = field.a / np.abs(field.a)
    else:
        raise ValueError(f"unknown frame mode {mode!r}; expected one of {MODES}")
    return FrameField(LowerTriangular(a, np.zeros_like(field.n)), field.degenerate)
