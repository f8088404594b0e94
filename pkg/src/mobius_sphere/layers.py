"""Möbius convolution layers, conformal normalization and activation.

The Möbius convolution of a multi-channel feature ``psi`` is

    out_{c'}(y) = sum_c int rho_c(z) [T_c(z) f^{cc'}](log_z y) dz,

with frames ``T_c`` and densities ``rho_c`` derived from channel ``c``.  The
transformed filter is a short sum of fixed basis functions whose
coefficients depend on the frame, so each term is an identity convolution of
a frame-weighted field against a fixed basis filter.  Summing over input
channels before the convolutions leaves ``C'`` of them per term.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .filter_xform import EPSILON, QuadratureScheme, basis_at, translation_part
from .identity_conv import DeltaTable
from .logpolar import DEFAULT_T, conjugate_symmetrize
from .operators import MODES, frames_and_density, restrict_frames
from .sht import grid_spec, sht_forward, sht_inverse

log = logging.getLogger(__name__)

IMAG_TOLERANCE = 1e-6


class BasisProjection:
    """Harmonic coefficients ``values[k, l]`` of the basis filter of term ``k``.

    The basis filter of term ``(j, u, q)`` is ``B^{sigma_j^u}_{u, omega_q^u}``,
    whose only nonzero harmonic order is ``m = u``.
    """

    __slots__ = ("B", "terms", "values")

    def __init__(self, B, terms, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (len(terms), B):
            raise ValueError(f"basis table shape {values.shape} does not match {len(terms)} terms at band-limit {B}")
        self.B = B
        self.terms = [tuple(int(v) for v in t) for t in terms]
        self.values = values


def project_basis(scheme, B):
    """Sample every runtime basis filter on the grid and project it once."""
    z = grid_spec(B).z
    terms = scheme.terms()
    values = np.zeros((len(terms), B), dtype=complex)
    for k, (j, u, q) in enumerate(terms):
        iu = u + scheme.M_prime
        grid = basis_at(z, u, scheme.omega[iu, q], scheme.sigma(j)[iu])
        values[k] = sht_forward(grid)[:, u + B - 1]
    return BasisProjection(B, terms, values)


@dataclass(frozen=True, eq=False)
class ConvTables:
    """Everything a Möbius convolution at band-limit ``B`` reads but never changes."""

    delta: DeltaTable
    scheme: QuadratureScheme
    basis: BasisProjection

    def __post_init__(self):
        if self.delta.B != self.basis.B:
            raise ValueError("Delta table and basis projections disagree on the band-limit")
        if self.basis.terms != [tuple(t) for t in self.scheme.terms()]:
            raise ValueError("basis projections were built for a different quadrature scheme")

    @property
    def B(self):
        return self.delta.B


def init_filters(in_channels, out_channels, M=1, N=1, rng=None):
    """Complex Gaussian filter bank ``(C, C', 2M+1, 2N+1)``, conjugate-symmetric per filter.

    The scale ``1/sqrt(C (2M+1)(2N+1))`` keeps output variance near the input's.
    """
    rng = np.random.default_rng(rng)
    shape = (in_channels, out_channels, 2 * M + 1, 2 * N + 1)
    sigma = 1.0 / np.sqrt(in_channels * (2 * M + 1) * (2 * N + 1))
    b = sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return conjugate_symmetrize(b)  # averaging with the mirror halves E|b|^2 back to sigma^2


def _check_input(psi, tables):
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 3 or psi.shape[1:] != (2 * tables.B, 2 * tables.B):
        raise ValueError(
            f"expected features of shape (C, {2 * tables.B}, {2 * tables.B}) for band-limit {tables.B}, got {psi.shape}"
        )
    return psi


def frame_fields(psi, mode="L"):
    """Per-channel frames (restricted to ``mode``) and densities of a feature stack."""
    frames, rho = frames_and_density(psi)
    return restrict_frames(frames, mode), rho


def _spatial_factors(frames, rho, scheme, epsilon):
    # Frame-dependent parts of the expansion coefficients, split so that each
    # term only needs one exponential per point:
    #   xi = table * exp((sigma - i omega) ell - iu theta) * Y[m, s]
    a = np.asarray(frames.a, dtype=complex)
    an = translation_part(frames.frames, epsilon)
    alpha, phi = np.abs(a) ** 2, np.angle(a**2)
    tau, kappa = np.abs(an), np.angle(an)
    ell = np.log(alpha / tau)
    theta = phi - kappa
    ms = np.arange(-scheme.M, scheme.M + 1)
    ss = np.arange(-scheme.N, scheme.N + 1)
    logtau = np.log(tau)[..., None, None]
    Y = np.exp(logtau * (scheme.t - 1j * ss) - 1j * kappa[..., None, None] * ms[:, None])
    Y = Y * rho[..., None, None]
    C = rho.shape[0]
    Y = np.moveaxis(Y.reshape(C, -1, Y.shape[-2] * Y.shape[-1]), 2, 1)  # (C, ms, points)
    return ell.reshape(C, -1), theta.reshape(C, -1), Y


def _is_real_bank(filters):
    return np.abs(filters - np.conj(filters[..., ::-1, ::-1])).max(initial=0.0) <= 1e-12 * max(
        1.0, np.abs(filters).max(initial=0.0)
    )


def mobius_convolve(
    psi,
    filters,
    tables,
    mode="L",
    frames=None,
    density=None,
    epsilon=EPSILON,
    reduce_early=True,
    return_coeffs=False,
    pair_terms=True,
):
    """Möbius convolution of a ``(C, 2B, 2B)`` feature stack with a filter bank.

    ``filters`` has shape ``(C, C', 2M+1, 2N+1)``.  ``frames``/``density``
    override the feature-derived fields (useful for oracles).  With
    ``reduce_early=False`` every ``(c, c')`` pair is convolved separately and
    summed afterwards, which is slower but mathematically identical.

    For a real filter bank only half of the expansion terms are evaluated
    (the rest are their conjugates); ``pair_terms=False`` evaluates all of
    them and checks that the imaginary part of the result vanishes.
    """
    psi = _check_input(psi, tables)
    scheme = tables.scheme
    filters = np.asarray(filters, dtype=complex)
    C = psi.shape[0]
    if filters.shape[:1] != (C,) or filters.shape[2:] != (2 * scheme.M + 1, 2 * scheme.N + 1):
        raise ValueError(f"filter bank of shape {filters.shape} does not fit {C} channels and the scheme")
    if frames is None or density is None:
        derived_frames, derived_rho = frame_fields(psi, mode)
        frames = derived_frames if frames is None else frames
        density = derived_rho if density is None else density
    density = np.asarray(density, dtype=float)
    ell, theta, Y = _spatial_factors(frames, density, scheme, epsilon)
    half = pair_terms and _is_real_bank(filters)
    if reduce_early:
        coeffs = _accumulate(ell, theta, Y, filters, tables, half)
    else:
        coeffs = sum(
            _accumulate(ell[c : c + 1], theta[c : c + 1], Y[c : c + 1], filters[c : c + 1], tables, half)
            for c in range(C)
        )
    if half:
        coeffs = _real_part_coeffs(coeffs)
        return coeffs if return_coeffs else sht_inverse(coeffs, real=True)
    if return_coeffs:
        return coeffs
    grid = sht_inverse(coeffs)
    scale = max(np.abs(grid.real).max(), np.finfo(float).tiny)
    residual = np.abs(grid.imag).max() / scale
    if residual > IMAG_TOLERANCE:
        raise FloatingPointError(f"imaginary residual {residual:.2e} exceeds {IMAG_TOLERANCE:g}; filters not real?")
    return grid.real


def _accumulate(ell, theta, Y, filters, tables, half=False):
    # Sum of identity convolutions, grouped by (j, u) so each group shares the
    # Delta slice at order u; all Q terms of a group go through one batched SHT.
    #
    # With conjugate-symmetric filters and a real density the term (j, -u, q')
    # at the mirrored sample omega_q' = -omega_q is the complex conjugate of
    # (j, u, q), field and basis alike.  ``half=True`` then keeps u > 0 and the
    # lower half of u = 0 (the self-paired middle sample at weight 1/2); the
    # real output is twice the real part of what is accumulated.
    scheme, delta, basis = tables.scheme, tables.delta, tables.basis
    B = tables.B
    C, n_out = filters.shape[:2]
    b = np.moveaxis(filters.reshape(C, n_out, -1), 1, 0)  # (C', C, ms)
    table = scheme.table.reshape(2, -1, 2 * scheme.M_prime + 1, scheme.Q)  # [j, ms, u, q]
    out = np.zeros((n_out, B, 2 * B - 1), dtype=complex)
    index = {t: k for k, t in enumerate(basis.terms)}
    Q = scheme.Q
    for j in (1, 2):
        for u in scheme.us if j == 1 else (0,):
            u = int(u)
            if half and u < 0:
                continue
            qs = range((Q + 1) // 2) if half and u == 0 else range(Q)
            iu = u + scheme.M_prime
            sigma = scheme.sigma(j)[iu]
            fields = np.empty((len(qs), n_out, ell.shape[1]), dtype=complex)
            for k, q in enumerate(qs):
                expo = np.exp((sigma - 1j * scheme.omega[iu, q]) * ell - 1j * u * theta)  # (C, points)
                w = scheme.weights[iu, q]
                if half and u == 0 and 2 * q == Q - 1:
                    w = 0.5 * w
                coef = b * (w * table[j - 1, :, iu, q])  # (C', C, ms)
                fields[k] = coef.reshape(n_out, -1) @ (Y * expo[:, None, :]).reshape(-1, ell.shape[1])
            spectra = sht_forward(fields.reshape(len(qs), n_out, 2 * B, 2 * B))  # (q, C', l, m'')
            kernel = basis.values[[index[(j, u, q)] for q in qs]]  # (q, l')
            mixed = np.einsum("qclm,qa->calm", spectra, kernel, optimize=True)
            out += np.einsum("calm,alm->cam", mixed, delta.values[:, u + B - 1], optimize=True)
    return out


def _real_part_coeffs(coeffs):
    """Coefficients of ``2 Re g`` from those of ``g``."""
    B = coeffs.shape[-2]
    m = np.arange(-B + 1, B)
    return coeffs + (-1.0) ** m * np.conj(coeffs[..., ::-1])


def dirichlet_energy(psi):
    """Grid quadrature of the density over the sphere, per channel."""
    psi = np.asarray(psi, dtype=float)
    rho = frames_and_density(psi)[1]
    return np.sum(rho * grid_spec(psi.shape[-1] // 2).area, axis=(-2, -1))


def mish(x):
    """``x tanh(softplus(x))``."""
    return x * np.tanh(np.logaddexp(0.0, x))


def _per_channel(value, C, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (C,)).astype(float)
    if arr.shape != (C,):
        raise ValueError(f"{name} must be a scalar or have one entry per channel")
    return arr


class MobiusConv(TransformerMixin, BaseEstimator):
    """One Möbius convolution layer.

    ``fit`` reads the band-limit and channel count from a feature stack
    ``(C, 2B, 2B)``, loads the convolution tables and draws the filter bank
    (unless ``filters`` is given).  ``transform`` applies the convolution.
    """

    def __init__(
        self, out_channels=8, M=1, N=1, t=DEFAULT_T, mode="L", filters=None, tables=None, random_state=None
    ):
        self.out_channels = out_channels
        self.M = M
        self.N = N
        self.t = t
        self.mode = mode
        self.filters = filters
        self.tables = tables
        self.random_state = random_state

    def _validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown frame mode {self.mode!r}; expected one of {MODES}")
        if int(self.out_channels) < 1:
            raise ValueError("out_channels must be positive")

    def fit(self, X, y=None):
        self._validate()
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[1] != X.shape[2] or X.shape[1] % 2:
            raise ValueError(f"expected features of shape (C, 2B, 2B), got {X.shape}")
        self.n_channels_in_ = X.shape[0]
        self.band_limit_ = X.shape[1] // 2
        if self.tables is not None:
            self.tables_ = self.tables
        else:
            from .tables import load_tables

            self.tables_ = load_tables(self.band_limit_, self.M, self.N, self.t)
        if self.tables_.B != self.band_limit_:
            raise ValueError(f"tables are for band-limit {self.tables_.B}, features have {self.band_limit_}")
        if self.filters is None:
            self.filters_ = init_filters(self.n_channels_in_, self.out_channels, self.M, self.N, self.random_state)
        else:
            f = np.asarray(self.filters, dtype=complex)
            if f.shape != (self.n_channels_in_, self.out_channels, 2 * self.M + 1, 2 * self.N + 1):
                raise ValueError(f"filter bank shape {f.shape} does not match the layer")
            self.filters_ = f
        return self

    def transform(self, X):
        check_is_fitted(self, "filters_")
        return mobius_convolve(X, self.filters_, self.tables_, mode=self.mode)


class FRNorm(TransformerMixin, BaseEstimator):
    """``alpha psi / sqrt(E(psi) + eps) + beta`` with ``E`` the Dirichlet energy."""

    def __init__(self, alpha=1.0, beta=0.0, eps=1e-6):
        self.alpha = alpha
        self.beta = beta
        self.eps = eps

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        C = X.shape[0]
        self.alpha_ = _per_channel(self.alpha, C, "alpha")
        self.beta_ = _per_channel(self.beta, C, "beta")
        self.eps_ = _per_channel(self.eps, C, "eps")
        if np.any(self.eps_ <= 0):
            raise ValueError("eps must be positive")
        return self

    def transform(self, X):
        check_is_fitted(self, "eps_")
        X = np.asarray(X, dtype=float)
        energy = dirichlet_energy(X)
        scale = self.alpha_ / np.sqrt(energy + self.eps_)
        return X * scale[:, None, None] + self.beta_[:, None, None]


class ThresholdedMish(TransformerMixin, BaseEstimator):
    """``Mish(psi - gamma) + gamma`` per channel."""

    def __init__(self, gamma=0.0):
        self.gamma = gamma

    def fit(self, X, y=None):
        self.gamma_ = _per_channel(self.gamma, np.asarray(X).shape[0], "gamma")
        return self

    def transform(self, X):
        check_is_fitted(self, "gamma_")
        g = self.gamma_[:, None, None]
        return mish(np.asarray(X, dtype=float) - g) + g


class MCResNetBlock(TransformerMixin, BaseEstimator):
    """Two Möbius convolutions, each followed by normalization and activation.

    ``residual=False`` drops the skip connection (used when measuring
    equivariance).  Sub-layers are exposed after ``fit`` as ``layers_``.
    """

    def __init__(self, channels=8, M=1, N=1, t=DEFAULT_T, mode="L", residual=True, tables=None, random_state=None):
        self.channels = channels
        self.M = M
        self.N = N
        self.t = t
        self.mode = mode
        self.residual = residual
        self.tables = tables
        self.random_state = random_state

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.channels:
            raise ValueError(f"block expects {self.channels} channels, got {X.shape[0]}")
        rng = np.random.default_rng(self.random_state)
        seeds = rng.integers(0, 2**63 - 1, size=2)
        kw = dict(out_channels=self.channels, M=self.M, N=self.N, t=self.t, mode=self.mode, tables=self.tables)
        conv1 = MobiusConv(random_state=seeds[0], **kw).fit(X)
        kw["tables"] = conv1.tables_
        conv2 = MobiusConv(random_state=seeds[1], **kw).fit(X)
        self.layers_ = [conv1, FRNorm().fit(X), ThresholdedMish().fit(X), conv2, FRNorm().fit(X), ThresholdedMish().fit(X)]
        return self

    def transform(self, X):
        check_is_fitted(self, "layers_")
        out = np.asarray(X, dtype=float)
        for layer in self.layers_:
            out = layer.transform(out)
        return out + X if self.residual else out
