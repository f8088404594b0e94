"""Transformation of log-polar filters by origin-preserving Möbius elements.

For ``L = [[a, 0], [n, 1/a]]`` write ``a^2 = alpha e^{i phi}`` and
``a n = tau e^{i kappa}``.  When ``n = 0`` the action is a pure rotation and
dilation and ``L B^t_{ms} = B^{-t}_{-m,-s}(a^2) B^t_{ms}``.  Otherwise

    L B^t_{ms}(z) = sum_u (1/2pi) sum_{j=1,2} int (-1)^{m+u} R_{ms} jM_{msu}(omega)
                    B^{-sigma_j}_{-u,-omega}(a^2) B^{sigma_j - t}_{u-m, omega-s}(a n)
                    B^{sigma_j}_{u, omega}(z) d omega,

where ``R_{ms}`` is a ratio of Gamma functions and ``jM`` are the Mellin
coefficients of the radial kernel ``M_{msu}``.  Truncating ``u`` to
``|u| <= M'`` and replacing the omega-integral by a ``Q``-point trapezoid rule
gives a transformed filter that is a fixed linear combination of the basis
functions ``B^{sigma_j}_{u, omega_q}``, with coefficients depending on ``L``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .logpolar import DEFAULT_T
from .mobius import LowerTriangular
from .special import complex_gamma, complex_loggamma

log = logging.getLogger(__name__)

EPSILON = 0.05
N_RADII = 512
R_RANGE = (1e-3, 1e3)


# --- Gamma-function coefficients -------------------------------------------


def hankel_coeff(m, s, t):
    """Coefficient ``R_{ms}`` of the Hankel expansion of ``r^{-is+t}``."""
    if m <= 0:
        return complex(complex_gamma(1 - (m - t + 1j * s) / 2) / complex_gamma((-m - t + 1j * s) / 2))
    return complex((-1) ** m * complex_gamma(1 - (-m - t + 1j * s) / 2) / complex_gamma((m - t + 1j * s) / 2))


def _ratio(num, den, scale):
    total = complex_loggamma(num[0]) + complex_loggamma(num[1])
    total = total - complex_loggamma(den[0]) - complex_loggamma(den[1])
    return scale * np.exp(total)


def mellin_coeff(j, m, s, u, t, sigma, omega):
    """Mellin coefficient ``jM^{t,sigma}_{msu}(omega)`` for ``j`` in {1, 2}.

    ``sigma`` and ``omega`` broadcast together.  Structural zeros
    (``j=1, u=0, m!=0`` and ``j=2, u!=0``) return exact zeros.
    """
    sigma = np.asarray(sigma, dtype=float)
    omega = np.broadcast_to(np.asarray(omega, dtype=float), np.broadcast_shapes(np.shape(omega), sigma.shape))
    iw, i_s = 1j * omega, 1j * s
    x = sigma - iw  # sigma - i omega
    if j == 1:
        if u == 0:
            if m != 0:
                return np.zeros(omega.shape, dtype=complex)
            scale = 1.0 / (2 * (1 - (2 - i_s + t) / 2))
            return _ratio(((2 - x) / 2, (i_s + x - t) / 2), ((2 + x) / 2, (2 - i_s - x + t) / 2), scale)
        if u >= m:
            second = (u + i_s - m + x - t) / 2
            fourth = (2 + u - i_s - m - x + t) / 2
            sign = 1.0 if u < 0 else (-1.0) ** u
        else:
            second = (-u + i_s + m + x - t) / 2
            fourth = (2 - u - i_s + m - x + t) / 2
            sign = (-1.0) ** (u - m) if u < 0 else (-1.0) ** m
        if u < 0:
            first, third = (-x - u) / 2, (2 - u + x) / 2
        else:
            first, third = (u - x) / 2, (2 + u + x) / 2
        return _ratio((first, second), (third, fourth), sign / 2)
    if j == 2:
        if u != 0:
            return np.zeros(omega.shape, dtype=complex)
        if m == 0:
            scale = 1.0 / (2 * (1 - (2 - i_s + t) / 2))
            return _ratio((-x / 2, (2 + i_s + x - t) / 2), ((2 + x) / 2, (2 - i_s - x + t) / 2), scale)
        k = abs(m)
        sign = 1.0 if m < 0 else (-1.0) ** m
        return _ratio((-x / 2, (i_s + k + x - t) / 2), ((2 + x) / 2, (2 - i_s + k - x + t) / 2), sign / 2)
    raise ValueError("Mellin coefficients exist for j in {1, 2}")


def sigma_bounds(j, u, t):
    """Open interval of admissible ``sigma_j`` for angular frequency ``u``.

    For ``j = 1`` the coefficient has a pole at ``sigma = |u|``, so the strip
    is ``(t, min(2, |u|))`` when ``u != 0``.
    """
    if j == 1:
        return t, (2.0 if u == 0 else min(2.0, float(abs(u))))
    return t - 1.0, 0.0


# --- reference kernel ----------------------------------------------------


def _graded_nodes(levels=48, order=20):
    # Gauss-Legendre panels on [0, pi], geometrically refined towards theta = pi
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.pi * (1.0 - 0.5 ** np.arange(levels + 1))
    lo, hi = edges[:-1], edges[1:]
    nodes = (0.5 * (hi - lo)[:, None] * (x[None, :] + 1) + lo[:, None]).ravel()
    weights = (0.5 * (hi - lo)[:, None] * w[None, :]).ravel()
    return nodes, weights


_NODES, _WEIGHTS = _graded_nodes()


def angular_kernel(m, s, u, t, x):
    """``(1/2pi) int |1 + x e^{i th}|^{t-is} e^{-im arg(1 + x e^{i th})} e^{iu th} d th``.

    This is the u-th angular Fourier mode of a translated log-polar function,
    evaluated by composite Gauss-Legendre quadrature graded towards the
    near-singular angle ``th = pi``.
    """
    x = np.asarray(x, dtype=float)
    w = 1.0 + np.multiply.outer(x, np.exp(1j * _NODES))
    mag = np.abs(w)
    arg = np.angle(w)
    radial = np.exp((t - 1j * s) * np.log(mag))
    # the integral over [pi, 2pi] mirrors [0, pi] with conjugated angles
    both = radial * (np.exp(1j * (u * _NODES - m * arg)) + np.exp(-1j * (u * _NODES - m * arg)))
    return both @ _WEIGHTS / (2 * np.pi)


def meijer_reference(m, s, u, t, r2):
    """Reference value of the radial kernel ``M^t_{msu}`` at ``r2 = r^2``.

    Computed from the angular Fourier integral of the translated basis
    function, independent of the Mellin coefficient formulas.
    """
    return angular_kernel(m, s, u, t, np.sqrt(np.asarray(r2, dtype=float))) / hankel_coeff(m, s, t)


def mellin_reconstruct(m, s, u, t, r, sigma1, sigma2, omega, weights):
    """Discrete Mellin inversion ``(1/2pi) sum_j sum_q w_q jM(omega_q) r^{sigma_j - i omega_q}``."""
    logr = np.log(np.asarray(r, dtype=float))
    total = 0
    for j, sigma in ((1, sigma1), (2, sigma2)):
        c = mellin_coeff(j, m, s, u, t, sigma, omega) * weights
        total = total + np.exp(np.multiply.outer(logr, sigma - 1j * np.asarray(omega))) @ c
    return total / (2 * np.pi)


def trapezoid_weights(omega):
    """Trapezoid widths for sorted sample points."""
    omega = np.asarray(omega, dtype=float)
    w = np.zeros_like(omega)
    d = np.diff(omega) / 2
    w[:-1] += d
    w[1:] += d
    return w


def dense_mellin_reference(m, s, u, t, r, sigma1=None, sigma2=None, omega_max=400.0, n=2**16 + 1):
    """Dense uniform-grid Mellin inversion, for cross-checking the coefficients."""
    lo1, hi1 = sigma_bounds(1, u, t)
    sigma1 = 0.5 * (lo1 + hi1) if sigma1 is None else sigma1
    sigma2 = 0.5 * (t - 1) if sigma2 is None else sigma2
    omega = np.linspace(-omega_max, omega_max, n)
    return mellin_reconstruct(m, s, u, t, r, sigma1, sigma2, omega, trapezoid_weights(omega))


# --- quadrature scheme -------------------------------------------------------


@dataclass(eq=False)
class QuadratureScheme:
    """Per-u quadrature for the omega-integral and the tabulated coefficients.

    ``table[j-1, m+M, s+N, u+M', q]`` holds
    ``(-1)^{m+u} R_{ms} jM_{msu}(omega_q^u) / 2pi``, the part of the expansion
    that does not depend on the transformation.
    """

    M: int
    N: int
    M_prime: int
    Q: int
    t: float
    sigma1: np.ndarray  # (2M'+1,)
    sigma2: np.ndarray  # (2M'+1,)
    omega: np.ndarray  # (2M'+1, Q), sorted per row
    weights: np.ndarray  # (2M'+1, Q)
    table: np.ndarray = field(default=None)
    energy_history: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.table is None:
            self.table = build_mellin_table(self)

    @property
    def us(self):
        return np.arange(-self.M_prime, self.M_prime + 1)

    def sigma(self, j):
        return self.sigma1 if j == 1 else self.sigma2

    def terms(self):
        """Runtime ``(j, u, q)`` triples: all ``u`` for j=1, only ``u = 0`` for j=2."""
        out = [(1, int(u), q) for u in self.us for q in range(self.Q)]
        out += [(2, 0, q) for q in range(self.Q)]
        return out


def build_mellin_table(scheme):
    M, N, Mp, Q, t = scheme.M, scheme.N, scheme.M_prime, scheme.Q, scheme.t
    table = np.zeros((2, 2 * M + 1, 2 * N + 1, 2 * Mp + 1, Q), dtype=complex)
    for iu, u in enumerate(range(-Mp, Mp + 1)):
        for im, m in enumerate(range(-M, M + 1)):
            for i_s, s in enumerate(range(-N, N + 1)):
                r = hankel_coeff(m, s, t) * (-1.0) ** (m + u) / (2 * np.pi)
                for j in (1, 2):
                    sig = scheme.sigma(j)[iu]
                    table[j - 1, im, i_s, iu] = r * mellin_coeff(j, m, s, u, t, sig, scheme.omega[iu])
    return table


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


class _Energy:
    """Reconstruction energy of one angular frequency ``u`` and its gradient."""

    def __init__(self, M, N, u, t, radii, fd_step):
        self.M, self.N, self.u, self.t = M, N, u, t
        self.logr = np.log(radii)
        self.pairs = [(m, s) for m in range(-M, M + 1) for s in range(-N, N + 1)]
        self.ref = np.stack([meijer_reference(m, s, u, t, radii**2) for m, s in self.pairs], axis=1)
        self.ref_energy = np.sum(np.abs(self.ref) ** 2, axis=0)
        # energies are reported relative to the total reference energy
        self.scale = 1.0 / self.ref_energy.sum()
        self.bounds = {j: sigma_bounds(j, u, t) for j in (1, 2)}
        self.h = fd_step

    def sigmas(self, p):
        out = {}
        for j, x in ((1, p[0]), (2, p[1])):
            lo, hi = self.bounds[j]
            out[j] = lo + (hi - lo) * _sigmoid(x)
        return out

    def coeffs(self, j, sigma, omega):
        return np.stack([mellin_coeff(j, m, s, self.u, self.t, sigma, omega) for m, s in self.pairs], axis=0)

    def reconstruct(self, p):
        sig = self.sigmas(p)
        omega = np.sort(p[2:])
        w = trapezoid_weights(omega)
        approx = 0
        for j in (1, 2):
            if j == 2 and self.u != 0:
                continue
            design = np.exp(np.multiply.outer(self.logr, sig[j] - 1j * omega))
            approx = approx + design @ (self.coeffs(j, sig[j], omega) * w).T
        return approx / (2 * np.pi)

    def value(self, p):
        return float(np.sum(np.abs(self.reconstruct(p) - self.ref) ** 2)) * self.scale

    def relative_errors(self, p):
        err = np.sum(np.abs(self.reconstruct(p) - self.ref) ** 2, axis=0)
        return np.sqrt(err / self.ref_energy)

    def value_and_grad(self, p):
        # Chain rule through r^{sigma - i omega} and the trapezoid widths;
        # only the Gamma-ratio coefficients are differentiated numerically.
        sig = self.sigmas(p)
        order = np.argsort(p[2:])
        omega = p[2:][order]
        w = trapezoid_weights(omega)
        h = self.h
        terms = {}
        approx = 0
        for j in (1, 2):
            if j == 2 and self.u != 0:
                continue
            shifts = np.array([[0, 0], [0, h], [0, -h], [h, 0], [-h, 0]])
            stacked = self.coeffs(j, sig[j] + shifts[:, :1], omega + shifts[:, 1:])
            c = stacked[:, 0]
            dc_dw = (stacked[:, 1] - stacked[:, 2]) / (2 * h)
            dc_ds = (stacked[:, 3] - stacked[:, 4]) / (2 * h)
            design = np.exp(np.multiply.outer(self.logr, sig[j] - 1j * omega)) / (2 * np.pi)
            approx = approx + design @ (c * w).T
            terms[j] = (c, dc_dw, dc_ds, design)
        resid = approx - self.ref  # (k, ms)
        energy = float(np.sum(np.abs(resid) ** 2)) * self.scale
        rc = np.conj(resid) * self.scale
        grad_omega = np.zeros(len(omega))
        grad = np.zeros(len(p))
        for j, (c, dc_dw, dc_ds, design) in terms.items():
            base = rc.T @ design  # (ms, q): sum_k conj(e) r^{..}
            logged = (rc * self.logr[:, None]).T @ design  # same with ln r
            # per-sample contribution g_q of the design column, contracted with the residual
            g = np.sum(base * c, axis=0)
            g_pad = np.concatenate(([-g[0]], g, [-g[-1]]))
            dweights = 0.5 * (g_pad[:-2] - g_pad[2:])
            dsample = w * np.sum(base * dc_dw - 1j * logged * c, axis=0)
            grad_omega += 2 * np.real(dweights + dsample)
            lo, hi = self.bounds[j]
            s = _sigmoid(p[j - 1])
            dsig = np.sum(w * np.sum(base * dc_ds + logged * c, axis=0))
            grad[j - 1] = 2 * np.real(dsig) * (hi - lo) * s * (1 - s)
        grad[2:][order] = grad_omega
        return energy, grad


class _Mirrored:
    """Energy restricted to sample sets symmetric about ``omega = 0``."""

    def __init__(self, energy, Q):
        self.energy = energy
        self.Q = Q

    def sigmas(self, p):
        return self.energy.sigmas(p)

    def expand(self, p):
        h = p[2:]
        mid = [0.0] if self.Q % 2 else []
        return np.concatenate((p[:2], -h[::-1], mid, h))

    def value_and_grad(self, p):
        value, grad = self.energy.value_and_grad(self.expand(p))
        k = len(p) - 2
        gh = grad[2:][-k:] - grad[2:][:k][::-1]
        return value, np.concatenate((grad[:2], gh))


def _descend(energy, p, iterations, learning_rate, memory=10, max_halvings=40, max_step=1.0):
    """Monotone descent with limited-memory quasi-Newton directions.

    The first step is ``-learning_rate * grad``; later steps use the two-loop
    recursion.  Each trial step is halved until the energy drops, so the
    recorded trace never increases.  Steps longer than ``max_step`` are
    shortened first so a steep start cannot fling the samples away.  Stops
    early once no halving helps.
    """
    value, grad = energy.value_and_grad(p)
    trace = [value]
    s_hist, y_hist = [], []
    for _ in range(iterations):
        if s_hist:
            q = grad.copy()
            alphas = []
            for s_k, y_k in zip(reversed(s_hist), reversed(y_hist)):
                a = s_k @ q / (y_k @ s_k)
                alphas.append(a)
                q -= a * y_k
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            for (s_k, y_k), a in zip(zip(s_hist, y_hist), reversed(alphas)):
                q += (a - y_k @ q / (y_k @ s_k)) * s_k
            step = -q
            if step @ grad >= 0:
                step, s_hist, y_hist = -learning_rate * grad, [], []
        else:
            step = -learning_rate * grad
        norm = np.linalg.norm(step)
        if norm > max_step:
            step *= max_step / norm
        for _ in range(max_halvings):
            trial = p + step
            trial_value, trial_grad = energy.value_and_grad(trial)
            if trial_value < value:
                break
            step = step / 2
        else:
            break
        s_k, y_k = trial - p, trial_grad - grad
        if s_k @ y_k > 1e-300:
            s_hist.append(s_k)
            y_hist.append(y_k)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        p, value, grad = trial, trial_value, trial_grad
        trace.append(value)
    return p, np.array(trace)


def optimize_quadrature(
    M=1,
    N=1,
    M_prime=None,
    Q=30,
    t=DEFAULT_T,
    iterations=2000,
    learning_rate=1e-2,
    radii=None,
    fd_step=1e-5,
    omega_range=10.0,
):
    """Fit per-u quadrature points and Mellin strips.

    Each ``u`` minimizes the summed squared reconstruction error of
    ``M^t_{msu}`` over the sample radii (512 log-spaced points on
    ``[1e-3, 1e3]`` by default, equal weight per point), relative to the
    reference energy.  See :func:`_descend` for the update rule.
    """
    M_prime = M + 1 if M_prime is None else M_prime
    if Q < 2:
        raise ValueError("need at least two quadrature points")
    radii = np.geomspace(*R_RANGE, N_RADII) if radii is None else np.asarray(radii, dtype=float)
    n_u = 2 * M_prime + 1
    sigma1, sigma2 = np.zeros(n_u), np.zeros(n_u)
    omega = np.zeros((n_u, Q))
    history = {}
    # Real filters need the samples for -u to mirror those for u (omega -> -omega);
    # the reconstruction energies of u and -u agree under that mirror, so only
    # u >= 0 is optimized and u = 0 is kept symmetric about omega = 0.
    start = np.linspace(-omega_range, omega_range, Q)
    for u in range(M_prime + 1):
        energy = _Energy(M, N, u, t, radii, fd_step)
        if u == 0:
            energy = _Mirrored(energy, Q)
            p = np.concatenate(([0.0, 0.0], start[Q - Q // 2 :]))
        else:
            p = np.concatenate(([0.0, 0.0], start))
        p, trace = _descend(energy, p, iterations, learning_rate)
        sig = energy.sigmas(p)
        nodes = np.sort(energy.expand(p)[2:] if u == 0 else p[2:])
        for k, sign in ((M_prime + u, 1), (M_prime - u, -1)):
            sigma1[k], sigma2[k] = sig[1], sig[2]
            omega[k] = np.sort(sign * nodes)
            history[sign * u] = trace
        log.info("u=%d energy %.3e -> %.3e", u, trace[0], trace[-1])
    weights = np.stack([trapezoid_weights(o) for o in omega])
    return QuadratureScheme(M, N, M_prime, Q, t, sigma1, sigma2, omega, weights, energy_history=history)


def reconstruction_errors(scheme, radii=None):
    """Relative L2 error of every ``M^t_{msu}`` reconstruction over the sample radii.

    Returns a dict keyed by ``(m, s, u)``.
    """
    radii = np.geomspace(*R_RANGE, N_RADII) if radii is None else np.asarray(radii, dtype=float)
    out = {}
    for iu, u in enumerate(scheme.us):
        for m in range(-scheme.M, scheme.M + 1):
            for s in range(-scheme.N, scheme.N + 1):
                ref = meijer_reference(m, s, u, scheme.t, radii**2)
                rec = mellin_reconstruct(
                    m, s, u, scheme.t, radii, scheme.sigma1[iu], scheme.sigma2[iu], scheme.omega[iu], scheme.weights[iu]
                )
                out[(m, s, int(u))] = float(np.linalg.norm(rec - ref) / np.linalg.norm(ref))
    return out


# --- expansion coefficients ---------------------------------------------------


def _polar(v):
    return np.abs(v), np.angle(v)


def translation_part(L, epsilon=EPSILON, tol=1e-9):
    """``a n`` of each element, with vanishing values replaced by ``epsilon``.

    The replacement is the element ``L S`` with the fixed shear
    ``S = [[1, 0], [epsilon, 1]]`` (``n = epsilon / a``), so it commutes with
    left multiplication by rotations and dilations.
    """
    an = np.asarray(L.a * L.n, dtype=complex)
    return np.where(np.abs(an) < tol, epsilon + 0j, an)


def xi_factors(L, scheme, epsilon=EPSILON):
    """Separable factors of the expansion coefficients over a field of ``L``.

    Returns ``(A, P)`` with ``A[..., u, q, j] = (alpha/tau)^{sigma - i omega}
    e^{-iu(phi - kappa)}`` and ``P[..., m, s] = tau^{t - is} e^{-im kappa}``, so
    that ``xi_j = table * A * P``.
    """
    alpha, phi = _polar(np.asarray(L.a, dtype=complex) ** 2)
    tau, kappa = _polar(translation_part(L, epsilon))
    us = scheme.us
    log_ratio = np.log(alpha / tau)[..., None, None, None]
    expo = np.stack([scheme.sigma1[:, None] - 1j * scheme.omega, scheme.sigma2[:, None] - 1j * scheme.omega], axis=-1)
    rot = np.exp(-1j * np.multiply.outer(phi - kappa, us))[..., :, None, None]
    A = np.exp(log_ratio * expo) * rot
    ms = np.arange(-scheme.M, scheme.M + 1)
    ss = np.arange(-scheme.N, scheme.N + 1)
    logtau = np.log(tau)[..., None, None]
    P = np.exp(logtau * (scheme.t - 1j * ss)[None, :] - 1j * np.multiply.outer(kappa, ms)[..., :, None])
    return A, P


def xi(j, u, q, m, s, L, scheme, epsilon=EPSILON):
    """Expansion coefficient of ``B^{sigma_j}_{u, omega_q}`` in ``L B^t_{ms}``.

    ``j = 3`` is the exact rotation-dilation branch: nonzero only when ``n``
    vanishes, ``u = m`` and ``omega_q = s``, where it equals
    ``B^{-t}_{-m,-s}(a^2)``.  Its Dirac delta in omega is never discretized.
    """
    a = np.asarray(L.a, dtype=complex)
    n = np.asarray(L.n, dtype=complex)
    if j == 3:
        hit = (u == m) and np.isclose(scheme.omega[u + scheme.M_prime, q], s)
        val = np.exp((scheme.t - 1j * s) * np.log(np.abs(a**2)) - 1j * m * np.angle(a**2))
        return np.where(np.abs(n) == 0, val if hit else 0.0, 0.0)
    A, P = xi_factors(L, scheme, epsilon)
    iu = u + scheme.M_prime
    k = scheme.table[j - 1, m + scheme.M, s + scheme.N, iu, q]
    return k * A[..., iu, q, j - 1] * P[..., m + scheme.M, s + scheme.N]


def zeta(L, b, scheme, epsilon=EPSILON):
    """Coefficients ``zeta[..., u, q, j]`` of the transformed filter with coefficients ``b``."""
    b = np.asarray(b, dtype=complex)
    if b.shape != (2 * scheme.M + 1, 2 * scheme.N + 1):
        raise ValueError("filter band-limits do not match the quadrature scheme")
    A, P = xi_factors(L, scheme, epsilon)
    # table: [j, m, s, u, q]; contract m, s against b * P
    weighted = np.einsum("ms,...ms,jmsuq->...uqj", b, P, scheme.table, optimize=True)
    return weighted * A


def basis_at(z, u, omega, sigma):
    """``B^{sigma}_{u, omega}(z) = |z|^{i omega - sigma} e^{iu arg z}`` (broadcasting)."""
    z = np.asarray(z, dtype=complex)
    return np.exp((1j * omega - sigma) * np.log(np.abs(z)) + 1j * u * np.angle(z))


def transform_filter(L, f, scheme, z, epsilon=EPSILON):
    """Quadrature approximation of ``(L f)(z) = f(L^{-1} z)`` at points ``z``.

    ``L`` is a single element; returns complex values whose imaginary part is
    the approximation's symmetry residual.
    """
    if (f.M, f.N) != (scheme.M, scheme.N) or not np.isclose(f.t, scheme.t):
        raise ValueError("filter does not match the quadrature scheme")
    coef = zeta(L, f.b, scheme, epsilon)  # (u, q, j)
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape, dtype=complex)
    for j, u, q in scheme.terms():
        iu = u + scheme.M_prime
        c = scheme.weights[iu, q] * coef[iu, q, j - 1]
        out += c * basis_at(z, u, scheme.omega[iu, q], scheme.sigma(j)[iu])
    return out


def transform_basis_exact(a, m, s, t, z):
    """Exact ``L B^t_{ms}`` for ``L = diag(a, 1/a)``: ``B^{-t}_{-m,-s}(a^2) B^t_{ms}(z)``."""
    a2 = complex(a) ** 2
    coeff = np.exp((t - 1j * s) * np.log(abs(a2)) - 1j * m * np.angle(a2))
    z = np.asarray(z, dtype=complex)
    return coeff * np.exp((1j * s - t) * np.log(np.abs(z)) + 1j * m * np.angle(z))


def apply_inverse(L, z):
    """``L^{-1} z = z / (a^2 - a n z)``."""
    if not isinstance(L, LowerTriangular):
        raise TypeError("expected a LowerTriangular element")
    return L.inverse()(z)
