"""Equivariance and runtime experiments."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .layers import MCResNetBlock, MobiusConv, mish
from .mobius import sample_transform
from .operators import MODES
from .sht import grid_spec, random_coeffs, sht_forward, sht_inverse, synthesize

log = logging.getLogger(__name__)

CSV_VERSION = "v1"
DEFAULT_SCALES = (1, 2, 4, 8, 12)


@dataclass
class ExperimentConfig:
    band_limit: int = 32
    channels: int = 8
    modes: tuple = MODES
    max_scales: tuple = DEFAULT_SCALES
    trials: int = 20
    seed: int = 0
    feature_band: int | None = None  # defaults to band_limit // 8

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(not k >= 1 for k in self.max_scales):
            raise ValueError("max_scale entries must be >= 1")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ValueError(f"unknown frame modes {bad}; expected a subset of {MODES}")
        if self.feature_band is None:
            self.feature_band = max(2, self.band_limit // 8)


@dataclass
class ErrorRow:
    mode: str
    max_scale: float
    error: float
    std: float
    trials: int
    per_trial: list = field(default_factory=list, repr=False)


def resample(coeffs, g, B):
    """Exact samples of ``g f = f o g^{-1}`` on the band-``B`` grid from harmonic coefficients."""
    x = g.inverse()(grid_spec(B).z)
    theta = 2 * np.arctan(np.abs(x))  # arctan(inf) = pi/2 handles the pole
    return synthesize(coeffs, theta, np.angle(x)).real


def _forward_parts(block, psi):
    # run the block, keeping the last convolution output (band-limited) and
    # the scalar of the last normalization
    conv1, norm1, act1, conv2, norm2, act2 = block.layers_
    h = act1.transform(norm1.transform(conv1.transform(psi)))
    last = conv2.transform(h)
    return last, norm2, act2


def _apply_tail(last, norm, act, energy_source=None):
    from .layers import dirichlet_energy

    src = last if energy_source is None else energy_source
    scale = norm.alpha_ / np.sqrt(dirichlet_energy(src) + norm.eps_)
    normed = last * scale[:, None, None] + norm.beta_[:, None, None]
    g = act.gamma_[:, None, None]
    return mish(normed - g) + g


def equivariance_trial(cfg, mode, trial, scales, tables=None):
    """Squared-residual and variance sums of one (model, feature) draw at each scale.

    The model and feature depend only on ``(seed, trial)`` and the transform on
    ``(seed, trial, scale index)``, so draws are paired across modes and scales.
    """
    B, C = cfg.band_limit, cfg.channels
    streams = np.random.SeedSequence([cfg.seed, trial]).spawn(2 + len(scales))
    coeffs = random_coeffs(B, np.random.default_rng(streams[0]), size=C, band=cfg.feature_band)
    psi = sht_inverse(coeffs, real=True)
    block = MCResNetBlock(C, mode=mode, residual=False, tables=tables, random_state=np.random.default_rng(streams[1]))
    block.fit(psi)
    last, norm, act = _forward_parts(block, psi)
    last_coeffs = sht_forward(last)
    area = grid_spec(B).area
    out = []
    for k, scale in enumerate(scales):
        g = sample_transform(scale, np.random.default_rng(streams[2 + k]))
        moved = block.transform(resample(coeffs, g, B))
        # g R(psi): the pointwise tail commutes with g and the normalization
        # scalar is a Möbius-invariant energy, so transform the last band-limited map
        expected = _apply_tail(resample(last_coeffs, g, B), norm, act, energy_source=last)
        resid = np.sum(area * (moved - expected) ** 2)
        mean = np.sum(area * expected) / (C * area.sum())
        var = np.sum(area * (expected - mean) ** 2)
        out.append((resid, var))
    return out


def run_equivariance(cfg, tables=None, progress=None):
    """Equivariance error ``E(R(g psi) - g R(psi))^2 / Var(g R(psi))`` per mode and scale.

    Squared residuals and variances are area-weighted and pooled over all
    points, channels and trials; ``std`` is the standard error of the
    per-trial ratios.
    """
    scales = tuple(float(s) for s in cfg.max_scales)
    rows = []
    for mode in cfg.modes:
        sums = np.zeros((cfg.trials, len(scales), 2))
        for trial in range(cfg.trials):
            sums[trial] = equivariance_trial(cfg, mode, trial, scales, tables)
            if progress:
                progress(mode, trial)
        for k, scale in enumerate(scales):
            resid, var = sums[:, k, 0], sums[:, k, 1]
            ratios = resid / var
            std = float(ratios.std(ddof=1) / np.sqrt(cfg.trials)) if cfg.trials > 1 else float("nan")
            rows.append(ErrorRow(mode, scale, float(resid.sum() / var.sum()), std, cfg.trials, ratios.tolist()))
            log.info("mode=%s max_scale=%g error=%.4e", mode, scale, rows[-1].error)
    return rows


def write_equivariance_csv(path, rows, cfg):
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# mobius-sphere equivariance {CSV_VERSION} B={cfg.band_limit} C={cfg.channels} "
            f"trials={cfg.trials} seed={cfg.seed} feature_band={cfg.feature_band}\n"
        )
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "max_scale", "error", "std", "trials"])
        for r in rows:
            w.writerow([r.mode, f"{r.max_scale:g}", f"{r.error:.6e}", f"{r.std:.6e}", r.trials])


# --- runtime benchmark ------------------------------------------------------------


@dataclass
class BenchRow:
    band_limit: int
    channels: int
    mean: float
    std: float
    repeats: int


def time_forward(B, C, repeats=3, seed=0, tables=None, out_channels=None):
    """Wall time of one Möbius convolution layer forward pass (frames included)."""
    rng = np.random.default_rng(seed)
    psi = sht_inverse(random_coeffs(B, rng, size=C, band=max(2, B // 2)), real=True)
    layer = MobiusConv(out_channels=C if out_channels is None else out_channels, tables=tables, random_state=seed)
    layer.fit(psi)
    layer.transform(psi)  # warm caches
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        layer.transform(psi)
        times.append(time.perf_counter() - t0)
    return np.array(times)


def run_bench(band_limits, channels, repeats=3, seed=0, table_loader=None):
    rows = []
    for B in band_limits:
        tables = table_loader(B) if table_loader else None
        for C in channels:
            t = time_forward(B, C, repeats, seed, tables)
            rows.append(BenchRow(B, C, float(t.mean()), float(t.std()), repeats))
            log.info("B=%d C=%d %.4fs", B, C, t.mean())
    return rows


def fit_exponent(band_limits, times):
    """Least-squares slope of ``log time`` against ``log B``."""
    return float(np.polyfit(np.log(band_limits), np.log(times), 1)[0])


def write_bench_csv(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# mobius-sphere bench {CSV_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["band_limit", "channels", "mean_s", "std_s", "repeats"])
        for r in rows:
            w.writerow([r.band_limit, r.channels, f"{r.mean:.6e}", f"{r.std:.6e}", r.repeats])
        for C in sorted({r.channels for r in rows}):
            sel = [r for r in rows if r.channels == C]
            if len(sel) >= 2:
                slope = fit_exponent([r.band_limit for r in sel], [r.mean for r in sel])
                fh.write(f"# exponent C={C} {slope:.3f}\n")
