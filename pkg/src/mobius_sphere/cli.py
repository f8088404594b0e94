"""``mobius-sphere`` command line."""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import harness, io, tables
from .layers import FRNorm, ThresholdedMish, mobius_convolve
from .logpolar import DEFAULT_T
from .operators import MODES

log = logging.getLogger("mobius_sphere")


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _float_list(text):
    return [float(v) for v in text.split(",") if v]


def _filter_args(p):
    p.add_argument("--M", type=int, default=1, help="angular filter order")
    p.add_argument("--N", type=int, default=1, help="radial filter order")
    p.add_argument("--t", type=float, default=DEFAULT_T, help="log-polar decay exponent")
    p.add_argument("--Q", type=int, default=30, help="quadrature points per angular mode")
    p.add_argument("--table-dir", default=None, help=f"table cache (default ${tables.ENV_VAR})")


def _tables_for(args, B):
    return tables.read_tables(B, args.M, args.N, None, args.Q, args.t, args.table_dir)


def cmd_precompute(args):
    for B in args.band_limit:
        t0 = time.perf_counter()
        paths = tables.precompute(
            B, args.M, args.N, None, args.Q, args.t, args.table_dir, force=args.force, reoptimize=args.reoptimize
        )
        log.info("band-limit %d ready in %.1fs", B, time.perf_counter() - t0)
        for p in paths.values():
            print(p)
    return 0


def cmd_equivariance(args):
    modes = MODES if args.mode == "all" else tuple(args.mode.split(","))
    cfg = harness.ExperimentConfig(
        band_limit=args.band_limit,
        channels=args.channels,
        modes=modes,
        max_scales=tuple(args.max_scale),
        trials=args.trials,
        seed=args.seed,
        feature_band=args.feature_band,
    )
    tabs = _tables_for(args, cfg.band_limit)
    rows = harness.run_equivariance(cfg, tabs, progress=lambda m, k: log.debug("mode %s trial %d done", m, k))
    harness.write_equivariance_csv(args.out, rows, cfg)
    for r in rows:
        print(f"{r.mode:4s} max_scale={r.max_scale:<5g} error={r.error:.4e} std={r.std:.2e}")
    return 0


def cmd_convolve(args):
    psi = io.load_grid(args.input)
    if np.iscomplexobj(psi):
        raise io.FormatError("convolution input must be a real grid", args.input, 12)
    layer = io.load_layer_csv(args.params)
    B = psi.shape[1] // 2
    f = layer["filters"]
    M, N = (f.shape[2] - 1) // 2, (f.shape[3] - 1) // 2
    tabs = tables.read_tables(B, M, N, None, args.Q, layer["t"], args.table_dir)
    out = mobius_convolve(psi, f, tabs, mode=args.mode or layer["mode"])
    if any(k in layer for k in ("alpha", "beta", "eps", "gamma")):
        norm = FRNorm(layer.get("alpha", 1.0), layer.get("beta", 0.0), layer.get("eps", 1e-6)).fit(out)
        out = norm.transform(out)
        out = ThresholdedMish(layer.get("gamma", 0.0)).fit(out).transform(out)
    io.save_grid(args.out, out)
    return 0


def cmd_bench(args):
    rows = harness.run_bench(
        args.band_limit, args.channels, args.repeats, args.seed, table_loader=lambda B: _tables_for(args, B)
    )
    harness.write_bench_csv(args.out, rows)
    for r in rows:
        print(f"B={r.band_limit:<3d} C={r.channels:<3d} {r.mean:.4f}s ± {r.std:.4f}")
    for C in args.channels:
        sel = [r for r in rows if r.channels == C]
        if len(sel) >= 2:
            slope = harness.fit_exponent([r.band_limit for r in sel], [r.mean for r in sel])
            print(f"C={C}: time ~ B^{slope:.2f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mobius-sphere", description="Möbius-equivariant spherical convolution")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precompute", help="write convolution tables")
    p.add_argument("--band-limit", type=_int_list, required=True, help="comma-separated band-limits")
    p.add_argument("--force", action="store_true", help="rewrite existing files")
    p.add_argument("--reoptimize", action="store_true", help="optimize the quadrature instead of copying the packaged one")
    _filter_args(p)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("equivariance", help="equivariance error versus transform scale")
    p.add_argument("--band-limit", type=int, default=32)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--mode", default="all", help=f"one of {', '.join(MODES)} or 'all'")
    p.add_argument("--max-scale", type=_float_list, default=list(harness.DEFAULT_SCALES))
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-band", type=int, default=None, help="band of the random input fields")
    p.add_argument("--out", default="equivariance.csv")
    _filter_args(p)
    p.set_defaults(func=cmd_equivariance)

    p = sub.add_parser("convolve", help="apply one layer to a grid file")
    p.add_argument("input", help="MCG1 grid file")
    p.add_argument("params", help="layer parameter CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES, default=None, help="override the mode stored in the layer file")
    p.add_argument("--Q", type=int, default=30)
    p.add_argument("--table-dir", default=None)
    p.set_defaults(func=cmd_convolve)

    p = sub.add_parser("bench", help="forward-pass timing")
    p.add_argument("--band-limit", type=_int_list, default=[8, 16, 32])
    p.add_argument("--channels", type=_int_list, default=[8])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.csv")
    _filter_args(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except io.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except tables.MissingTablesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
