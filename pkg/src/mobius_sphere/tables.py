"""On-disk cache of precomputed convolution tables.

Tables live in ``$MOBIUS_TABLE_DIR`` (default ``~/.cache/mobius-sphere``).
The quadrature scheme for the default filter size ships with the package, so
only the band-limit dependent tables need computing on a fresh machine.
"""

from __future__ import annotations

import functools
import logging
import os
import shutil
from importlib import resources
from pathlib import Path

from . import io
from .filter_xform import optimize_quadrature
from .identity_conv import precompute_delta
from .layers import ConvTables, project_basis
from .logpolar import DEFAULT_T

log = logging.getLogger(__name__)

ENV_VAR = "MOBIUS_TABLE_DIR"


class MissingTablesError(FileNotFoundError):
    """Raised when a command needs tables that have not been precomputed."""


def table_dir(path=None):
    if path is not None:
        return Path(path)
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else Path.home() / ".cache" / "mobius-sphere"


def _tag(M, N, M_prime, Q, t):
    return f"M{M}_N{N}_Mp{M_prime}_Q{Q}_t{t:g}"


def table_paths(B, M=1, N=1, M_prime=None, Q=30, t=DEFAULT_T, directory=None):
    M_prime = M + 1 if M_prime is None else M_prime
    root = table_dir(directory)
    tag = _tag(M, N, M_prime, Q, t)
    return {
        "delta": root / f"delta_B{B}.mcd",
        "scheme": root / f"scheme_{tag}.mcq",
        "basis": root / f"basis_B{B}_{tag}.mcb",
    }


def shipped_scheme_path(M=1, N=1, M_prime=None, Q=30, t=DEFAULT_T):
    M_prime = M + 1 if M_prime is None else M_prime
    ref = resources.files("mobius_sphere") / "data" / f"scheme_{_tag(M, N, M_prime, Q, t)}.mcq"
    return Path(str(ref)) if ref.is_file() else None


def precompute(B, M=1, N=1, M_prime=None, Q=30, t=DEFAULT_T, directory=None, force=False, reoptimize=False):
    """Write the Delta table, quadrature scheme and basis projections.

    Existing files are kept unless ``force``.  The scheme is copied from the
    packaged copy when one matches, unless ``reoptimize`` asks for a fresh
    optimization.  Returns the dict of paths.
    """
    paths = table_paths(B, M, N, M_prime, Q, t, directory)
    M_prime = M + 1 if M_prime is None else M_prime

    def fresh(key):
        if paths[key].exists() and not force:
            log.info("%s is up to date, skipping", paths[key])
            return True
        return False

    if not fresh("delta"):
        io.save_delta(paths["delta"], precompute_delta(B))
        log.info("wrote %s", paths["delta"])
    if not fresh("scheme"):
        shipped = None if reoptimize else shipped_scheme_path(M, N, M_prime, Q, t)
        if shipped is not None:
            paths["scheme"].parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(shipped, paths["scheme"])
            log.info("copied packaged scheme to %s", paths["scheme"])
        else:
            io.save_scheme(paths["scheme"], optimize_quadrature(M, N, M_prime, Q, t))
            log.info("wrote %s", paths["scheme"])
    if not fresh("basis"):
        io.save_basis(paths["basis"], project_basis(io.load_scheme(paths["scheme"]), B))
        log.info("wrote %s", paths["basis"])
    return paths


def read_tables(B, M=1, N=1, M_prime=None, Q=30, t=DEFAULT_T, directory=None):
    """Load precomputed tables from disk; raises :class:`MissingTablesError` naming the fix."""
    paths = table_paths(B, M, N, M_prime, Q, t, directory)
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise MissingTablesError(
            f"missing tables {', '.join(missing)}; run `mobius-sphere precompute --band-limit {B}` "
            f"(table directory: {table_dir(directory)}, override with ${ENV_VAR})"
        )
    return ConvTables(io.load_delta(paths["delta"]), io.load_scheme(paths["scheme"]), io.load_basis(paths["basis"]))


@functools.lru_cache(maxsize=8)
def load_tables(B, M=1, N=1, t=DEFAULT_T, M_prime=None, Q=30):
    """Tables for in-process use: read from the cache directory when present,
    otherwise built in memory (the scheme must then be packaged or cached)."""
    paths = table_paths(B, M, N, M_prime, Q, t)
    if all(p.exists() for p in paths.values()):
        return read_tables(B, M, N, M_prime, Q, t)
    scheme_file = paths["scheme"] if paths["scheme"].exists() else shipped_scheme_path(M, N, M_prime, Q, t)
    if scheme_file is None:
        raise MissingTablesError(
            f"no quadrature scheme for {_tag(M, N, M + 1 if M_prime is None else M_prime, Q, t)}; "
            f"run `mobius-sphere precompute` with matching filter sizes"
        )
    scheme = io.load_scheme(scheme_file)
    delta = io.load_delta(paths["delta"]) if paths["delta"].exists() else precompute_delta(B)
    return ConvTables(delta, scheme, project_basis(scheme, B))
