"""Binary table/grid formats and CSV parameter files.

All binary formats are little-endian and start with a four-byte magic:

* ``MCG1`` grid stack: u32 B, u32 C, u8 dtype (0 float64, 1 complex128), then
  ``C x 2B x 2B`` values in row-major ``[c][i][j]`` order.
* ``MCD1`` Delta table: u32 B, then the complex128 entries with
  ``|m'| <= l'`` and ``|m''| <= min(l, l')`` in ``(l', m', l, m'')`` order.
* ``MCQ1`` quadrature scheme: u32 M, N, M', Q; f64 t; for each ``u`` from
  ``-M'`` to ``M'`` the f64 block ``sigma1, sigma2, omega[Q], w[Q]``; then the
  complex128 Mellin table ``[j][m][s][u][q]``.
* ``MCB1`` basis projections: u32 B, u32 K; K triples of i32 ``(j, u, q)``;
  then ``K x B`` complex128 coefficients.
"""

from __future__ import annotations

import csv
import io as _io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .filter_xform import QuadratureScheme
from .identity_conv import DeltaTable
from .layers import BasisProjection

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
FILTER_HEADER = "# mobius-sphere filter v1"
LAYER_HEADER = "# mobius-sphere layer v1"


class FormatError(ValueError):
    """Malformed file; ``offset`` is the byte (or line) position of the problem."""

    def __init__(self, message, path=None, offset=None):
        where = f"{path}: " if path else ""
        at = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{where}{message}{at}")
        self.path = path
        self.offset = offset


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", self.path, self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))

    def array(self, dtype, count, what):
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count, what), dtype=dtype).copy()

    def magic(self, expected):
        got = self.take(4, "magic")
        if got != expected:
            raise FormatError(f"bad magic {got!r}, expected {expected!r}", self.path, 0)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes", self.path, self.pos)


def _write_atomic(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


# --- grids ---------------------------------------------------------------------


def encode_grid(values):
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[None]
    C, n, n2 = values.shape
    if n != n2 or n % 2:
        raise ValueError(f"grid stack must be (C, 2B, 2B), got {values.shape}")
    code = 1 if np.iscomplexobj(values) else 0
    body = np.ascontiguousarray(values, dtype=_DTYPES[code]).tobytes()
    return b"MCG1" + struct.pack("<IIB", n // 2, C, code) + body


def decode_grid(data, path=None):
    r = _Reader(data, path)
    r.magic(b"MCG1")
    B, C, code = r.unpack("IIB", "header")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}", path, 12)
    values = r.array(_DTYPES[code], C * 4 * B * B, "grid values").reshape(C, 2 * B, 2 * B)
    r.finish()
    return values


def save_grid(path, values):
    _write_atomic(path, encode_grid(values))


def load_grid(path):
    return decode_grid(_read(path), path)


# --- Delta table --------------------------------------------------------------------


def encode_delta(table):
    mask = table.valid_mask()
    return b"MCD1" + struct.pack("<I", table.B) + np.ascontiguousarray(table.values[mask], dtype="<c16").tobytes()


def decode_delta(data, path=None):
    r = _Reader(data, path)
    r.magic(b"MCD1")
    (B,) = r.unpack("I", "header")
    empty = DeltaTable(B, np.zeros((B, 2 * B - 1, B, 2 * B - 1), dtype=complex))
    mask = empty.valid_mask()
    values = np.zeros(mask.shape, dtype=complex)
    values[mask] = r.array("<c16", int(mask.sum()), "table entries")
    r.finish()
    return DeltaTable(B, values)


def save_delta(path, table):
    _write_atomic(path, encode_delta(table))


def load_delta(path):
    return decode_delta(_read(path), path)


# --- quadrature scheme ------------------------------------------------------------


def encode_scheme(s):
    out = [b"MCQ1", struct.pack("<IIIId", s.M, s.N, s.M_prime, s.Q, s.t)]
    for iu in range(2 * s.M_prime + 1):
        block = np.concatenate(([s.sigma1[iu], s.sigma2[iu]], s.omega[iu], s.weights[iu]))
        out.append(block.astype("<f8").tobytes())
    out.append(np.ascontiguousarray(s.table, dtype="<c16").tobytes())
    return b"".join(out)


def decode_scheme(data, path=None):
    r = _Reader(data, path)
    r.magic(b"MCQ1")
    M, N, Mp, Q, t = r.unpack("IIIId", "header")
    n_u = 2 * Mp + 1
    blocks = r.array("<f8", n_u * (2 + 2 * Q), "per-u blocks").reshape(n_u, 2 + 2 * Q)
    table = r.array("<c16", 2 * (2 * M + 1) * (2 * N + 1) * n_u * Q, "Mellin table")
    r.finish()
    table = table.reshape(2, 2 * M + 1, 2 * N + 1, n_u, Q)
    return QuadratureScheme(
        M, N, Mp, Q, t, blocks[:, 0].copy(), blocks[:, 1].copy(), blocks[:, 2 : 2 + Q].copy(), blocks[:, 2 + Q :].copy(), table
    )


def save_scheme(path, scheme):
    _write_atomic(path, encode_scheme(scheme))


def load_scheme(path):
    return decode_scheme(_read(path), path)


# --- basis projections ----------------------------------------------------------------


def encode_basis(basis):
    K = len(basis.terms)
    head = b"MCB1" + struct.pack("<II", basis.B, K)
    terms = np.asarray(basis.terms, dtype="<i4").reshape(K, 3).tobytes()
    return head + terms + np.ascontiguousarray(basis.values, dtype="<c16").tobytes()


def decode_basis(data, path=None):
    r = _Reader(data, path)
    r.magic(b"MCB1")
    B, K = r.unpack("II", "header")
    terms = r.array("<i4", 3 * K, "term list").reshape(K, 3)
    values = r.array("<c16", K * B, "coefficients").reshape(K, B)
    r.finish()
    return BasisProjection(B, [tuple(t) for t in terms.tolist()], values)


def save_basis(path, basis):
    _write_atomic(path, encode_basis(basis))


def load_basis(path):
    return decode_basis(_read(path), path)


# --- CSV parameter files ----------------------------------------------------------------


def _csv_rows(path, header):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != header:
        raise FormatError(f"missing header line {header!r}", path, 0)
    meta = {}
    body = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            for item in ln[1:].split():
                key, _, val = item.partition("=")
                meta[key] = val
        elif ln.strip():
            body.append(ln)
    return meta, list(csv.DictReader(_io.StringIO("\n".join(body)))), path


def save_filter_csv(path, f):
    """Write a :class:`LogPolarFilter` as ``m, s, re, im`` rows."""
    buf = _io.StringIO()
    buf.write(f"{FILTER_HEADER}\n# M={f.M} N={f.N} t={f.t!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "s", "re", "im"])
    for im, m in enumerate(range(-f.M, f.M + 1)):
        for i_s, s in enumerate(range(-f.N, f.N + 1)):
            v = f.b[im, i_s]
            w.writerow([m, s, repr(float(v.real)), repr(float(v.imag))])
    _write_atomic(path, buf.getvalue().encode())


def load_filter_csv(path):
    from .logpolar import LogPolarFilter

    meta, rows, _ = _csv_rows(path, FILTER_HEADER)
    try:
        M, N, t = int(meta["M"]), int(meta["N"]), float(meta["t"])
    except (KeyError, ValueError) as exc:
        raise FormatError("metadata line must give M, N and t", path, 1) from exc
    b = np.zeros((2 * M + 1, 2 * N + 1), dtype=complex)
    for k, row in enumerate(rows):
        try:
            b[int(row["m"]) + M, int(row["s"]) + N] = complex(float(row["re"]), float(row["im"]))
        except (KeyError, ValueError, IndexError) as exc:
            raise FormatError(f"bad filter row {k + 1}", path) from exc
    return LogPolarFilter(b, t)


def save_layer_csv(path, filters, t, mode="L", alpha=None, beta=None, eps=None, gamma=None):
    """Write a layer: filter rows ``filter,c,c_out,m,s,re,im`` then optional
    per-output-channel ``alpha``/``beta``/``eps``/``gamma`` rows (value in ``re``)."""
    filters = np.asarray(filters, dtype=complex)
    C, Cout, m2, s2 = filters.shape
    M, N = (m2 - 1) // 2, (s2 - 1) // 2
    buf = _io.StringIO()
    buf.write(f"{LAYER_HEADER}\n# C={C} C_out={Cout} M={M} N={N} t={t!r} mode={mode}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "c", "c_out", "m", "s", "re", "im"])
    for c in range(C):
        for co in range(Cout):
            for m in range(-M, M + 1):
                for s in range(-N, N + 1):
                    v = filters[c, co, m + M, s + N]
                    w.writerow(["filter", c, co, m, s, repr(float(v.real)), repr(float(v.imag))])
    for kind, vals in (("alpha", alpha), ("beta", beta), ("eps", eps), ("gamma", gamma)):
        if vals is None:
            continue
        for co, v in enumerate(np.broadcast_to(np.asarray(vals, dtype=float), (Cout,))):
            w.writerow([kind, "", co, "", "", repr(float(v)), "0.0"])
    _write_atomic(path, buf.getvalue().encode())


def load_layer_csv(path):
    """Read a layer file; returns a dict with ``filters``, ``t``, ``mode`` and any
    normalization/activation vectors present."""
    meta, rows, _ = _csv_rows(path, LAYER_HEADER)
    try:
        C, Cout, M, N = (int(meta[k]) for k in ("C", "C_out", "M", "N"))
        t = float(meta["t"])
    except (KeyError, ValueError) as exc:
        raise FormatError("metadata line must give C, C_out, M, N and t", path, 1) from exc
    out = {"filters": np.zeros((C, Cout, 2 * M + 1, 2 * N + 1), dtype=complex), "t": t, "mode": meta.get("mode", "L")}
    for k, row in enumerate(rows):
        try:
            kind = row["kind"]
            co = int(row["c_out"])
            re, im = float(row["re"]), float(row["im"])
            if kind == "filter":
                out["filters"][int(row["c"]), co, int(row["m"]) + M, int(row["s"]) + N] = complex(re, im)
            elif kind in ("alpha", "beta", "eps", "gamma"):
                out.setdefault(kind, np.full(Cout, np.nan))[co] = re
            else:
                raise ValueError(kind)
        except (KeyError, ValueError, IndexError, TypeError) as exc:
            raise FormatError(f"bad layer row {k + 1}", path) from exc
    return out
