import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobius_sphere import io
from mobius_sphere.identity_conv import precompute_delta
from mobius_sphere.layers import init_filters, project_basis
from mobius_sphere.logpolar import LogPolarFilter
from mobius_sphere.tables import shipped_scheme_path


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 6), st.booleans(), st.integers(0, 2**32 - 1))
def test_grid_round_trip(C, B, complex_values, seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(C, 2 * B, 2 * B))
    if complex_values:
        values = values + 1j * rng.normal(size=values.shape)
    data = io.encode_grid(values)
    back = io.decode_grid(data)
    assert back.dtype == values.dtype and np.array_equal(back, values)
    assert io.encode_grid(back) == data


def test_grid_header_layout():
    data = io.encode_grid(np.zeros((2, 8, 8)))
    assert data[:4] == b"MCG1"
    assert struct.unpack("<IIB", data[4:13]) == (4, 2, 0)
    assert len(data) == 13 + 2 * 64 * 8


def test_single_grid_promoted():
    assert io.decode_grid(io.encode_grid(np.ones((4, 4)))).shape == (1, 4, 4)


def test_grid_shape_rejected():
    with pytest.raises(ValueError):
        io.encode_grid(np.zeros((1, 4, 6)))


class TestMalformed:
    def test_bad_magic(self):
        with pytest.raises(io.FormatError, match="bad magic") as info:
            io.decode_grid(b"XXXX" + io.encode_grid(np.zeros((1, 4, 4)))[4:])
        assert info.value.offset == 0

    def test_truncated(self):
        data = io.encode_grid(np.zeros((1, 4, 4)))
        with pytest.raises(io.FormatError, match="truncated") as info:
            io.decode_grid(data[:-3])
        assert info.value.offset == 13

    def test_truncated_header(self):
        with pytest.raises(io.FormatError) as info:
            io.decode_grid(b"MCG1\x01\x00")
        assert info.value.offset == 4

    def test_trailing_bytes(self):
        data = io.encode_grid(np.zeros((1, 4, 4)))
        with pytest.raises(io.FormatError, match="trailing") as info:
            io.decode_grid(data + b"\x00")
        assert info.value.offset == len(data)

    def test_unknown_dtype(self):
        data = bytearray(io.encode_grid(np.zeros((1, 4, 4))))
        data[12] = 7
        with pytest.raises(io.FormatError, match="dtype") as info:
            io.decode_grid(bytes(data))
        assert info.value.offset == 12

    def test_message_names_path(self, tmp_path):
        p = tmp_path / "x.mcg"
        p.write_bytes(b"NOPE")
        with pytest.raises(io.FormatError, match="x.mcg"):
            io.load_grid(p)

    @pytest.mark.parametrize("decode", [io.decode_delta, io.decode_scheme, io.decode_basis])
    def test_table_magic(self, decode):
        with pytest.raises(io.FormatError, match="bad magic"):
            decode(b"MCG1\x00\x00\x00\x00")


class TestTables:
    def test_delta_round_trip(self, tmp_path):
        table = precompute_delta(4)
        p = tmp_path / "d.mcd"
        io.save_delta(p, table)
        back = io.load_delta(p)
        assert np.array_equal(back.values, table.values)
        io.save_delta(tmp_path / "d2.mcd", back)
        assert (tmp_path / "d2.mcd").read_bytes() == p.read_bytes()

    def test_scheme_round_trip(self, tmp_path, scheme):
        p = tmp_path / "s.mcq"
        io.save_scheme(p, scheme)
        assert p.read_bytes() == shipped_scheme_path().read_bytes()
        back = io.load_scheme(p)
        for name in ("sigma1", "sigma2", "omega", "weights", "table"):
            assert np.array_equal(getattr(back, name), getattr(scheme, name))
        assert (back.M, back.N, back.M_prime, back.Q, back.t) == (1, 1, 2, 30, 0.15)

    def test_basis_round_trip(self, tmp_path, scheme):
        basis = project_basis(scheme, 4)
        p = tmp_path / "b.mcb"
        io.save_basis(p, basis)
        back = io.load_basis(p)
        assert back.terms == basis.terms and np.array_equal(back.values, basis.values)
        io.save_basis(tmp_path / "b2.mcb", back)
        assert (tmp_path / "b2.mcb").read_bytes() == p.read_bytes()

    def test_truncated_delta(self):
        data = io.encode_delta(precompute_delta(3))
        with pytest.raises(io.FormatError, match="table entries"):
            io.decode_delta(data[:-16])


class TestCSV:
    def test_filter_round_trip(self, tmp_path, rng):
        f = LogPolarFilter.random(rng=rng)
        p = tmp_path / "f.csv"
        io.save_filter_csv(p, f)
        back = io.load_filter_csv(p)
        assert np.array_equal(back.b, f.b) and back.t == f.t
        assert p.read_text().splitlines()[0] == io.FILTER_HEADER

    def test_layer_round_trip(self, tmp_path):
        bank = init_filters(2, 3, rng=4)
        p = tmp_path / "layer.csv"
        io.save_layer_csv(p, bank, 0.15, mode="Cnz", alpha=[1.0, 2.0, 3.0], eps=1e-6, gamma=0.5)
        layer = io.load_layer_csv(p)
        assert np.array_equal(layer["filters"], bank)
        assert layer["mode"] == "Cnz" and layer["t"] == 0.15
        assert np.array_equal(layer["alpha"], [1.0, 2.0, 3.0])
        assert np.array_equal(layer["gamma"], [0.5] * 3)
        assert "beta" not in layer

    def test_missing_header(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("m,s,re,im\n0,0,1,0\n")
        with pytest.raises(io.FormatError, match="header"):
            io.load_filter_csv(p)

    def test_bad_layer_row(self, tmp_path):
        p = tmp_path / "layer.csv"
        io.save_layer_csv(p, init_filters(1, 1, rng=0), 0.15)
        p.write_text(p.read_text() + "bogus,0,0,0,0,1,0\n")
        with pytest.raises(io.FormatError, match="bad layer row 10"):
            io.load_layer_csv(p)

    def test_missing_metadata(self, tmp_path):
        p = tmp_path / "layer.csv"
        p.write_text(io.LAYER_HEADER + "\nkind,c,c_out,m,s,re,im\n")
        with pytest.raises(io.FormatError, match="metadata"):
            io.load_layer_csv(p)
