import csv
import logging
import subprocess
import sys
import time

import numpy as np
import pytest

from mobius_sphere import io
from mobius_sphere.cli import main
from mobius_sphere.layers import FRNorm, ThresholdedMish, init_filters, mobius_convolve
from mobius_sphere.sht import random_coeffs, sht_inverse
from mobius_sphere.tables import read_tables, table_paths


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_help_via_console_entry():
    out = subprocess.run([sys.executable, "-m", "mobius_sphere.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "precompute" in out.stdout


class TestPrecompute:
    def test_idempotent(self, tmp_path, caplog):
        args = ["precompute", "--band-limit", "4", "--table-dir", str(tmp_path)]
        assert main(args) == 0
        stamps = {p: p.stat().st_mtime_ns for p in table_paths(4, directory=tmp_path).values()}
        with caplog.at_level(logging.INFO):
            assert main(args) == 0
        assert "up to date" in caplog.text
        assert all(p.stat().st_mtime_ns == t for p, t in stamps.items())

    def test_force_rewrites_identical_bytes(self, tmp_path):
        main(["precompute", "--band-limit", "4", "--table-dir", str(tmp_path)])
        before = {p: p.read_bytes() for p in table_paths(4, directory=tmp_path).values()}
        main(["precompute", "--band-limit", "4", "--force", "--table-dir", str(tmp_path)])
        assert all(p.read_bytes() == data for p, data in before.items())

    def test_b16_budget(self, tmp_path):
        t0 = time.perf_counter()
        assert main(["precompute", "--band-limit", "16", "--table-dir", str(tmp_path)]) == 0
        assert time.perf_counter() - t0 < 60


class TestConvolve:
    @pytest.fixture
    def layer_file(self, tmp_path):
        p = tmp_path / "layer.csv"
        io.save_layer_csv(p, init_filters(2, 3, rng=1), 0.15)
        return p

    def test_zero_in_zero_out(self, tmp_path, table_dir, layer_file):
        io.save_grid(tmp_path / "in.mcg", np.zeros((2, 16, 16)))
        code = main(["convolve", str(tmp_path / "in.mcg"), str(layer_file), "--out", str(tmp_path / "out.mcg"),
                     "--table-dir", str(table_dir)])  # fmt: skip
        assert code == 0
        out = io.load_grid(tmp_path / "out.mcg")
        assert out.shape == (3, 16, 16) and np.all(out == 0)

    def test_matches_in_process(self, tmp_path, table_dir, layer_file, rng):
        psi = sht_inverse(random_coeffs(8, rng, size=2, band=3), real=True)
        io.save_grid(tmp_path / "in.mcg", psi)
        main(["convolve", str(tmp_path / "in.mcg"), str(layer_file), "--out", str(tmp_path / "out.mcg"),
              "--table-dir", str(table_dir)])  # fmt: skip
        expected = mobius_convolve(psi, io.load_layer_csv(layer_file)["filters"], read_tables(8, directory=table_dir))
        assert np.array_equal(io.load_grid(tmp_path / "out.mcg"), expected)

    def test_norm_and_activation_rows(self, tmp_path, table_dir, rng):
        bank = init_filters(1, 2, rng=2)
        io.save_layer_csv(tmp_path / "layer.csv", bank, 0.15, mode="U1", alpha=[1.0, 2.0], beta=0.1, gamma=-0.2)
        psi = sht_inverse(random_coeffs(8, rng, size=1, band=3), real=True)
        io.save_grid(tmp_path / "in.mcg", psi)
        main(["convolve", str(tmp_path / "in.mcg"), str(tmp_path / "layer.csv"), "--out", str(tmp_path / "o.mcg"),
              "--table-dir", str(table_dir)])  # fmt: skip
        conv = mobius_convolve(psi, bank, read_tables(8, directory=table_dir), mode="U1")
        normed = FRNorm([1.0, 2.0], 0.1).fit(conv).transform(conv)
        expected = ThresholdedMish(-0.2).fit(normed).transform(normed)
        assert np.array_equal(io.load_grid(tmp_path / "o.mcg"), expected)

    def test_bad_magic_exit_2(self, tmp_path, table_dir, layer_file, capsys):
        (tmp_path / "in.mcg").write_bytes(b"JUNK" + bytes(20))
        code = main(["convolve", str(tmp_path / "in.mcg"), str(layer_file), "--out", str(tmp_path / "o.mcg"),
                     "--table-dir", str(table_dir)])  # fmt: skip
        assert code == 2
        assert "bad magic" in capsys.readouterr().err

    def test_missing_tables(self, tmp_path, layer_file, capsys):
        io.save_grid(tmp_path / "in.mcg", np.zeros((2, 12, 12)))
        code = main(["convolve", str(tmp_path / "in.mcg"), str(layer_file), "--out", str(tmp_path / "o.mcg"),
                     "--table-dir", str(tmp_path / "empty")])  # fmt: skip
        assert code == 1
        assert "mobius-sphere precompute --band-limit 6" in capsys.readouterr().err


class TestExperiments:
    def test_bench_one_repeat(self, tmp_path, table_dir):
        out = tmp_path / "bench.csv"
        code = main(["bench", "--band-limit", "8", "--channels", "1,2", "--repeats", "1", "--out", str(out),
                     "--table-dir", str(table_dir)])  # fmt: skip
        assert code == 0
        rows = read_csv(out)
        assert [(r["band_limit"], r["channels"], r["repeats"]) for r in rows] == [("8", "1", "1"), ("8", "2", "1")]
        assert out.read_text().startswith("# mobius-sphere bench v1")

    def test_equivariance_small_and_deterministic(self, tmp_path, table_dir):
        args = ["equivariance", "--band-limit", "8", "--channels", "2", "--mode", "L,U1", "--max-scale", "1,2",
                "--trials", "2", "--seed", "3", "--table-dir", str(table_dir)]  # fmt: skip
        assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        rows = read_csv(tmp_path / "a.csv")
        assert [(r["mode"], r["max_scale"]) for r in rows] == [("L", "1"), ("L", "2"), ("U1", "1"), ("U1", "2")]
        assert all(float(r["error"]) >= 0 and r["trials"] == "2" for r in rows)
        assert (tmp_path / "a.csv").read_text().startswith("# mobius-sphere equivariance v1 B=8 C=2")

    def test_equivariance_missing_tables(self, tmp_path, capsys):
        code = main(["equivariance", "--band-limit", "8", "--table-dir", str(tmp_path), "--out", str(tmp_path / "e")])
        assert code == 1
        assert "precompute --band-limit 8" in capsys.readouterr().err

    @pytest.mark.parametrize("bad", [["--mode", "SO3"], ["--trials", "0"], ["--max-scale", "0.5"]])
    def test_equivariance_bad_config(self, tmp_path, table_dir, bad, capsys):
        code = main(["equivariance", "--band-limit", "8", "--table-dir", str(table_dir), "--out", str(tmp_path / "e")]
                    + bad)  # fmt: skip
        assert code == 1 and "error:" in capsys.readouterr().err
