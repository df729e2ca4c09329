import json
import subprocess
import sys

import numpy as np
import pytest

from deepdict.cli import main
from deepdict.series import load_series


def run_cli(*args):
    return main(list(args))


@pytest.fixture()
def poly_csv(tmp_path):
    path = tmp_path / "data.csv"
    assert run_cli("synth", str(path), "--kind", "poly", "--length", "2000",
                   "--channels", "2", "--degree", "1", "--seed", "5") == 0
    return path


class TestCompressCommand:
    def test_end_to_end(self, tmp_path, poly_csv, capsys):
        out = tmp_path / "out.ddc"
        rep = tmp_path / "rep.json"
        code = run_cli("compress", str(poly_csv), str(out), "--eps", "0.1",
                       "--epochs", "1", "--seed", "1", "--loss", "qel", "--b", "10",
                       "--report", str(rep))
        assert code == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["max_abs_err"] <= 0.1
        report = json.loads(rep.read_text())
        assert report["loss"] == "qel" and report["qel_b"] == 10
        assert report["eps"] == 0.1
        parts = report["parts"]
        assert sum(parts.values()) == report["compressed_bytes"]

    def test_eps_zero_is_usage_error(self, tmp_path, poly_csv):
        assert run_cli("compress", str(poly_csv), str(tmp_path / "x.ddc"), "--eps", "0") == 2

    def test_missing_input(self, tmp_path):
        assert run_cli("compress", str(tmp_path / "none.csv"), str(tmp_path / "x.ddc")) == 2

    def test_malformed_csv_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0\nwat\n")
        assert run_cli("compress", str(bad), str(tmp_path / "x.ddc"), "--epochs", "0") == 3

    def test_unknown_flag_exits_2(self, poly_csv, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("compress", str(poly_csv), str(tmp_path / "x.ddc"), "--frobnicate")
        assert exc.value.code == 2


class TestVerifyCommand:
    def test_pass_and_fail(self, tmp_path, poly_csv, capsys):
        out = tmp_path / "out.ddc"
        assert run_cli("compress", str(poly_csv), str(out), "--eps", "0.1", "--epochs", "0") == 0
        assert run_cli("verify", str(poly_csv), str(out)) == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["pass"] is True and payload["max_abs_err"] <= 0.1

        other = tmp_path / "other.csv"
        run_cli("synth", str(other), "--kind", "walk", "--length", "2000",
                "--channels", "2", "--seed", "99")
        assert run_cli("verify", str(other), str(out)) == 1

    def test_missing_file_exits_2(self, tmp_path, poly_csv):
        assert run_cli("verify", str(tmp_path / "none.csv"), str(poly_csv)) == 2

    def test_halved_eps_container_fails_verify(self, tmp_path, poly_csv):
        import struct
        import zlib

        out = tmp_path / "out.ddc"
        run_cli("compress", str(poly_csv), str(out), "--eps", "0.1", "--epochs", "0")
        data = bytearray(out.read_bytes())
        # eps f64 sits after magic(4) + version(2) + kind(1); refresh the crc
        struct.pack_into("<d", data, 7, 0.0001)
        body = bytes(data[:-4])
        out.write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))
        assert run_cli("verify", str(poly_csv), str(out)) == 1


class TestDecompressCommand:
    def test_roundtrip_files(self, tmp_path, poly_csv):
        out = tmp_path / "out.ddc"
        recon = tmp_path / "recon.csv"
        run_cli("compress", str(poly_csv), str(out), "--eps", "0.1", "--epochs", "0")
        assert run_cli("decompress", str(out), str(recon)) == 0
        a = load_series(poly_csv)
        b = load_series(recon)
        assert np.max(np.abs(a.values - b.values)) <= 0.1 + 1e-9

    def test_corrupt_container_exits_3(self, tmp_path, poly_csv):
        out = tmp_path / "out.ddc"
        run_cli("compress", str(poly_csv), str(out), "--eps", "0.1", "--epochs", "0")
        data = bytearray(out.read_bytes())
        data[100] ^= 0xFF
        out.write_bytes(bytes(data))
        assert run_cli("decompress", str(out), str(tmp_path / "r.csv")) == 3


class TestTransferFlag:
    def test_transfer_via_saved_model(self, tmp_path, poly_csv):
        out = tmp_path / "a.ddc"
        model = tmp_path / "a.ddm"
        run_cli("compress", str(poly_csv), str(out), "--eps", "0.1", "--epochs", "1",
                "--save-model", str(model))
        other = tmp_path / "b.csv"
        run_cli("synth", str(other), "--kind", "poly", "--length", "2000",
                "--channels", "2", "--degree", "1", "--seed", "7")
        out2 = tmp_path / "b.ddc"
        rep2 = tmp_path / "b.json"
        assert run_cli("compress", str(other), str(out2), "--eps", "0.1", "--epochs", "1",
                       "--transfer", str(model), "--report", str(rep2)) == 0
        assert json.loads(rep2.read_text())["transfer"] is True
        assert run_cli("verify", str(other), str(out2)) == 0


class TestSynthCommand:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("synth", str(a), "--length", "500", "--seed", "3")
        run_cli("synth", str(b), "--length", "500", "--seed", "3")
        assert a.read_bytes() == b.read_bytes()

    def test_f32le_output(self, tmp_path):
        p = tmp_path / "a.f32"
        run_cli("synth", str(p), "--length", "100", "--format", "f32le")
        assert p.read_bytes()[:4] == b"DDTS"


class TestBenchCommand:
    def test_synth_suite_table(self, tmp_path, capsys, monkeypatch):
        out = tmp_path / "table.csv"
        code = run_cli("bench", "--suite", "synth", "--eps", "0.5",
                       "--methods", "ca,quantize-only", "--out", str(out))
        assert code == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "dataset,method,status,ratio,max_abs_err,seconds"
        body = [r.split(",") for r in rows[1:]]
        assert len(body) == 6  # 3 datasets x 2 methods
        assert all(r[2] == "ok" for r in body)
        assert all(float(r[4]) <= 0.5 for r in body if r[4])

    def test_directory_suite_and_deepdict(self, tmp_path):
        data = tmp_path / "suite"
        data.mkdir()
        run_cli("synth", str(data / "one.csv"), "--length", "1200", "--seed", "2")
        out = tmp_path / "t.csv"
        code = run_cli("bench", "--suite", str(data), "--eps", "0.2",
                       "--methods", "deepdict,quantize-only", "--epochs", "1",
                       "--window", "64", "--out", str(out))
        assert code == 0
        body = [r.split(",") for r in out.read_text().strip().splitlines()[1:]]
        assert {r[1] for r in body} == {"deepdict", "quantize-only"}
        assert all(r[2] == "ok" for r in body)

    def test_markdown_output(self, tmp_path):
        out = tmp_path / "t.md"
        code = run_cli("bench", "--suite", "synth", "--eps", "0.5",
                       "--methods", "quantize-only", "--out", str(out))
        assert code == 0
        assert out.read_text().startswith("| dataset | method |")

    def test_bad_suite_dir(self, tmp_path):
        assert run_cli("bench", "--suite", str(tmp_path / "nope")) == 2

    def test_results_deterministic_under_seed(self, tmp_path):
        tables = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            run_cli("bench", "--suite", "synth", "--eps", "0.5", "--seed", "3",
                    "--methods", "ca,quantize-only", "--out", str(out))
            rows = [r.split(",") for r in out.read_text().strip().splitlines()[1:]]
            tables.append([(r[0], r[1], r[2], r[3], r[4]) for r in rows])  # drop seconds
        assert tables[0] == tables[1]


class TestCrossProcess:
    def test_containers_byte_identical_across_processes(self, tmp_path, poly_csv):
        out1, out2 = tmp_path / "c1.ddc", tmp_path / "c2.ddc"
        for out in (out1, out2):
            res = subprocess.run(
                [sys.executable, "-m", "deepdict", "compress", str(poly_csv), str(out),
                 "--eps", "0.1", "--epochs", "1", "--seed", "11"],
                capture_output=True, text=True)
            assert res.returncode == 0, res.stderr
        assert out1.read_bytes() == out2.read_bytes()

    def test_decompression_identical_across_processes(self, tmp_path, poly_csv):
        out = tmp_path / "c.ddc"
        subprocess.run([sys.executable, "-m", "deepdict", "compress", str(poly_csv), str(out),
                        "--eps", "0.1", "--epochs", "0"], capture_output=True, check=True)
        recs = []
        for name in ("r1.csv", "r2.csv"):
            path = tmp_path / name
            res = subprocess.run([sys.executable, "-m", "deepdict", "decompress", str(out), str(path)],
                                 capture_output=True, text=True)
            assert res.returncode == 0, res.stderr
            recs.append(path.read_bytes())
        assert recs[0] == recs[1]
