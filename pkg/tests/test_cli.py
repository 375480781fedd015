import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from loopqrng import cli
from loopqrng.sequences import read_bits


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    ev = d / "ev.csv"
    assert run("simulate", "--pulses", 2_000_000, "--seed", 7, "--out", ev) == 0
    assert run("bits", "--in", ev, "--private", d / "p.bits", "--public", d / "q.bits") == 0
    return d


class TestSimulate:
    def test_outputs_and_manifest(self, pipeline):
        ev = pipeline / "ev.csv"
        assert ev.read_text().startswith("pulse_index,loop_index\n")
        man = json.loads((pipeline / "ev.csv.manifest.json").read_text())
        assert man["command"] == "simulate"
        assert man["config"]["params"] == {"mu": 0.33, "r": 0.41, "eta": 0.23, "l_max": 8}
        assert man["config"]["seed"] == 7 and man["config"]["n_pulses"] == 2_000_000
        assert str(ev) in man["outputs"] and len(man["outputs"][str(ev)]) == 64
        assert {"tool_version", "backend", "created_unix", "argv"} <= man.keys()

    def test_deterministic(self, pipeline, tmp_path):
        again = tmp_path / "ev.csv"
        assert run("simulate", "--pulses", 2_000_000, "--seed", 7, "--workers", 2, "--out", again) == 0
        assert again.read_bytes() == (pipeline / "ev.csv").read_bytes()

    @pytest.mark.parametrize("flags", [["--pulses", "0"], ["--pulses", "-3"], ["--r", "1.2"], ["--eta", "1"],
                                       ["--pulses", "abc"], ["--bogus"]])
    def test_usage_errors(self, tmp_path, flags):
        out = tmp_path / "x.csv"
        assert run("simulate", *flags, "--out", out) == 1
        assert not out.exists()

    def test_no_command(self):
        assert run() == 1


class TestBits:
    def test_size_ratio(self, pipeline):
        p, q = read_bits(pipeline / "p.bits"), read_bits(pipeline / "q.bits")
        assert q.n_bits / p.n_bits == pytest.approx(0.10, abs=0.01)
        assert p.provenance["seed"] == 7 and p.provenance["mu"] == 0.33
        assert (pipeline / "p.bits.manifest.json").exists()

    def test_empty_events(self, tmp_path):
        ev = tmp_path / "e.csv"
        ev.write_text("pulse_index,loop_index\n")
        assert run("bits", "--in", ev, "--private", tmp_path / "p.bits", "--public", tmp_path / "q.bits") == 0
        assert read_bits(tmp_path / "p.bits").n_bits == 0
        assert (tmp_path / "q.bits").read_bytes() == b""

    def test_malformed_row(self, tmp_path, capsys):
        ev = tmp_path / "e.csv"
        ev.write_text("pulse_index,loop_index\n0,1\n2,x\n")
        assert run("bits", "--in", ev, "--private", tmp_path / "p.bits", "--public", tmp_path / "q.bits") == 2
        assert ":3:" in capsys.readouterr().err
        assert not (tmp_path / "p.bits").exists()

    def test_missing_input(self, tmp_path):
        assert run("bits", "--in", tmp_path / "nope.csv", "--private", tmp_path / "p", "--public", tmp_path / "q") == 2


class TestSelftest:
    def test_clean_ok(self, pipeline, tmp_path):
        out = tmp_path / "st.jsonl"
        assert run("selftest", "--in", pipeline / "ev.csv", "--interval-pulses", 200_000, "--out", out) == 0
        lines = [json.loads(x) for x in out.read_text().splitlines()]
        assert len(lines) == 11 and lines[-1]["summary"] and lines[-1]["status"] == "OK"
        assert {"interval_index", "counts", "ratios", "z_scores", "status"} <= lines[0].keys()

    def test_default_interval(self, pipeline, capsys):
        assert run("selftest", "--in", pipeline / "ev.csv") == 0
        last = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert last["n_intervals"] == 1 and last["status"] == "OK"

    def test_drift_alarm(self, tmp_path, capsys):
        ev = tmp_path / "drift.csv"
        assert run("simulate", "--pulses", 3_600_000, "--eta", 0.28, "--seed", 3, "--out", ev) == 0
        assert run("selftest", "--in", ev, "--eta", 0.23) == 0
        last = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert last["status"] == "ALARM"

    def test_untested_when_shorter_than_interval(self, tmp_path, capsys):
        ev = tmp_path / "s.csv"
        assert run("simulate", "--pulses", 1000, "--out", ev) == 0
        assert run("selftest", "--in", ev) == 0
        assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["status"] == "UNTESTED"


class TestEntropyAndCompare:
    def test_reports_match(self, pipeline, tmp_path, capsys):
        for name in ("p", "q"):
            assert run("entropy", "--in", pipeline / f"{name}.bits", "--report", tmp_path / f"{name}.json") == 0
        rep = json.loads((tmp_path / "p.json").read_text())
        assert rep["label"] == "private" and rep["model_prediction"] == pytest.approx(0.385, abs=1e-3)
        assert any(w.startswith("low_sample") for w in rep["warnings"])
        assert run("compare", "--private", tmp_path / "p.json", "--public", tmp_path / "q.json",
                   "--out", tmp_path / "c.json") == 0
        assert json.loads((tmp_path / "c.json").read_text())["verdict"] == "MATCH"

    def test_unknown_estimator(self, pipeline):
        assert run("entropy", "--in", pipeline / "p.bits", "--estimators", "mcv,nope") == 1

    def test_stdout_and_subset(self, pipeline, capsys):
        assert run("entropy", "--in", pipeline / "q.bits", "--estimators", "mcv") == 0
        rep = json.loads(capsys.readouterr().out)
        assert [e["name"] for e in rep["estimators"]] == ["mcv"]

    def test_corrupt_sidecar(self, tmp_path):
        (tmp_path / "b.bits").write_bytes(b"\x00")
        (tmp_path / "b.bits.json").write_text("{")
        assert run("entropy", "--in", tmp_path / "b.bits") == 2

    def test_bad_report(self, tmp_path):
        (tmp_path / "r.json").write_text("[]")
        assert run("compare", "--private", tmp_path / "r.json", "--public", tmp_path / "r.json") == 2


class TestExtract:
    def test_flag_rate(self, pipeline, tmp_path):
        out = tmp_path / "x.bits"
        assert run("extract", "--in", pipeline / "p.bits", "--h-rate", 0.3958, "--out", out) == 0
        seq = read_bits(out)
        n_priv = read_bits(pipeline / "p.bits").n_bits
        assert seq.label == "extracted" and seq.n_bits == (n_priv // 4096) * 1554
        assert seq.provenance["m"] == 1554 and seq.provenance["h_rate_source"] == "flag"

    def test_from_report(self, pipeline, tmp_path):
        rep = tmp_path / "r.json"
        rep.write_text(json.dumps({"label": "private", "n_bits": 1, "estimators": [{"name": "mcv", "h": 0.3958}]}))
        out = tmp_path / "x.bits"
        assert run("extract", "--in", pipeline / "p.bits", "--from-report", rep, "--out", out) == 0
        assert read_bits(out).provenance["m"] == 1554

    def test_measured_default(self, pipeline, tmp_path):
        out = tmp_path / "x.bits"
        assert run("extract", "--in", pipeline / "p.bits", "--out", out) == 0
        prov = read_bits(out).provenance
        assert prov["h_rate_source"] == "measured" and prov["h_rate"] < 0.3958

    @pytest.mark.parametrize("flags", [["--epsilon", "1"], ["--epsilon", "2"], ["--h-rate", "0.01"],
                                       ["--h-rate", "0.4", "--from-report", "r.json"]])
    def test_errors(self, pipeline, tmp_path, flags):
        out = tmp_path / "x.bits"
        assert run("extract", "--in", pipeline / "p.bits", *flags, "--out", out) == 1
        assert not out.exists()


class TestOptimize:
    def test_curve(self, tmp_path, capsys):
        out = tmp_path / "c.csv"
        assert run("optimize", "--eta", 0.2, "--out", out) == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == 200 and list(rows[0]) == ["r", "b", "h", "p_tot"]
        b = np.array([float(r["b"]) for r in rows])
        i = int(np.argmax(b))
        assert 0 < i < 199
        assert capsys.readouterr().out.startswith(f"argmax r={float(rows[i]['r']):.6f}")

    def test_three_steps(self, capsys):
        assert run("optimize", "--steps", 3) == 0
        assert "argmax r=0.500000" in capsys.readouterr().out

    @pytest.mark.parametrize("flags", [["--r-min", "0.9", "--r-max", "0.1"], ["--steps", "1"], ["--r-min", "0"]])
    def test_errors(self, flags):
        assert run("optimize", *flags) == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "loopqrng.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
