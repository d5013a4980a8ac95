import csv
import io
import json
import subprocess
import sys

import pytest

from grovermean import cli

UNI_A = str(cli.fixture_path("uni_a"))
BENCH_2D = str(cli.fixture_path("bench_2d"))


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# grovermean-csv v1")
    return list(csv.reader(io.StringIO("\n".join(lines[1:]))))


def test_spectrum_certificate(capsys):
    code, out, _ = run(capsys, "spectrum", "--dist", UNI_A, "--eps", "0.05", "--s0", "0.3", "--N", "8")
    body = json.loads(out)
    assert code == 0
    assert body["certificate"]["passed"]
    assert body["state_distance"]["passed"]
    assert len(body["solutions"]) == 5
    assert max(s["residual"] for s in body["solutions"]) <= 1e-9


def test_pe1d_table_sums_to_one(capsys):
    code, out, _ = run(capsys, "pe1d", "--dist", UNI_A, "--N", "8")
    rows = read_csv(out)
    assert code == 0
    assert rows[0] == ["index_0", "phase_0", "probability"]
    assert len(rows) == 9
    assert sum(float(r[-1]) for r in rows[1:]) == pytest.approx(1.0)


def test_pemd_on_grid_phase_is_certain(capsys):
    code, out, _ = run(capsys, "pemd", "--x", "1,2", "--N", "4")
    rows = read_csv(out)
    assert code == 0
    best = max(rows[1:], key=lambda r: float(r[-1]))
    assert float(best[-1]) == pytest.approx(1.0)
    assert len(rows) == 17


def test_estimate_uni_json_and_csv(capsys, tmp_path):
    out_path = tmp_path / "est.json"
    code, out, _ = run(capsys, "estimate", "uni", "--dist", UNI_A, "--sigma0", "0.25", "--out", str(out_path))
    assert code == 0 and out == ""
    body = json.loads(out_path.read_text())
    assert body["config"]["algorithm"] == "notso_uni"
    assert body["cost"]["experiment_accesses"] > 0
    rows = read_csv(out_path.with_suffix(".csv").read_text())
    assert rows[0][:2] == ["algorithm", "estimate_0"]


def test_estimate_multi_full_serialises_certificates(capsys):
    code, out, _ = run(capsys, "estimate", "multi", "--dist", BENCH_2D, "--n", "5", "--delta", "0.2")
    assert code == 0
    body = json.loads(out[:out.index("# grovermean-csv")])
    assert set(body["details"]["certificates"]) == {"kickstart", "quantile_sandwich", "truncation_moment",
                                                    "relative_error"}


def test_cap_exit_code(capsys):
    code, _, err = run(capsys, "estimate", "multi", "--dist", BENCH_2D, "--inner", "simple", "--n", "2",
                       "--delta", "0.2", "--sigma0", "0.5")
    assert code == 2
    msg = json.loads(err)
    assert msg["category"] == "cap"
    assert "N=65536" in msg["message"]


def test_precondition_exit_code(capsys):
    code, _, err = run(capsys, "estimate", "uni", "--dist", UNI_A, "--sigma0", "0.01")
    assert code == 1
    assert json.loads(err)["category"] == "precondition"
    code, _, err = run(capsys, "spectrum")
    assert code == 1 and "--dist" in json.loads(err)["message"]
    code, _, _ = run(capsys, "bench", "--delta", "1.5")
    assert code == 1


def test_io_errors(capsys, tmp_path):
    code, _, err = run(capsys, "spectrum", "--dist", str(tmp_path / "missing.json"))
    assert code == 1
    assert json.loads(err)["category"] == "io"
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 1, "outcomes": [{"p": 0.5, "x": [0.0]}]}')
    code, _, err = run(capsys, "spectrum", "--dist", str(bad))
    assert code == 1


def test_certificate_exit_code(capsys, tmp_path, monkeypatch):
    far = tmp_path / "far.json"
    far.write_text(json.dumps({"dim": 1, "outcomes": [{"p": 0.5, "x": [0.6]}, {"p": 0.5, "x": [1.0]}]}))
    code, _, err = run(capsys, "spectrum", "--dist", str(far), "--eps", "0.05", "--s0", "0.1")
    assert code == 1 and json.loads(err)["category"] == "precondition"
    monkeypatch.setattr(cli, "_validation_suite", lambda: [{"check": "forced", "passed": False}])
    code, out, _ = run(capsys, "validate")
    assert code == 3
    assert not json.loads(out)["passed"]


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dist": UNI_A, "N": 4}))
    code, out, _ = run(capsys, "pe1d", "--config", str(cfg))
    assert code == 0 and "N=4" in out.splitlines()[0]
    code, out, _ = run(capsys, "pe1d", "--config", str(cfg), "--N", "8")
    assert "N=8" in out.splitlines()[0]
    cfg.write_text(json.dumps({"dist": UNI_A, "wibble": 1}))
    code, _, err = run(capsys, "pe1d", "--config", str(cfg))
    assert code == 1 and "wibble" in err


def test_validate_passes(capsys):
    code, out, _ = run(capsys, "validate")
    body = json.loads(out)
    assert code == 0 and body["passed"]
    assert any("tail gate" in c["check"] for c in body["checks"])


def test_bench_columns_and_ledger_agreement(capsys):
    code, out, _ = run(capsys, "bench", "--sweep", "n=2,4", "--trials", "2")
    rows = read_csv(out)
    assert code == 0
    assert rows[0] == cli.BENCH_HEADER
    assert "full_estimator" in out.splitlines()[0]
    body = [list(map(float, r)) for r in rows[1:]]
    assert [r[0] for r in body] == [2.0, 4.0]
    assert all(r[6] == 1.0 for r in body)
    assert body[1][4] > body[0][4]


def test_bench_rejects_bad_sweep(capsys):
    code, _, err = run(capsys, "bench", "--sweep", "m=1,2")
    assert code == 1 and "--sweep" in err


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "grovermean", "pemd", "--x", "0", "--N", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# grovermean-csv v1")
