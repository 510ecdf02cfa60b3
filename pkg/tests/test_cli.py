import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from steklov import models, steklov_spectrum
from steklov.cli import run

from conftest import FIXTURES


def _json(capsys, argv, code=0):
    assert run(argv) == code
    return json.loads(capsys.readouterr().out)


def _csv(capsys, argv):
    assert run(argv) == 0
    text = capsys.readouterr().out
    header = [ln for ln in text.splitlines() if ln.startswith("#")]
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return header, list(csv.DictReader(io.StringIO("\n".join(body))))


@pytest.fixture
def path3_file(tmp_path, capsys):
    f = tmp_path / "path3.json"
    assert run(["gen", "path", "--n", "3", "--out", str(f)]) == 0
    return f


def test_spectrum_path3(capsys, path3_file):
    d = _json(capsys, ["spectrum", str(path3_file)])
    assert d["sigma"] == [0.0, 1.0]
    assert d["norm"] == 2.0
    assert d["config"]["command"] == "spectrum" and "tolerances" in d["config"]


def test_round_trip_is_bit_for_bit(capsys, tmp_path):
    f = tmp_path / "r.json"
    assert run(["gen", "random", "--m", "7", "--seed", "11", "--out", str(f)]) == 0
    d = _json(capsys, ["spectrum", str(f)])
    inst = models.random_reversible(7, 11)
    assert d["sigma"] == steklov_spectrum(inst.problem).tolist()


def test_boundary_override_and_allow_full(capsys, path3_file):
    d = _json(capsys, ["spectrum", str(path3_file), "--boundary", "0"])
    assert d["sigma"] == [0.0]
    assert run(["spectrum", str(path3_file), "--boundary", "0,1,2"]) == 2
    assert "proper subset" in capsys.readouterr().err
    d = _json(capsys, ["spectrum", str(path3_file), "--boundary", "0,1,2", "--allow-full"])
    assert d["sigma"] == pytest.approx(d["lambda"])


def test_malformed_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"labels": [1,\n  oops}')
    assert run(["spectrum", str(bad)]) == 2
    err = capsys.readouterr().err.strip()
    assert "line 2" in err and "column" in err and len(err.splitlines()) == 1


def test_unknown_flag_rejected(capsys, path3_file):
    with pytest.raises(SystemExit) as exc:
        run(["spectrum", str(path3_file), "--frobnicate"])
    assert exc.value.code == 2


def test_tolerance_overrides(capsys, path3_file):
    d = _json(capsys, ["spectrum", str(path3_file), "--tol", "check=1e-6"])
    assert d["config"]["tolerances"]["check"] == 1e-6
    assert run(["spectrum", str(path3_file), "--tol", "bogus=1"]) == 2


def test_accelerate_csv_and_json_agree(capsys, path3_file):
    header, rows = _csv(capsys, ["accelerate", str(path3_file), "--r-grid", "1,10,100", "--out", "csv"])
    assert any(h.startswith("# command=accelerate") for h in header)
    assert list(rows[0]) == ["r", "k", "lambda_k", "sigma_k", "gap"]
    d = _json(capsys, ["accelerate", str(path3_file), "--r-grid", "1,10,100"])
    for a, b in zip(rows, d["rows"]):
        for key in ("r", "lambda_k", "sigma_k", "gap"):
            assert float(a[key]) == b[key]


def test_cheeger(capsys, path3_file, tmp_path):
    out = tmp_path / "c.json"
    assert run(["cheeger", str(path3_file), "--k", "2", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["kappa"] == [0.0, 1.0] and d["witnesses"]["kappa"][1] == [[0], [1, 2]]
    assert run(["cheeger", str(path3_file), "--k", "2", "--budget", "3"]) == 2
    assert "heuristic" in capsys.readouterr().err
    d = _json(capsys, ["cheeger", str(path3_file), "--k", "2", "--mode", "heuristic"])
    assert d["upper_bound"] is True


def test_verify_shipped_fixtures(capsys):
    d = _json(capsys, ["verify", str(FIXTURES), "--k", "2"])
    assert d["summary"]["passed"] and d["summary"]["count"] >= 4


def test_verify_counterexamples_exit_one(capsys, tmp_path):
    out = tmp_path / "rep.json"
    assert run(["verify", str(FIXTURES / "counterexamples"), "--k", "2", "--out", str(out)]) == 1
    d = json.loads(out.read_text())
    assert sorted(d["summary"]["failures"]["sigma_le_kappa"]) == ["cycle6", "path4"]
    assert not d["summary"]["failures"]["sigma_le_2kappa"]


def test_report_merges(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["verify", str(FIXTURES / "path3.json"), "--k", "2", "--out", str(a)]) == 0
    assert run(["verify", str(FIXTURES / "path5.json"), "--k", "2", "--out", str(b)]) == 0
    d = _json(capsys, ["report", str(a), str(b)])
    assert d["summary"]["count"] == 2
    each = [json.loads(f.read_text())["reports"][0]["empirical_constants"]["sigma_kappa"]["2"] for f in (a, b)]
    assert d["summary"]["empirical_constants"]["sigma_kappa"]["min"]["2"]["value"] == min(each)


def test_simulate_is_deterministic(capsys, path3_file):
    argv = ["simulate", str(path3_file), "--paths", "2000", "--tail-paths", "500", "--seed", "3"]
    a = _json(capsys, argv)
    b = _json(capsys, argv)
    a.pop("config"), b.pop("config")
    assert a == b
    assert a["chi"]["mean_ok"] and a["chi"]["gap_ok"]


def test_kernels(capsys, path3_file):
    header, rows = _csv(capsys, ["kernels", str(path3_file), "--out", "csv"])
    gaps = [float(r["norm_gap"]) for r in rows]
    assert gaps == pytest.approx([0.1, 0.05, 0.025, 0.005])
    d = _json(capsys, ["kernels", str(path3_file)])
    assert d["ergodic"]["lhs"] == pytest.approx(1.0) and d["ergodic"]["holds"]
    assert np.allclose(d["K"], [[0.75, 0.25], [0.25, 0.75]])


def test_console_entry_point(path3_file):
    res = subprocess.run([sys.executable, "-m", "steklov", "spectrum", str(path3_file)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and '"sigma": [0.0, 1.0]' in res.stdout
