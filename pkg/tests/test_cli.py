import csv
import json

from singpert.cli import main
from singpert.polysys import load_fixture


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_solve_json(capsys):
    rc, out, _ = run(capsys, "solve", "--order", "5")
    doc = json.loads(out)
    assert rc == 0
    assert doc["header"]["residual_order"] >= 6
    assert doc["header"]["config"]["order"] == 5
    assert len(doc["header"]["config_hash"]) == 16


def test_same_config_same_hash(capsys):
    a = json.loads(run(capsys, "solve", "--order", "2")[1])["header"]["config_hash"]
    b = json.loads(run(capsys, "solve", "--order", "2")[1])["header"]["config_hash"]
    c = json.loads(run(capsys, "solve", "--order", "3")[1])["header"]["config_hash"]
    assert a == b != c


def test_precision_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("SINGPERT_PRECISION", "128")
    doc = json.loads(run(capsys, "solve", "--order", "1")[1])
    assert doc["header"]["config"]["precision_bits"] == 128


def test_unknown_model_reports_json_error(capsys):
    rc, _, err = run(capsys, "solve", "--model", "no-such-model")
    assert rc == 2
    e = json.loads(err)
    assert e["error"] == "FileNotFoundError" and e["command"] == "solve"


def test_model_file(capsys, tmp_path):
    f = tmp_path / "m.dde"
    f.write_text("order 1; shift x_plain; Q = 1 + z^2*u*y0^2 + z*y1; R = 0;")
    rc, out, _ = run(capsys, "solve", "--model", str(f), "--order", "4")
    assert rc == 0 and json.loads(out)["header"]["model"] == "m"


def test_verify_pass_and_fail(capsys, tmp_path):
    good = tmp_path / "t0.txt"
    good.write_text(load_fixture("example2_t0_annihilator").to_text())
    rc, out, _ = run(capsys, "verify", "--poly", str(good), "--order", "12")
    assert rc == 0 and json.loads(out)["verdict"] == "PASS"
    bad = tmp_path / "bad.txt"
    bad.write_text("t0 - 1 - z^3")
    rc, out, _ = run(capsys, "verify", "--poly", str(bad), "--order", "12")
    assert rc == 1 and json.loads(out)["verdict"] == "FAIL"


def test_critical_csv(capsys, tmp_path):
    out = tmp_path / "crit.csv"
    rc, _, _ = run(capsys, "critical", "--x-end", "0.01", "--steps", "2", "-o", str(out))
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["x", "z0", "u1", "u2", "t0", "t1", "detJ", "residual"]
    assert len(rows) == 3
    assert float(rows[1]["z0"]) < float(rows[0]["z0"])


def test_oracle_match(capsys, tmp_path):
    report = tmp_path / "oracle.json"
    rc, _, err = run(capsys, "oracle", "--max-edges", "6", "--compare", "solve", "-o", str(report))
    assert rc == 0 and "MATCH" in err
    assert json.loads(report.read_text())["header"]["config"]["max_edges"] == 6


def test_pattern_equation_text(capsys):
    rc, out, _ = run(capsys, "pattern-equation", "--e", "7", "--v", "7")
    assert rc == 0
    assert out.startswith("# config_hash")
    assert "shift x_minus_1;" in out
