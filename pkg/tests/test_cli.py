import csv
import io
import json

import pytest

from mrdtest import cli
from mrdtest.residuals import residual_changepoint_closed_form


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _data(tmp_path, values, header=None, name="x.csv"):
    p = tmp_path / name
    lines = ([header] if header else []) + [str(v) for v in values]
    p.write_text("\n".join(lines) + "\n")
    return str(p)


def test_single_value_rejects(tmp_path, capsys):
    code, out, _ = _run(["test-data", _data(tmp_path, [5.0]), "--schedule", "2"], capsys)
    assert code == 0
    row = _rows(out)[0]
    assert row == {"index": "1", "statistic": "5.0", "threshold": "2.0", "rejected": "true",
                   "order": "1"}


def test_changepoint_pair_accepts(tmp_path, capsys):
    code, out, _ = _run(["test-data", _data(tmp_path, [1, -1]), "--model", "changepoint",
                         "--schedule", "10,9.99"], capsys)
    assert code == 0
    rows = _rows(out)
    assert [r["rejected"] for r in rows] == ["false", "false"]
    assert float(rows[0]["statistic"]) == pytest.approx(0.408248, abs=1e-6)


def test_equal_constants_exit_2(tmp_path, capsys):
    code, _, err = _run(["test-data", _data(tmp_path, [1, -1]), "--model", "changepoint",
                         "--schedule", "10,10"], capsys)
    assert code == 2 and "stage 2" in err


def test_bad_line_reported(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("1.0\nabc\n")
    code, _, err = _run(["test-data", str(p), "--schedule", "3,2"], capsys)
    assert code == 2 and "line 2" in err and "abc" in err


def test_size_mismatch(tmp_path, capsys):
    code, _, err = _run(["test-data", _data(tmp_path, [1, 2]), "--size", "3"], capsys)
    assert code == 2 and "size 3" in err


def test_variance_header_and_lrsd(tmp_path, capsys):
    path = _data(tmp_path, [3.0, 0.0], header="s2=1,nu=10")
    code, out, _ = _run(["test-data", path, "--model", "intraclass", "--rho", "0.5",
                         "--procedure", "mrd", "--schedule", "3,1"], capsys)
    assert code == 0
    code, out, _ = _run(["test-data", _data(tmp_path, [3.0, 0.0], name="y.csv"), "--model",
                         "intraclass", "--rho", "0.5", "--procedure", "lrsd", "--sided", "two",
                         "--schedule", "10,3"], capsys)
    rows = _rows(out)
    assert float(rows[0]["statistic"]) == pytest.approx(12.0)
    assert [r["rejected"] for r in rows] == ["true", "false"]


def test_comparators_run(tmp_path, capsys):
    path = _data(tmp_path, [4.0, 0.1, 0.2])
    for proc in ("bh", "holm"):
        code, out, _ = _run(["test-data", path, "--procedure", proc], capsys)
        assert code == 0 and _rows(out)[0]["rejected"] == "true"


def test_calibrate(tmp_path, capsys):
    code, out, _ = _run(["calibrate", "--k-max", "3", "--rho", "0.5", "--draws", "20000"],
                        capsys)
    rows = _rows(out)
    assert code == 0 and [r["k"] for r in rows] == ["1", "2", "3"]
    assert float(rows[0]["threshold"]) == pytest.approx(1.645, abs=0.03)


def test_verify_passes(capsys):
    code, out, _ = _run(["verify"], capsys)
    assert code == 0
    assert out.count("PASS") == 8


def test_verify_catches_sign_flip(capsys):
    def flipped(zbar, rejected, i):
        return -residual_changepoint_closed_form(zbar, rejected, i)

    args = cli.build_parser().parse_args(["verify"])
    code = cli.cmd_verify(args, closed_form=flipped)
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL  change-point" in out


def _config(tmp_path, rows):
    cfg = {
        "scenario": {"kind": "treatments_control", "n": 1, "M": 8, "rows": rows},
        "procedures": [{"method": "mrd", "sided": "one"}, {"method": "holm", "sided": "one"}],
        "run": {"iterations": 12, "seed": 5},
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_simulate_deterministic(tmp_path, capsys):
    path = _config(tmp_path, [{"counts": [[0, 6], [3, 2]]}, {"counts": [[0, 8]]}])
    _, a, _ = _run(["simulate", path], capsys)
    _, b, _ = _run(["simulate", path, "--workers", "2"], capsys)
    assert a == b
    assert len(_rows(a)) == 4
    _, c, _ = _run(["simulate", path, "--seed", "6"], capsys)
    assert c != a


def test_simulate_markdown_and_out(tmp_path, capsys):
    path = _config(tmp_path, [{"counts": [[0, 8]]}])
    out = tmp_path / "res" / "t.md"
    code, _, err = _run(["simulate", path, "--format", "md", "--out", str(out)], capsys)
    assert code == 0 and "wrote" in err
    assert out.read_text().startswith("| ")


def test_simulate_empty_grid(tmp_path, capsys):
    code, out, _ = _run(["simulate", _config(tmp_path, [])], capsys)
    assert code == 0 and out.startswith("row,procedure,iterations")
    assert len(out.strip().splitlines()) == 1


def test_simulate_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"scenario": {"kind": "treatments_control", "rows": [
        {"counts": [[0, 3]]}]}, "procedures": [{"method": "mrd", "schedule": [3, 3, 1]}]}))
    code, _, err = _run(["simulate", str(p)], capsys)
    assert code == 2 and "procedures[0].schedule" in err and "stage 2" in err


def test_module_entry_point():
    import subprocess
    import sys

    done = subprocess.run([sys.executable, "-m", "mrdtest", "--version"], capture_output=True,
                          text=True)
    assert done.returncode == 0 and "mrdtest" in done.stdout
