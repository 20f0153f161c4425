import csv
import shutil
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from mdiqkd import cli

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE = ROOT / "configs" / "example.yaml"
GOLDEN = Path(__file__).parent / "data" / "cli_golden"


@pytest.fixture
def example(tmp_path):
    """Copy of the example config and its counts file in a scratch directory."""
    shutil.copy(EXAMPLE, tmp_path / "example.yaml")
    shutil.copy(EXAMPLE.parent / "counts_25km.csv", tmp_path / "counts_25km.csv")
    return tmp_path / "example.yaml"


def _edit(path, **changes):
    raw = yaml.safe_load(path.read_text())
    for dotted, value in changes.items():
        node = raw
        *head, last = dotted.split("__")
        for k in head:
            node = node.setdefault(k, {})
        node[last] = value
    path.write_text(yaml.safe_dump(raw))
    return path


def test_missing_config(capsys):
    assert cli.main(["keyrate", "--config", "/nonexistent/c.yaml"]) == cli.EXIT_USAGE
    assert "cannot read config" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["bogus"], ["keyrate"], ["keyrate", "--config", "x", "--estimator", "fast"]])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == cli.EXIT_USAGE


def test_keyrate_golden(example, tmp_path, capsys):
    assert cli.main(["keyrate", "--config", str(example), "--out-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "keyrate.csv").read_bytes() == (GOLDEN / "keyrate.csv").read_bytes()
    assert "rate l/N = 2.57742e-07" in capsys.readouterr().out


def test_keyrate_abort_exit_3(example, tmp_path, capsys):
    _edit(example, protocol__distance_km=300)
    assert cli.main(["keyrate", "--config", str(example), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_ABORT
    assert "psi_minus: E_tol" in capsys.readouterr().out


def test_estimate_golden(example, tmp_path):
    assert cli.main(["estimate", "--config", str(example), "--out-dir", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "estimates.csv").read_bytes() == (GOLDEN / "estimates.csv").read_bytes()


def test_estimate_all_zero_block(example, tmp_path):
    zero = tmp_path / "zero.csv"
    with open(zero, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "a_label", "b_label", "basis", "count"])
        for a in ("s", "d1", "d2"):
            for b in ("s", "d1", "d2"):
                for basis in ("Z", "X", "X_err"):
                    w.writerow(["psi_minus", a, b, basis, 0])
    out = tmp_path / "o"
    assert cli.main(["estimate", "--config", str(example), "--counts", str(zero), "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "estimates.csv")))
    assert {r["estimator"] for r in rows} == {"analytic", "lp"}
    for r in rows:
        assert all(r[f] == "0" for f in ("m_k0", "n_k0", "m_k1", "n_k1", "nbar_k1", "ebar_k1"))


def test_estimate_bad_counts_file(example, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert cli.main(["estimate", "--config", str(example), "--counts", str(bad),
                     "--out-dir", str(tmp_path / "o")]) == cli.EXIT_USAGE


def test_sweep_golden_and_deterministic(example, tmp_path):
    for run in ("a", "b"):
        assert cli.main(["sweep", "--config", str(example), "--out-dir", str(tmp_path / run)]) == 0
    first = (tmp_path / "a" / "distance_short.csv").read_bytes()
    assert first == (tmp_path / "b" / "distance_short.csv").read_bytes()
    assert first == (GOLDEN / "distance_short.csv").read_bytes()


def test_out_dir_precedence(example, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["keyrate", "--config", str(example)]) == 0
    assert (tmp_path / "env" / "keyrate.csv").exists()
    assert cli.main(["keyrate", "--config", str(example), "--out-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "keyrate.csv").exists()
    monkeypatch.delenv(cli.OUT_DIR_ENV)
    assert cli.main(["keyrate", "--config", str(example)]) == 0
    assert (tmp_path / "out" / "example" / "keyrate.csv").exists()


def test_seed_and_estimator_overrides(example, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["keyrate", "--config", str(example), "--out-dir", str(out),
                     "--seed", "99", "--estimator", "lp"]) == 0
    manifest = yaml.safe_load((out / "keyrate_manifest.yaml").read_text())
    assert manifest["seed"] == 99 and manifest["estimator"] == "lp"
    assert "lp" in (out / "keyrate.csv").read_text()


def test_coverage_subcommand(example, tmp_path, capsys):
    _edit(example, coverage__trials=500)
    out = tmp_path / "o"
    assert cli.main(["coverage", "--config", str(example), "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "coverage.csv")))
    assert rows and all(r["passed"] == "1" for r in rows)
    assert "PASS" in capsys.readouterr().out


def test_runtime_failure_exit_2(example, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["keyrate", "--config", str(example), "--out-dir", str(blocker / "sub")]) == cli.EXIT_RUNTIME


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mdiqkd.cli", "keyrate", "--config", str(tmp_path / "no.yaml")],
                         capture_output=True, text=True)
    assert res.returncode == 1 and "config error" in res.stderr
