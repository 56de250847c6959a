import subprocess
import sys
from pathlib import Path

import pytest

from sonreb.cli import main

GOLDEN = Path(__file__).parent / "golden"


def fast_config(tmp_path):
    p = tmp_path / "fast.cfg"
    p.write_text("gep.generations = 10\nanfis.epochs = 5\n")
    return str(p)


def test_generate_and_stats(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["generate-data", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "upv,rn,ccs"
    assert len(out.read_text().splitlines()) == 517
    capsys.readouterr()
    assert main(["stats", "--data", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("variable,unit,min,max,average,sd,median\n")
    assert "rn-ccs,0.7580" in text


def test_generate_with_spec(tmp_path):
    spec = tmp_path / "s.txt"
    spec.write_text("n = 50\nseed = 2\n")
    assert main(["generate-data", "--spec", str(spec), "--out", str(tmp_path / "d.csv")]) == 0
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 51


def test_hcvcm_report(tmp_path, capsys):
    out = tmp_path / "h.csv"
    assert main(["hcvcm-report", "--synthetic", "", "--seed", "0", "--out", str(out)]) == 0
    synthetic_report = out.read_bytes()
    assert main(["generate-data", "--out", str(tmp_path / "d.csv")]) == 0
    assert main(["hcvcm-report", "--data", str(tmp_path / "d.csv"), "--seed", "0", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == (GOLDEN / "hcvcm_header.txt").read_text().strip()
    # the CSV round trip keeps every value, so both sources give the same report
    assert out.read_bytes() == synthetic_report
    assert "selected:" in capsys.readouterr().out


@pytest.mark.parametrize("model", ["sbsr", "gep", "anfis"])
def test_fit(tmp_path, capsys, model):
    out = tmp_path / "run"
    rc = main(["fit", "--synthetic", "", "--model", model, "--hcvcm", "--seed", "0",
               "--config", fast_config(tmp_path), "--out", str(out)])
    assert rc == 0
    assert (out / "report.csv").read_text().splitlines()[0] == (GOLDEN / "report_header.txt").read_text().strip()
    assert f"HCVCM-{model.upper()} inputs:" in capsys.readouterr().out


def test_compare(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("synthetic =\nmodels = sbsr, hcvcm-sbsr\n")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == (GOLDEN / "compare_schema.txt").read_text().split()[0]
    assert [line.split(",")[0] for line in out[1:]] == ["SBSR", "HCVCM-SBSR"]


def test_missing_column_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("upv,ccs\n4.0,200\n")
    rc = main(["fit", "--data", str(bad), "--model", "sbsr", "--out", str(tmp_path / "o")])
    assert rc != 0
    assert "[core-data:load] SchemaError" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("synthetic =\nseed = 0\nmodels = sbsr, svm\n")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "ConfigError" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path, capsys):
    assert main(["stats", "--data", str(tmp_path / "nope.csv")]) == 1
    assert "error:" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sonreb", "generate-data", "--out", str(tmp_path / "d.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "wrote 516 rows" in proc.stdout
