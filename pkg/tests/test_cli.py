import json
import subprocess
import sys
from pathlib import Path

import pytest

from tricolor import __version__
from tricolor.cli import EXIT_FAIL, EXIT_HALTED, EXIT_OK, EXIT_USAGE, main
from tricolor.model import nishimori_temperature
from tricolor.plan import OUTPUT_ENV

GOLDEN = Path(__file__).parent / "golden"
GROUP = "row00_p0.0500_L3_M2"


@pytest.fixture
def study(tmp_path, monkeypatch):
    cfg = tmp_path / "small.ini"
    cfg.write_text((GOLDEN / "smallrun.ini").read_text())
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "out"))
    assert main(["plan", str(cfg)]) == EXIT_OK
    return tmp_path / "out"


def test_plan_output(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "small.ini"
    cfg.write_text((GOLDEN / "smallrun.ini").read_text())
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "out"))
    assert main(["plan", str(cfg)]) == EXIT_OK
    assert (tmp_path / "out" / "manifest.json").exists()
    out = capsys.readouterr().out
    assert "1 plan rows, 3 jobs" in out and "n_samples=3" in out


def test_plan_error_is_usage(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text((GOLDEN / "smallrun.ini").read_text().replace("sizes = 3x2", "sizes = 7x6"))
    assert main(["plan", str(cfg)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert f"{cfg}:11: [row tiny] sizes: L must be a multiple of 3 (got L=7)" in err


def test_run_analyze_golden(study, capsys):
    assert main(["run", str(study), "-v"]) == EXIT_OK
    assert "3 done" in capsys.readouterr().out
    assert main(["analyze", "--manifest", str(study), "--group", GROUP, "--n-boot", "200"]) == EXIT_OK
    out = study / "analysis" / GROUP / "analysis.json"
    assert out.read_bytes() == (GOLDEN / "smallrun" / "analysis.json").read_bytes()
    # second run skips everything
    assert main(["run", str(study / "manifest.json")]) == EXIT_OK
    assert "3 skipped" in capsys.readouterr().out


def test_run_halt_exit_code(study, capsys):
    assert main(["run", str(study), "--halt-after", "10", "--limit", "1"]) == EXIT_HALTED
    assert "1 halted" in capsys.readouterr().out
    assert len(list((study / "checkpoints").glob("*.npz"))) == 1


def test_run_filters(study, capsys):
    assert main(["run", str(study), "--job", "nothing-matches"]) == EXIT_USAGE
    assert main(["run", str(study), "--job", "_s00002"]) == EXIT_OK
    assert "1 done" in capsys.readouterr().out
    assert main(["run", str(study.parent / "missing")]) == EXIT_USAGE


def test_analyze_needs_out(capsys, tmp_path):
    assert main(["analyze", str(tmp_path)]) == EXIT_USAGE
    assert main(["analyze", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_FAIL
    assert "no moment files" in capsys.readouterr().err


def test_phase_boundary_file(tmp_path, capsys):
    t = nishimori_temperature(0.05)
    f = tmp_path / "b.tsv"
    f.write_text("".join(f"{p} {t - 10 * (p - 0.05)!r} 0\n" for p in (0.03, 0.07)))
    assert main(["phase", "--boundary", str(f), "--out", str(tmp_path / "ph")]) == EXIT_OK
    assert "p_c = 0.0500" in capsys.readouterr().out
    assert json.loads((tmp_path / "ph" / "phase.json").read_text())["found"]


def test_phase_error(tmp_path, capsys):
    f = tmp_path / "b.tsv"
    f.write_text("0.03 1.0 0\n")
    assert main(["phase", "--boundary", str(f), "--out", str(tmp_path / "ph")]) == EXIT_FAIL


@pytest.mark.parametrize("suite", ["gauge", "estimators", "geometry"])
def test_validate_passes(suite, capsys):
    assert main(["validate", suite]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["validate", "nonsense"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tricolor", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
