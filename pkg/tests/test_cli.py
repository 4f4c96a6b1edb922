import json
import subprocess
import sys

import pytest

from wavetopo import cli
from wavetopo.errors import RunAborted, SolverFailure
from wavetopo.io import read_history

SMALL = ["--nx", "16", "--ny", "8", "--iters", "3", "--quiet"]


def test_run_writes_outputs(tmp_path, capsys):
    assert cli.main(["run", "--preset", "cantilever", *SMALL, "--out", str(tmp_path)]) == 0
    assert len(read_history(tmp_path / "history.csv")["J"]) == 3
    assert (tmp_path / "fields_0002.vtk").exists() and (tmp_path / "layout_0002.png").exists()
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["geometry"]["nx"] == 16 and cfg["max_iterations"] == 3
    assert "iterations 3" in capsys.readouterr().out


def test_sweep(tmp_path, capsys):
    code = cli.main(["sweep", "--preset", "cantilever", *SMALL, "--param", "ell", "--values", "0.01", "0.02",
                     "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "ell=0.01" / "history.csv").exists() and (tmp_path / "ell=0.02" / "history.csv").exists()
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("ell=0.01") and out[1].startswith("ell=0.02")


def test_dump_preset(capsys):
    assert cli.main(["dump-preset", "girder"]) == 0
    assert json.loads(capsys.readouterr().out)["evolution"]["k"] == 0.011
    assert cli.main(["dump-preset", "bridge"]) == 2


@pytest.mark.parametrize("argv", [["run", "--preset", "nope"], ["run", "--preset", "cantilever", "--iters", "0"],
                                  ["run", "--preset", "cantilever", "--scheme", "we", "--k", "0.1"],
                                  ["run", "--nx", "4"]])
def test_config_errors_exit_2(argv):
    assert cli.main(argv) == 2


def test_solver_failure_exit_3(monkeypatch):
    def boom(*a, **k):
        raise RunAborted(4, SolverFailure("singular"))

    monkeypatch.setattr("wavetopo.optimizer.run", boom)
    assert cli.main(["run", "--preset", "cantilever", *SMALL]) == 3


def test_band_warning_printed(capsys):
    cli.main(["run", "--preset", "cantilever", "--scheme", "gwe", "--ell", "0.02", "--k", "0.01", *SMALL[:4],
              "--iters", "1", "--quiet"])
    assert "ell / k" in capsys.readouterr().err


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "wavetopo.cli", "dump-preset", "lbracket"], capture_output=True,
                         text=True, check=True)
    assert json.loads(out.stdout)["problem"]["yield_stress"] == 42.0
