import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from bsindy.cli import main

ROOT = Path(__file__).parents[1]


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestSimulate:
    def test_lorenz_grid(self, capsys):
        code, out, _ = _run(["simulate", "--system", "lorenz", "--t1", "2.5", "--dt", "0.025"],
                            capsys)
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0
        assert rows[0] == ["t", "x1", "x2", "x3"]
        assert len(rows) - 1 == 101
        assert float(rows[-1][0]) == pytest.approx(2.5)

    def test_file_output_and_params(self, tmp_path, capsys):
        path = tmp_path / "vdp.csv"
        code, out, _ = _run(["simulate", "--system", "van_der_pol", "--t1", "1", "--dt", "0.1",
                             "--param", "b=1.5", "--sigma", "0.1", "-o", str(path)], capsys)
        assert code == 0 and "11 rows" in out
        assert len(path.read_text().splitlines()) == 12

    def test_bad_param(self, capsys):
        code, _, err = _run(["simulate", "--system", "lorenz", "--t1", "1", "--dt", "0.1",
                             "--param", "rho"], capsys)
        assert code == 2 and json.loads(err.splitlines()[-1])["error"] == "usage"


class TestFit:
    def test_lynx_hare_equations(self, tmp_path, capsys):
        code, out, _ = _run(["fit", "--config", str(ROOT / "configs" / "lynx.json"),
                             "--out", str(tmp_path)], capsys)
        assert code == 0
        assert "dx1/dt = 0.53·x1 - 0.026·x1·x2" in out
        assert "dx2/dt = -0.98·x2 + 0.028·x1·x2" in out
        doc = json.loads((tmp_path / "model.json").read_text())
        assert doc["sigma_x"] == pytest.approx(2.7)

    def test_sigma_override(self, capsys):
        code, out, _ = _run(["fit", "--config", str(ROOT / "configs" / "lynx.json"),
                             "--sigma", "2.7"], capsys)
        assert code == 0 and "evidence maximum" not in out and "dx1/dt" in out

    def test_missing_config(self, tmp_path, capsys):
        code, _, err = _run(["fit", "--config", str(tmp_path / "none.json")], capsys)
        assert code == 2 and "not found" in err

    def test_unknown_key(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"data": "x.csv", "sigma": 1.0, "alpha": 2}))
        code, _, err = _run(["fit", "--config", str(path)], capsys)
        assert code == 2 and "alpha" in err

    def test_runtime_error(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"data": "missing.csv", "sigma": 1.0}))
        code, _, err = _run(["fit", "--config", str(path)], capsys)
        assert code == 1 and json.loads(err)["error"]


class TestOtherCommands:
    def test_sigma_sweep(self, tmp_path, capsys):
        code, out, _ = _run(["sigma-sweep", "--config", str(ROOT / "configs" / "lynx.json"),
                             "--out", str(tmp_path)], capsys)
        assert code == 0 and "sigma_best = 2.7" in out
        assert len((tmp_path / "sigma_sweep.csv").read_text().splitlines()) == 56 + 1

    def test_sweep_writes_report(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("BSINDY_THREADS", "1")
        code, out, _ = _run(["sweep", "--config", str(ROOT / "configs" / "cubic_sweep.json"),
                             "--trials", "2", "--out", str(tmp_path), "--stem", "cubic"], capsys)
        assert code == 0
        assert {p.name for p in tmp_path.iterdir()} == {"cubic.csv", "cubic.json",
                                                         "cubic.timing.json"}
        assert json.loads((tmp_path / "cubic.json").read_text())["config"]["trials"] == 2
        assert out.count("success=") == 3 * 2

    def test_active(self, tmp_path, capsys):
        code, out, _ = _run(["active", "--config", str(ROOT / "configs" / "active_vdp.json"),
                             "--out", str(tmp_path)], capsys)
        assert code == 0 and "pool 232 rows" in out
        assert (tmp_path / "history.csv").exists()

    def test_deriv_compare(self, tmp_path, capsys):
        code, out, _ = _run(["deriv-compare", "--dt", "0.1", "--out", str(tmp_path)], capsys)
        assert code == 0 and out.count("rms=") == 2
        assert (tmp_path / "deriv_compare.csv").exists()


class TestUsage:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "bsindy", "frobnicate"], capture_output=True,
                              text=True)
        assert proc.returncode == 2 and "usage" in proc.stderr
