import json

import numpy as np
import pytest
from click.testing import CliRunner

from uniform_lr.cli import main
from uniform_lr.simulation import DgpConfig, gen_archx


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def toy_csv(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("y,x\n1,1\n2,1\n")
    return str(p)


class TestTestRegression:
    def test_toy_statistic(self, runner, toy_csv):
        res = runner.invoke(main, ["test-regression", toy_csv, "--gamma", "x", "--draws", "1000"])
        assert res.exit_code == 0, res.output
        rep = json.loads(res.output)
        assert rep["lr_stat"] == pytest.approx(4.5)
        assert rep["decision"] == "Reject"

    def test_eta_not_below_alpha(self, runner, toy_csv):
        res = runner.invoke(main, ["test-regression", toy_csv, "--gamma", "x", "--eta", "0.1"])
        assert res.exit_code == 3
        assert "seed=" in res.output

    def test_bad_header(self, runner, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("y,\n1,2\n3,4\n")
        assert runner.invoke(main, ["test-regression", str(p), "--gamma", "x"]).exit_code == 2

    def test_missing_file(self, runner, tmp_path):
        assert runner.invoke(main, ["test-regression", str(tmp_path / "nope.csv"), "--gamma", "x"]).exit_code == 2

    def test_unassigned_column(self, runner, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,a,b\n1,1,0\n2,0,1\n3,1,1\n4,2,1\n")
        assert runner.invoke(main, ["test-regression", str(p), "--gamma", "a"]).exit_code == 2

    def test_report_file_and_manifest(self, runner, toy_csv, tmp_path):
        out, man = tmp_path / "r.json", tmp_path / "m.json"
        res = runner.invoke(main, ["test-regression", toy_csv, "--gamma", "x", "--draws", "1000",
                                   "--out", str(out), "--manifest", str(man)])
        assert res.exit_code == 0, res.output
        first = json.loads(out.read_text())
        manifest = json.loads(man.read_text())
        assert manifest["command"] == "test-regression" and manifest["seed"] == 0
        out.unlink()
        assert runner.invoke(main, ["replay", str(man)]).exit_code == 0
        again = json.loads(out.read_text())
        first.pop("timings"), again.pop("timings")
        assert first == again


class TestTestArch:
    def _write(self, tmp_path, gamma):
        data = gen_archx(DgpConfig("archx", gamma, (0.0,), 1000, rho=0.0, master_seed=5), 0)
        p = tmp_path / "arch.csv"
        rows = np.column_stack([data.y, data.x])
        np.savetxt(p, rows, delimiter=",", header="r,x1,x2", comments="")
        return str(p)

    def test_large_gamma_rejects(self, runner, tmp_path):
        path = self._write(tmp_path, 0.5)
        res = runner.invoke(main, ["test-arch", path, "--gamma", "x1", "--beta", "x2", "--draws", "2000", "--naive"])
        assert res.exit_code == 0, res.output
        line = res.output.strip().splitlines()
        rep = json.loads("\n".join(l for l in line if not l.startswith("LR=")))
        assert rep["decision"] == "Reject"
        assert rep["parameter_names"] == ["const", "lag1", "x1", "x2"]

    def test_empty_model(self, runner, tmp_path):
        path = self._write(tmp_path, 0.0)
        assert runner.invoke(main, ["test-arch", path, "--q", "0"]).exit_code == 2

    def test_no_gamma(self, runner, tmp_path):
        path = self._write(tmp_path, 0.0)
        assert runner.invoke(main, ["test-arch", path, "--beta", "x1", "--beta", "x2"]).exit_code == 2


class TestMc:
    def test_unknown_table(self, runner):
        assert runner.invoke(main, ["mc", "t9"]).exit_code == 2

    def test_config_file(self, runner, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"family": "regression", "gamma": 0.0, "beta": [0.0], "n": 100, "rho": 0.0,
                                   "replications": 1, "draws": 500}))
        res = runner.invoke(main, ["mc", "--config", str(cfg), "--quiet"])
        assert res.exit_code == 0, res.output
        lines = res.output.strip().splitlines()
        assert len(lines) == 3 and lines[1].split(",")[-1] == "1"

    def test_bad_config_key(self, runner, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"family": "regression", "gamma": 0.0, "beta": [0.0], "n": 100, "rho": 0.0,
                                   "colour": "red"}))
        assert runner.invoke(main, ["mc", "--config", str(cfg)]).exit_code == 2

    def test_replay_reproduces_csv(self, runner, tmp_path):
        out = tmp_path / "t1.csv"
        args = ["mc", "t1", "--reps", "3", "--draws", "500", "--rho", "0", "--n", "100", "--out", str(out), "--quiet"]
        assert runner.invoke(main, args).exit_code == 0
        first = out.read_text()
        out.unlink()
        assert runner.invoke(main, ["replay", str(out) + ".manifest.json"]).exit_code == 0
        assert out.read_text() == first


class TestQuantileSurface:
    def test_empty_grid(self, runner):
        res = runner.invoke(main, ["quantile-surface", "--rhos", "", "--bs", "0"])
        assert res.exit_code == 0
        assert res.output == "rho,b,quantile\n"

    def test_small_grid(self, runner):
        res = runner.invoke(main, ["quantile-surface", "--rhos", "0,-0.5", "--bs", "0,inf", "--draws", "2000"])
        assert res.exit_code == 0, res.output
        lines = res.output.strip().splitlines()
        assert len(lines) == 5

    def test_bad_grid(self, runner):
        assert runner.invoke(main, ["quantile-surface", "--rho-grid", "a:b"]).exit_code == 2
