# tests/test_cli.py

import json

import numpy as np
import pytest

from qmpx import cli, network, qmp
from qmpx.linalg import crandn, random_pd


@pytest.fixture
def problem_file(tmp_path):
    rng = np.random.default_rng(3)
    p = qmp.QMPProblem(
        objective=qmp.QMFunction(A=random_pd(rng, 2), B=crandn(rng, 2, 2), D=np.eye(2), c=0.0),
        inequalities=(
            qmp.QMFunction(A=random_pd(rng, 2), B=np.zeros((2, 2)), D=np.eye(2), c=-1.0),
        ),
        kind="T2",
    )
    path = tmp_path / "problem.json"
    qmp.save_problem(p, path)
    return path


class TestSolve:
    @pytest.mark.parametrize("path_choice", ["auto", "bisection", "sdr", "socp"])
    def test_paths_agree(self, problem_file, capsys, path_choice):
        assert cli.main(["solve", str(problem_file), "--path", path_choice]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["kkt_residual"] < 1e-6
        assert "objective" in out and "x_opt" in out
        if path_choice == "bisection":
            assert out["mu"] >= 0

    def test_objectives_match_across_paths(self, problem_file, capsys):
        values = {}
        for choice in ("bisection", "sdr", "socp"):
            cli.main(["solve", str(problem_file), "--path", choice])
            values[choice] = json.loads(capsys.readouterr().out)["objective"]
        assert values["sdr"] == pytest.approx(values["bisection"], abs=1e-6)
        assert values["socp"] == pytest.approx(values["bisection"], abs=1e-6)


class TestScenarioCommand:
    def test_write_and_load(self, tmp_path, capsys):
        out = tmp_path / "scen.json"
        rc = cli.main(["scenario", "Example1", "--seed", "4", "--set", "n_t=2", "--out", str(out)])
        assert rc == 0
        scen = network.load_scenario(out)
        assert scen.case == "Example1"
        assert scen.src_ant == [2, 2]


class TestSimulate:
    def test_end_to_end(self, tmp_path, capsys):
        scen_path = tmp_path / "scen.json"
        cli.main(["scenario", "Example1", "--set", "n_t=2", "--out", str(scen_path)])
        capsys.readouterr()
        out = tmp_path / "curve.csv"
        rc = cli.main(
            [
                "simulate", str(scen_path),
                "--snr", "0:10:10", "--trials", "2", "--symbols", "500",
                "--seed", "1", "--out", str(out), "--max-sweeps", "4",
            ]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("snr_db,")
        assert len(lines) == 1 + 2 * 2  # two points, two strategies

    def test_initstudy(self, tmp_path, capsys):
        scen_path = tmp_path / "scen.json"
        cli.main(["scenario", "Example1", "--set", "n_t=2", "--out", str(scen_path)])
        capsys.readouterr()
        traces = tmp_path / "traces.csv"
        curves = tmp_path / "curves.csv"
        rc = cli.main(
            [
                "initstudy", str(scen_path),
                "--snr", "10", "--trials", "2", "--symbols", "500",
                "--seed", "2", "--out", str(traces), "--curves", str(curves),
                "--max-sweeps", "4",
            ]
        )
        assert rc == 0
        head = traces.read_text().splitlines()
        assert head[0] == "snr_db,initializer,sweep,avg_mse"
        labels = {line.split(",")[1] for line in head[1:]}
        assert labels == {
            "FullRankIdentityFeasible",
            "FullRankIdentityInfeasible",
            "RankDeficientFeasible",
        }
        rows = curves.read_text().splitlines()
        assert len(rows) == 1 + 3  # one point, three initializers
