import csv
import io
import json
import os

import pytest

from mwu_lab.cli import build_parser, main, reproduce_paper


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestSimulate:
    def test_json(self, capsys) -> None:
        code, out, _ = _run(capsys, "simulate", "--game", "game1", "--variant", "exp", "--eps", "1-exp(-10)", "--start", "0.3")
        body = json.loads(out)
        assert code == 0 and body["termination"] == "cycle_detected" and body["period"] == 2
        assert body["rates"]["decay"] == [10.0, 10.0]

    def test_csv_to_file(self, tmp_path, capsys) -> None:
        out = tmp_path / "t.csv"
        code, _, _ = _run(capsys, "simulate", "--game", "game2", "--eps-per-agent", "0.5,0.6", "--start", "[[0.2,0.8],[0.6,0.4]]", "--format", "csv", "--out", str(out))
        text = out.read_text()
        assert code == 0 and text.startswith("# {")
        rows = list(csv.DictReader(io.StringIO(text.split("\n", 1)[1])))
        assert float(rows[0]["p[0][0]"]) == 0.2

    def test_game_file(self, tmp_path, capsys) -> None:
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"n_agents": 2, "edges": ["a", "b"], "strategies": [[["a"], ["b"]]] * 2, "costs": {"a": [1, 2], "b": [1, 3]}}))
        code, out, _ = _run(capsys, "simulate", "--game", str(path), "--eps", "0.2")
        assert code == 0 and json.loads(out)["termination"] == "converged"

    @pytest.mark.parametrize("argv", [["simulate", "--game", "missing.json"], ["simulate", "--eps", "1.5"], ["simulate", "--game", "game1", "--start", "[[0.5,0.6],[0.5,0.5]]"]])
    def test_errors_exit_nonzero(self, capsys, argv) -> None:
        code, _, err = _run(capsys, *argv)
        assert code == 2 and err.startswith("error:")

    def test_exactly_one_subcommand(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestOtherCommands:
    def test_sweep_csv(self, capsys) -> None:
        code, out, _ = _run(capsys, "sweep", "--variant", "exp", "--eps", "1-exp(-10),0.5", "--start", "0.3", "--format", "csv")
        outcomes = {r["outcome"] for r in csv.DictReader(io.StringIO(out))}
        assert code == 0 and outcomes == {"periodic-2", "converged"}

    def test_verify_lyapunov(self, capsys) -> None:
        code, out, err = _run(capsys, "verify-lyapunov", "--n-games", "3", "--n-starts", "2", "--iters", "100")
        assert code == 0 and json.loads(out)["violations"] == 0 and "0 violations" in err

    def test_verify_lyapunov_builtin_exp(self, capsys) -> None:
        code, out, _ = _run(capsys, "verify-lyapunov", "--game", "game1", "--variant", "exp", "--eps", "1-exp(-10)", "--start", "0.3,0.45")
        assert code == 0 and json.loads(out)["violations"] > 0

    def test_analyze_1d(self, capsys) -> None:
        code, out, _ = _run(capsys, "analyze-1d", "--map", "G", "--k", "1", "--bracket", "0.4", "0.5")
        body = json.loads(out)
        assert code == 0 and body["li_yorke"]["holds"] and len(body["fixed_points"]["1"]) == 3

    def test_analyze_1d_reduction_csv(self, capsys) -> None:
        code, out, _ = _run(capsys, "analyze-1d", "--map", "reduce", "--game", "game1", "--eps", "1-exp(-10)", "--format", "csv")
        assert code == 0 and out.splitlines()[0] == "x,F1,F2,F3,F10"


class TestReproduce:
    def test_bundle(self, tmp_path, capsys) -> None:
        a, b = tmp_path / "a", tmp_path / "b"
        assert reproduce_paper(str(a)) == 0
        assert reproduce_paper(str(b)) == 0
        names = sorted(os.listdir(a))
        assert len(names) >= 10 and names == sorted(os.listdir(b))
        for n in names:
            assert (a / n).read_bytes() == (b / n).read_bytes(), n
        checks = json.loads((a / "checks.json").read_text())
        assert all(c["passed"] for c in checks)
        assert "PASS contrast" in capsys.readouterr().out

    def test_unwritable(self, tmp_path, capsys) -> None:
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code = main(["reproduce-paper", "--out", str(blocker / "sub")])
        assert code != 0 and "first failing check" in capsys.readouterr().err
