"""Command-line behaviour: subcommands, output, exit codes."""

from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

from exprmine.cli import main


def run_cli(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synth dataset plus a completed run, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    synth_ini = root / "synth.ini"
    synth_ini.write_text(
        "[synth]\n"
        "n_rows = 300\n"
        "seed = 3\n"
        "planted = ((count_card_number_1h * 2) - 3)\n"
    )
    data_dir = root / "data"
    assert main(["synth", "--config", str(synth_ini), "--out", str(data_dir)]) == 0

    run_ini = root / "run.ini"
    out_dir = root / "out"
    run_ini.write_text(
        "[data]\n"
        f"csv = {data_dir / 'transactions.csv'}\n"
        f"schema = {data_dir / 'schema.ini'}\n"
        f"features = {data_dir / 'features.conf'}\n"
        f"out_dir = {out_dir}\n"
        "[mcts]\n"
        "n_expr = 6\n"
        "sims_per_move = 16\n"
        "max_len = 5\n"
        "max_epochs = 2\n"
        "patience = 1\n"
        "seed = 1\n"
        "constants = -2, 2, 3\n"
        "[eval]\n"
        "minibatch = 128\n"
    )
    return {"root": root, "synth_ini": synth_ini, "run_ini": run_ini,
            "data_dir": data_dir, "out_dir": out_dir}


class TestUsage:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("--help")
        assert exc.value.code == 0
        assert "synth" in capsys.readouterr().out

    def test_missing_subcommand_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli()
        assert exc.value.code == 1

    def test_unknown_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("synth", "--config", "x.ini", "--frobnicate")
        assert exc.value.code == 1

    def test_console_script_is_installed(self):
        proc = subprocess.run(
            [sys.executable, "-m", "exprmine.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "exprmine" in proc.stdout


class TestSynthCommand:
    def test_writes_dataset(self, workspace, capsys):
        out = capsys.readouterr()  # drain fixture output
        data_dir = workspace["data_dir"]
        for name in ("transactions.csv", "schema.ini", "features.conf", "manifest.json"):
            assert (data_dir / name).exists()

    def test_bad_config_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[synth]\nn_rows = -5\n")
        assert run_cli("synth", "--config", str(bad), "--out", str(tmp_path / "o")) == 2
        assert "exprmine:" in capsys.readouterr().err

    def test_missing_config_exits_two(self, tmp_path):
        missing = str(tmp_path / "none.ini")
        assert run_cli("synth", "--config", missing, "--out", str(tmp_path)) == 2

    def test_unwritable_out_exits_two(self, tmp_path, capsys):
        ini = tmp_path / "synth.ini"
        ini.write_text("[synth]\nn_rows = 10\nseed = 1\n")
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = run_cli("synth", "--config", str(ini), "--out", str(blocker / "sub"))
        assert code == 2
        assert "exprmine:" in capsys.readouterr().err


class TestRunCommand:
    def test_run_writes_artifacts_and_reports(self, workspace, capsys):
        assert run_cli("run", "--config", str(workspace["run_ini"])) == 0
        payload = json.loads(capsys.readouterr().out)
        assert "best_expression" in payload and "best_loss" in payload
        for name in ("report.json", "report.txt", "rules.txt", "archive.json"):
            assert (workspace["out_dir"] / name).exists()

    def test_unknown_key_exits_two(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[mcts]\nn_exprs = 4\n")
        assert run_cli("run", "--config", str(bad)) == 2


class TestEvalCommand:
    def test_scores_expression_text(self, workspace, capsys):
        code = run_cli(
            "eval",
            "--expr", "(count_card_number_1h - 2)",
            "--data", str(workspace["data_dir"] / "transactions.csv"),
            "--schema", str(workspace["data_dir"] / "schema.ini"),
            "--features", str(workspace["data_dir"] / "features.conf"),
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["expression"] == "(count_card_number_1h - 2)"
        assert payload["loss"] > 0
        assert payload["n_rows"] == 300
        assert payload["recall"] is not None

    def test_reads_expression_from_file(self, workspace, capsys):
        expr_file = workspace["root"] / "expr.txt"
        expr_file.write_text("(count_card_number_1h - 2)\n")
        code = run_cli(
            "eval",
            "--expr", str(expr_file),
            "--data", str(workspace["data_dir"] / "transactions.csv"),
            "--schema", str(workspace["data_dir"] / "schema.ini"),
            "--features", str(workspace["data_dir"] / "features.conf"),
        )
        assert code == 0
        assert json.loads(capsys.readouterr().out)["expression"].startswith("(count_")

    def test_unknown_feature_exits_two(self, workspace, capsys):
        code = run_cli(
            "eval",
            "--expr", "(no_such_column + 1)",
            "--data", str(workspace["data_dir"] / "transactions.csv"),
            "--schema", str(workspace["data_dir"] / "schema.ini"),
            "--features", str(workspace["data_dir"] / "features.conf"),
        )
        assert code == 2
        assert "exprmine:" in capsys.readouterr().err

    def test_missing_schema_exits_two(self, workspace, capsys):
        code = run_cli(
            "eval",
            "--expr", "(count_card_number_1h - 2)",
            "--data", str(workspace["data_dir"] / "transactions.csv"),
            "--schema", str(workspace["data_dir"] / "no_such_schema.ini"),
        )
        assert code == 2
        assert "cannot read schema file" in capsys.readouterr().err

    def test_missing_data_exits_two(self, workspace, capsys):
        code = run_cli(
            "eval",
            "--expr", "(count_card_number_1h - 2)",
            "--data", str(workspace["data_dir"] / "no_such_rows.csv"),
            "--schema", str(workspace["data_dir"] / "schema.ini"),
        )
        assert code == 2
        assert "cannot read transaction file" in capsys.readouterr().err


class TestRulesCommand:
    def test_prints_rules_from_archive(self, workspace, capsys):
        archive = workspace["out_dir"] / "archive.json"
        assert run_cli("rules", "--archive", str(archive), "--tau", "0.7") == 0
        out = capsys.readouterr().out
        assert ">=" in out
        assert "# id=0" in out

    def test_writes_rules_file(self, workspace, tmp_path, capsys):
        archive = workspace["out_dir"] / "archive.json"
        target = tmp_path / "rules.txt"
        assert run_cli("rules", "--archive", str(archive), "--out", str(target)) == 0
        assert ">=" in target.read_text()

    def test_malformed_archive_exits_two(self, tmp_path, capsys):
        bad = tmp_path / "archive.json"
        bad.write_text("{not json")
        assert run_cli("rules", "--archive", str(bad)) == 2


class TestOracleCommand:
    def write_csv(self, tmp_path, rows: list[str]) -> str:
        path = tmp_path / "data.csv"
        path.write_text("\n".join(rows) + "\n")
        return str(path)

    def test_exhaustive_search_reports_count(self, tmp_path, capsys):
        path = self.write_csv(tmp_path, [
            "x0,x1,y",
            "1.0,0.0,1",
            "-1.0,0.0,0",
            "2.0,1.0,1",
            "-2.0,-1.0,0",
        ])
        code = run_cli(
            "oracle", "--vocab", "f:x0,f:x1,c:2,add,mul", "--max-len", "5",
            "--data", path,
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["searched"] == 237
        assert payload["loss"] > 0
        assert payload["expression"]

    def test_missing_label_column_exits_two(self, tmp_path):
        path = self.write_csv(tmp_path, ["x0,x1", "1,2"])
        assert run_cli(
            "oracle", "--vocab", "f:x0,f:x1,add", "--max-len", "3", "--data", path
        ) == 2

    def test_non_numeric_cell_exits_two(self, tmp_path):
        path = self.write_csv(tmp_path, ["x0,y", "one,0"])
        assert run_cli(
            "oracle", "--vocab", "f:x0", "--max-len", "1", "--data", path
        ) == 2

    def test_missing_data_file_exits_two(self, tmp_path, capsys):
        missing = str(tmp_path / "no_such.csv")
        assert run_cli(
            "oracle", "--vocab", "f:x0", "--max-len", "1", "--data", missing
        ) == 2
        assert "cannot read data file" in capsys.readouterr().err

    def test_oversized_space_exits_three(self, tmp_path, capsys):
        path = self.write_csv(tmp_path, ["x0,x1,y", "1,2,1", "3,4,0"])
        code = run_cli(
            "oracle",
            "--vocab", "f:x0,f:x1,c:2,sin,cos,log,exp,add,sub,mul,div",
            "--max-len", "15",
            "--data", path,
        )
        assert code == 3
        assert "enumeration limit" in capsys.readouterr().err
