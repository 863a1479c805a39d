import io
import json
from unittest.mock import patch

import pytest

from hdea.NKLandscape import NKLandscape
from hdea.main import main, parse_args


@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    monkeypatch.delenv("WANDB_API_KEY", raising=False)
    monkeypatch.chdir(tmp_path)


def run_main(argv):
    with pytest.raises(SystemExit) as exc_info:
        main(argv)
    return exc_info.value.code


def write_trace_csv(path, values):
    path.write_text("generation,best\n" + "".join(f"{i},{v}\n" for i, v in enumerate(values)))
    return str(path)


class TestParseArgs:
    def test_gen_nk(self):
        args = parse_args(["gen-nk", "--n", "20", "--k", "3", "--seed", "7", "--out", "l.json"])
        assert (args.n, args.k, args.seed, args.out) == (20, 3, 7, "l.json")
        assert args.print_optimum is False

    def test_stats_defaults(self):
        args = parse_args(["stats", "--a", "a.csv"])
        assert args.column == "best"
        assert args.test == "summary"
        assert args.alternative == "two-sided"
        assert args.b is None

    def test_experiment_commands_carry_their_kind(self):
        assert parse_args(["sweep", "--config", "p.toml"]).plan_kind == "nk"
        compare = parse_args(["compare", "--config", "p.toml", "--n-jobs", "4"])
        assert compare.plan_kind == "compare"
        assert compare.n_jobs == 4

    def test_eval_server_defaults(self):
        args = parse_args(["eval-server", "--mock"])
        assert args.mode == "constant"
        assert args.value == 480.0
        assert args.dimension == 6
        assert args.crash_after is None

    def test_command_is_required(self):
        with pytest.raises(SystemExit):
            parse_args([])


class TestGenNK:
    def test_writes_landscape_and_prints_optimum(self, tmp_path, capsys):
        out = tmp_path / "landscape.json"
        assert run_main(["gen-nk", "--n", "10", "--k", "2", "--seed", "5", "--out", str(out), "--print-optimum"]) == 0
        landscape = NKLandscape.load(str(out))
        assert landscape == NKLandscape.generate(10, 2, 5)
        genome, fitness = capsys.readouterr().out.split()
        expected_genome, expected_fitness = landscape.brute_force_optimum()
        assert genome == str(expected_genome)
        assert float(fitness) == expected_fitness

    def test_bad_parameters_exit_with_configuration_code(self, tmp_path):
        assert run_main(["gen-nk", "--n", "5", "--k", "5", "--seed", "1", "--out", str(tmp_path / "x.json")]) == 2

    @patch("hdea.main.CustomLogger.reset_log_file")
    def test_log_file_is_reset(self, mock_reset, tmp_path):
        run_main(["gen-nk", "--n", "4", "--k", "1", "--seed", "1", "--out", str(tmp_path / "x.json")])
        mock_reset.assert_called_once()


class TestRun:
    def test_run_from_config(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text(
            "[evolution]\n"
            "algorithm = \"hdea\"\n"
            "population_size = 6\n"
            "budget = 20\n"
            "run_seed = 3\n"
            "\n"
            "[objective]\n"
            "kind = \"nk\"\n"
            "direction = \"maximize\"\n"
            "landscape = [12, 2, 5]\n"
        )
        out = tmp_path / "traces" / "run.csv"
        assert run_main(["run", "--config", str(config), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "generation,best,mean,offspring"
        assert len(lines) == 1 + 21
        sidecar = json.loads((tmp_path / "traces" / "run.json").read_text())
        assert sidecar["config"]["algorithm"] == "hdea"
        assert sidecar["evaluations"] == 26
        assert sidecar["objective"]["landscape"] == [12, 2, 5]

    def test_missing_objective_table(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("[evolution]\nbudget = 5\n")
        assert run_main(["run", "--config", str(config), "--out", str(tmp_path / "t.csv")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert run_main(["run", "--config", str(tmp_path / "nope.toml"), "--out", "t.csv"]) == 2


class TestExperiments:
    def test_sweep_writes_report(self, tmp_path):
        config = tmp_path / "plan.toml"
        config.write_text(
            "[plan]\n"
            "name = \"tiny\"\n"
            "n_values = [10]\n"
            "k_values = [1]\n"
            "landscapes = 1\n"
            "runs = 2\n"
            "\n"
            "[evolution]\n"
            "population_size = 5\n"
            "budget = 10\n"
        )
        out = tmp_path / "report"
        assert run_main(["sweep", "--config", str(config), "--out", str(out)]) == 0
        summary = (out / "summary.csv").read_text().splitlines()
        assert len(summary) == 1 + 2
        assert summary[1].startswith("N10_K1_P5,baseline,2,2,true")
        assert (out / "plan.json").exists()


class TestStats:
    def test_summary(self, tmp_path, capsys):
        path = write_trace_csv(tmp_path / "a.csv", [1.0, 2.0, 3.0])
        assert run_main(["stats", "--a", path]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["mean"] == 2.0
        assert result["n"] == 3

    def test_summary_of_one_value_prints_null_spread(self, tmp_path, capsys):
        path = write_trace_csv(tmp_path / "a.csv", [4.0])
        assert run_main(["stats", "--a", path]) == 0
        output = capsys.readouterr().out
        assert "NaN" not in output
        result = json.loads(output)
        assert result["sd"] is None
        assert result["kurtosis"] is None
        assert result["mean"] == 4.0

    def test_wilcoxon(self, tmp_path, capsys):
        a = write_trace_csv(tmp_path / "a.csv", [2.0, 3.0, 4.0, 5.0, 6.0])
        b = write_trace_csv(tmp_path / "b.csv", [1.0] * 5)
        assert run_main(["stats", "--a", a, "--b", b, "--test", "wilcoxon"]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["p_value"] == pytest.approx(0.0625)
        assert result["statistic"] == 15.0

    def test_welch_needs_second_file(self, tmp_path):
        a = write_trace_csv(tmp_path / "a.csv", [1.0, 2.0])
        assert run_main(["stats", "--a", a, "--test", "welch"]) == 2

    def test_missing_column(self, tmp_path):
        a = write_trace_csv(tmp_path / "a.csv", [1.0, 2.0])
        assert run_main(["stats", "--a", a, "--column", "fitness"]) == 2


class TestEvalServer:
    def test_requires_mock(self):
        assert run_main(["eval-server"]) == 2

    def test_serves_stdin(self, capsys):
        stdin = io.StringIO(
            '{"type": "hello", "protocol": 1, "dimension": 6}\n'
            '{"type": "evaluate", "id": 1, "genome": [0, 0, 0, 0, 0, 0], "sample_index": 0, "seed": 1}\n'
            '{"type": "shutdown"}\n'
        )
        with patch("sys.stdin", stdin):
            assert run_main(["eval-server", "--mock", "--value", "7.5"]) == 0
        replies = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert replies[0]["type"] == "hello"
        assert replies[1] == {"type": "result", "id": 1, "value": 7.5}
