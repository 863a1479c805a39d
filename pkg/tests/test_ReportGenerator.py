import os

import pytest

from hdea.Evolver import EAConfig
from hdea.ExperimentHarness import ComparisonReport, ExperimentPlan, NKSetting, run_budgeted_compare, run_nk_sweep
from hdea.Objective import ObjectiveSpec, SearchSpace
from hdea.ReportGenerator import (
    CURVES_HEADER,
    SIGNIFICANCE_HEADER,
    SUMMARY_HEADER,
    ReportGenerator,
    export_report,
)
from hdea.errors import ConfigurationError


@pytest.fixture(autouse=True)
def no_wandb(monkeypatch):
    monkeypatch.delenv("WANDB_API_KEY", raising=False)


@pytest.fixture
def plan():
    return ExperimentPlan(
        name="report-test",
        kind="nk",
        evolution=EAConfig(population_size=5, budget=8),
        algorithms=("baseline", "hdea"),
        settings=(NKSetting(10, 2, 5),),
        landscapes=2,
        runs=2,
        base_seed=3,
    )


def read_lines(path):
    with open(path) as file:
        return file.read().splitlines()


class TestReportGenerator:
    def test_empty_report_has_header_only_files(self, plan, tmp_path):
        paths = export_report(ComparisonReport(plan=plan), str(tmp_path))
        assert read_lines(paths["summary.csv"]) == [",".join(SUMMARY_HEADER)]
        assert read_lines(paths["significance.csv"]) == [",".join(SIGNIFICANCE_HEADER)]
        assert read_lines(paths["curves.csv"]) == [",".join(CURVES_HEADER)]
        assert read_lines(paths["failures.csv"]) == ["run,error"]
        assert os.listdir(tmp_path / "traces") == []

    def test_sweep_artifacts(self, plan, tmp_path):
        report = run_nk_sweep(plan)
        paths = export_report(report, str(tmp_path))
        summary = read_lines(paths["summary.csv"])
        assert len(summary) == 1 + 2
        assert summary[1].startswith("N10_K2_P5,baseline,4,4,true,")
        assert len(read_lines(paths["significance.csv"])) == 1 + 2
        assert len(read_lines(paths["curves.csv"])) == 1 + 2 * 9
        traces = sorted(os.listdir(tmp_path / "traces"))
        assert len(traces) == 2 * 8
        trace_lines = read_lines(tmp_path / "traces" / "N10_K2_P5_L00_R00_hdea.csv")
        assert trace_lines[0] == "generation,best,mean,offspring"
        assert len(trace_lines) == 1 + 9
        html = (tmp_path / "report.html").read_text()
        assert "report-test" in html
        assert "<th>Algorithm</th>" in html
        assert "best_parameters.csv" not in paths

    def test_export_is_byte_stable(self, plan, tmp_path):
        report = run_nk_sweep(plan)
        first = export_report(report, str(tmp_path / "a"))
        second = export_report(run_nk_sweep(plan), str(tmp_path / "b"))
        for name in ("summary.csv", "significance.csv", "curves.csv", "plan.json", "report.html"):
            with open(first[name], "rb") as a, open(second[name], "rb") as b:
                assert a.read() == b.read()

    def test_compare_writes_best_parameters(self, tmp_path):
        plan = ExperimentPlan(
            name="compare",
            kind="compare",
            evolution=EAConfig(
                population_size=4,
                budget=3,
                variation=EAConfig.from_dict({}, "realvalued_protocol").variation,
            ),
            runs=2,
            objective=ObjectiveSpec(kind="surrogate", direction="minimize", samples=1),
            search_space=SearchSpace.default(),
        )
        paths = ReportGenerator.export_report(run_budgeted_compare(plan), str(tmp_path))
        lines = read_lines(paths["best_parameters.csv"])
        header = lines[0].split(",")
        assert header[:4] == ["run", "algorithm", "raw", "attached_worker_migration_bias"]
        assert header[-1] == "cargo_release_o2_threshold_normalized"
        assert len(lines) == 1 + 4

    def test_unwritable_directory(self, plan, tmp_path):
        blocker = tmp_path / "file.txt"
        blocker.write_text("not a directory")
        with pytest.raises(ConfigurationError):
            export_report(ComparisonReport(plan=plan), str(blocker / "out"))
