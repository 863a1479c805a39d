import sys

import numpy as np
import pytest

from hdea.Evolver import EAConfig, Evolver
from hdea.ExperimentHarness import (
    ExperimentHarness,
    ExperimentPlan,
    NKSetting,
    curve_generations,
    run_budgeted_compare,
    run_nk_sweep,
)
from hdea.Objective import ObjectiveSpec, SearchSpace
from hdea.errors import ConfigurationError, EvaluationError

MOCK_COMMAND = (sys.executable, "-m", "hdea.main", "eval-server", "--mock", "--mode", "constant")


@pytest.fixture(autouse=True)
def no_wandb(monkeypatch):
    monkeypatch.delenv("WANDB_API_KEY", raising=False)


def nk_plan(**overrides):
    values = dict(
        name="smoke",
        kind="nk",
        evolution=EAConfig(population_size=6, budget=10),
        algorithms=("baseline", "hdea"),
        settings=(NKSetting(12, 2, 6),),
        landscapes=1,
        runs=1,
        base_seed=1,
    )
    values.update(overrides)
    return ExperimentPlan(**values)


def compare_plan(**overrides):
    values = dict(
        name="compare",
        kind="compare",
        evolution=EAConfig(
            population_size=6,
            budget=5,
            tournament_size=3,
            variation=EAConfig.from_dict({}, "realvalued_protocol").variation,
        ),
        algorithms=("baseline", "hdea"),
        runs=3,
        base_seed=2,
        objective=ObjectiveSpec(kind="surrogate", direction="minimize", samples=2),
        search_space=SearchSpace.default(),
    )
    values.update(overrides)
    return ExperimentPlan(**values)


class TestExperimentPlan:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            nk_plan(algorithms=("baseline", "tabu"))
        with pytest.raises(ConfigurationError):
            nk_plan(algorithms=("baseline", "baseline"))
        with pytest.raises(ConfigurationError):
            nk_plan(settings=())
        with pytest.raises(ConfigurationError):
            nk_plan(subset_runs=2)
        with pytest.raises(ConfigurationError):
            compare_plan(objective=None)

    def test_cells_and_totals(self):
        plan = nk_plan(settings=(NKSetting(12, 0, 6), NKSetting(12, 4, 6)), landscapes=2, runs=3)
        assert plan.cells == ["N12_K0_P6", "N12_K4_P6"]
        assert plan.total_runs == 2 * 2 * 3 * 2
        assert compare_plan().cells == ["P6"]

    def test_seeds(self):
        plan = nk_plan()
        assert plan.landscape_seed(12, 2, 0) == nk_plan(base_seed=1).landscape_seed(12, 2, 0)
        assert plan.landscape_seed(12, 2, 0) != plan.landscape_seed(12, 2, 1)
        assert plan.run_seed("c", 0, 0, "baseline") != plan.run_seed("c", 0, 0, "hdea")

    def test_jobs_of_one_run_share_the_initial_population(self):
        jobs = ExperimentHarness(nk_plan(runs=2)).nk_jobs()
        assert len(jobs) == 4
        by_run = {}
        for job in jobs:
            by_run.setdefault(job.run, []).append(job)
        for run_jobs in by_run.values():
            assert len({j.config.initial_seed for j in run_jobs}) == 1
            assert len({j.config.run_seed for j in run_jobs}) == 2
        assert jobs[0].label == "N12_K2_P6_L00_R00_baseline"

    def test_landscape_does_not_depend_on_population_size(self):
        plan = nk_plan(settings=(NKSetting(12, 2, 6), NKSetting(12, 2, 10)))
        seeds = {job.landscape_seed for job in ExperimentHarness(plan).nk_jobs()}
        assert len(seeds) == 1

    def test_from_config_nk(self):
        plan = ExperimentPlan.from_config(
            {
                "plan": {"name": "grid", "n_values": [20], "k_values": [0, 4], "landscapes": 2, "runs": 3},
                "evolution": {"budget": 50},
            },
            "nk",
        )
        assert plan.cells == ["N20_K0_P30", "N20_K4_P30"]
        assert plan.evolution.budget == 50
        assert plan.evolution.tournament_size == 2
        assert plan.total_runs == 2 * 2 * 3 * 2

    def test_from_config_compare_defaults(self):
        plan = ExperimentPlan.from_config({"plan": {"subset_runs": 10}}, "compare")
        assert plan.objective.kind == "surrogate"
        assert plan.objective.direction == "minimize"
        assert plan.objective.samples == 5
        assert plan.runs == 30
        assert plan.subset_runs == 10
        assert plan.evolution.population_size == 50
        assert plan.evolution.budget == 100
        assert plan.search_space == SearchSpace.default()


class TestCurveGenerations:
    def test_thinning_keeps_both_ends(self):
        generations = curve_generations(20000, 201)
        assert len(generations) == 201
        assert generations[0] == 0 and generations[-1] == 20000

    def test_short_runs_keep_every_generation(self):
        assert curve_generations(5, 201).tolist() == [0, 1, 2, 3, 4, 5]


class TestNKSweep:
    def test_smoke(self):
        report = run_nk_sweep(nk_plan())
        assert len(report.cells) == 2
        assert len(report.traces) == 2
        assert report.complete
        for summary in report.cells:
            assert summary.runs == 1
            assert summary.evaluations == 6 + 10
            assert summary.monotone
        # one run per cell: too few values for Welch's test
        assert [row.test for row in report.significance] == ["wilcoxon-landscape-paired-final-best"]

    def test_same_plan_same_report(self):
        first = run_nk_sweep(nk_plan(runs=2))
        second = run_nk_sweep(nk_plan(runs=2))
        assert [c.mean for c in first.cells] == [c.mean for c in second.cells]
        for label, trace in first.traces.items():
            assert np.array_equal(trace.best, second.traces[label].best)

    def test_significance_rows(self):
        report = run_nk_sweep(nk_plan(landscapes=2, runs=2, algorithms=("baseline", "hdea", "control-2p")))
        tests = [(row.algorithm, row.test) for row in report.significance]
        assert tests == [
            ("hdea", "welch-pooled-final-best"),
            ("hdea", "wilcoxon-landscape-paired-final-best"),
            ("control-2p", "welch-pooled-final-best"),
            ("control-2p", "wilcoxon-landscape-paired-final-best"),
        ]
        assert all(0.0 <= row.result.p_value <= 1.0 for row in report.significance)
        assert [curve.best.n for curve in report.curves] == [4, 4, 4]

    def test_failed_runs_mark_the_cell_incomplete(self, mocker):
        original = Evolver.run

        def flaky(self, initial_population=None):
            if self.config.algorithm == "hdea":
                raise EvaluationError("simulated crash")
            return original(self, initial_population)

        mocker.patch.object(Evolver, "run", flaky)
        report = run_nk_sweep(nk_plan(runs=2))
        assert not report.complete
        assert report.cell("N12_K2_P6", "hdea").runs == 0
        assert report.cell("N12_K2_P6", "baseline").complete
        assert len(report.failures) == 2
        assert "simulated crash" in report.failures[0][1]
        assert report.significance == []

    def test_traces_can_be_dropped(self):
        report = run_nk_sweep(nk_plan(write_traces=False))
        assert report.traces == {}
        assert len(report.curves) == 2

    def test_wandb_logging(self, mocker, monkeypatch):
        monkeypatch.setenv("WANDB_API_KEY", "test-key")
        mock_wandb = mocker.patch("hdea.ExperimentHarness.wandb")
        run_nk_sweep(nk_plan())
        mock_wandb.login.assert_called_once_with(key="test-key")
        assert mock_wandb.init.call_args.kwargs["project"] == "hdea"
        assert mock_wandb.log.call_count == 2
        mock_wandb.finish.assert_called_once()


class TestBudgetedCompare:
    def test_surrogate_compare(self):
        report = run_budgeted_compare(compare_plan())
        assert report.complete
        for summary in report.cells:
            assert summary.runs == 3
            assert summary.evaluations == (6 + 5) * 2
        assert len(report.best_parameters) == 6
        for row in report.best_parameters:
            assert all(0.0 <= v <= 1.0 for v in row.normalized)
        assert [row.test for row in report.significance] == ["wilcoxon-final-best", "wilcoxon-final-mean"]

    def test_zero_budget_gives_identical_starts(self):
        report = run_budgeted_compare(compare_plan(evolution=EAConfig(
            population_size=6,
            budget=0,
            variation=EAConfig.from_dict({}, "realvalued_protocol").variation,
        )))
        baseline = report.cell("P6", "baseline")
        hdea = report.cell("P6", "hdea")
        assert baseline.mean == hdea.mean
        assert baseline.min == hdea.min
        assert all(row.result.p_value == 1.0 for row in report.significance)

    def test_subset_tests(self):
        report = run_budgeted_compare(compare_plan(runs=4, subset_runs=2))
        tests = [row.test for row in report.significance]
        assert "wilcoxon-final-best-first2" in tests
        assert "wilcoxon-final-mean-first2" in tests

    def test_constant_external_evaluator(self):
        plan = compare_plan(
            runs=2,
            evolution=EAConfig(
                population_size=4,
                budget=2,
                variation=EAConfig.from_dict({}, "realvalued_protocol").variation,
            ),
            objective=ObjectiveSpec(
                kind="external", direction="minimize", samples=2, command=MOCK_COMMAND, timeout=120
            ),
        )
        report = run_budgeted_compare(plan)
        assert report.complete
        for curve in report.curves:
            assert np.all(curve.best.mean == 480.0)
        assert all(row.result.p_value == 1.0 for row in report.significance)

    def test_failing_evaluator_fails_every_algorithm_of_the_run(self):
        plan = compare_plan(
            runs=1,
            objective=ObjectiveSpec(
                kind="external",
                direction="minimize",
                command=MOCK_COMMAND + ("--crash-after", "2"),
                timeout=120,
            ),
        )
        report = run_budgeted_compare(plan)
        assert not report.complete
        assert len(report.failures) == 2
        assert "exited with code 3" in report.failures[0][1]
        assert report.best_parameters == []
