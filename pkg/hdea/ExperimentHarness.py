import datetime
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
import wandb
from joblib import Parallel, delayed

from hdea.CustomLogger import CustomLogger
from hdea.Evolver import ALGORITHMS, EAConfig, Evolver, RunTrace
from hdea.Genome import GenomeSpec, Individual
from hdea.NKLandscape import NKLandscape
from hdea.Objective import NKObjective, ObjectiveSpec, SampledObjective, SearchSpace, open_objective
from hdea.Statistics import (
    CurveBand,
    TestResult,
    confidence_band,
    welch_t_test,
    wilcoxon_signed_rank,
)
from hdea.errors import ConfigurationError, HDEAError, StatisticsError
from hdea.settings.config_loader import section
from hdea.utils import derive_seed

PLAN_KINDS = ("nk", "compare")
BASELINE = "baseline"
CONFIDENCE_LEVEL = 0.95


@dataclass(frozen=True)
class NKSetting:
    n: int
    k: int
    population_size: int

    @property
    def label(self) -> str:
        return f"N{self.n}_K{self.k}_P{self.population_size}"


@dataclass(frozen=True)
class ExperimentPlan:
    """
    A grid of runs and how to seed them.

    kind "nk" crosses settings x landscapes x runs x algorithms on generated NK
    landscapes. kind "compare" runs every algorithm `runs` times on a
    real-valued objective, all algorithms of one run index starting from the
    same evaluated initial population.

    `evolution` is a template: algorithm, seeds and (for NK settings) the
    population size are filled in per run.
    """

    name: str
    kind: str
    evolution: EAConfig
    algorithms: Tuple[str, ...] = (BASELINE, "hdea")
    settings: Tuple[NKSetting, ...] = ()
    landscapes: int = 1
    runs: int = 1
    base_seed: int = 0
    output_dir: str = "results"
    n_jobs: int = 1
    objective: Optional[ObjectiveSpec] = None
    search_space: Optional[SearchSpace] = None
    subset_runs: Optional[int] = None
    write_traces: bool = True
    curve_points: int = 201

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise ConfigurationError(f"Unknown plan kind {self.kind!r}")
        if not self.algorithms:
            raise ConfigurationError("A plan needs at least one algorithm")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigurationError(f"Unknown algorithms {unknown}; expected some of {ALGORITHMS}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigurationError(f"Algorithms listed twice: {list(self.algorithms)}")
        if self.landscapes < 1 or self.runs < 1:
            raise ConfigurationError("landscapes and runs must be at least 1")
        if self.n_jobs == 0:
            raise ConfigurationError("n_jobs must not be 0")
        if self.curve_points < 2:
            raise ConfigurationError("curve_points must be at least 2")
        if self.subset_runs is not None and not 1 <= self.subset_runs <= self.runs:
            raise ConfigurationError(f"subset_runs must lie in 1..{self.runs}: {self.subset_runs}")
        if self.kind == "nk" and not self.settings:
            raise ConfigurationError("An NK plan needs at least one (n, k, P) setting")
        if self.kind == "compare":
            if self.objective is None or self.objective.kind == "nk":
                raise ConfigurationError("A compare plan needs a surrogate or external objective")

    @property
    def cells(self) -> List[str]:
        if self.kind == "nk":
            return [s.label for s in self.settings]
        return [f"P{self.evolution.population_size}"]

    @property
    def total_runs(self) -> int:
        return len(self.cells) * self.landscapes * self.runs * len(self.algorithms)

    @property
    def direction(self) -> str:
        return self.objective.direction if self.objective else "maximize"

    def landscape_seed(self, n: int, k: int, landscape: int) -> int:
        return derive_seed(self.base_seed, "landscape", n, k, landscape)

    def init_seed(self, cell: str, landscape: int, run: int) -> int:
        return derive_seed(self.base_seed, "init", cell, landscape, run)

    def run_seed(self, cell: str, landscape: int, run: int, algorithm: str) -> int:
        return derive_seed(self.base_seed, "evolve", cell, landscape, run, algorithm)

    @classmethod
    def from_config(cls, config: dict, kind: str) -> "ExperimentPlan":
        """
        Build a plan from a config file's tables: [plan], [evolution],
        [variation], and for compare plans [objective] and [search_space].
        Missing keys come from the nk_protocol or realvalued_protocol defaults.
        """
        if kind not in PLAN_KINDS:
            raise ConfigurationError(f"Unknown plan kind {kind!r}")
        protocol = "nk_protocol" if kind == "nk" else "realvalued_protocol"
        defaults = section(protocol)
        plan = config.get("plan", {})
        evolution = dict(config.get("evolution", {}))
        evolution["variation"] = config.get("variation", {})
        template = EAConfig.from_dict(evolution, protocol)

        settings, objective, space = (), None, None
        if kind == "nk":
            if "population_sizes" in plan:
                sizes = plan["population_sizes"]
            elif "population_size" in evolution:
                sizes = [evolution["population_size"]]
            else:
                sizes = defaults["population_sizes"]
            settings = tuple(
                NKSetting(int(n), int(k), int(p))
                for n in plan.get("n_values", defaults["n_values"])
                for k in plan.get("k_values", defaults["k_values"])
                for p in sizes
            )
        else:
            objective_values = dict(config.get("objective", {}))
            objective_values.setdefault("kind", "surrogate")
            objective_values.setdefault("direction", defaults["direction"])
            objective_values.setdefault("samples", defaults["samples"])
            objective = ObjectiveSpec.from_dict(objective_values)
            space = (
                SearchSpace.from_dict(config["search_space"])
                if "search_space" in config
                else SearchSpace.default()
            )

        subset = plan.get("subset_runs")
        return cls(
            name=str(plan.get("name", kind)),
            kind=kind,
            evolution=template,
            algorithms=tuple(plan.get("algorithms", (BASELINE, "hdea"))),
            settings=settings,
            landscapes=int(plan.get("landscapes", defaults.get("landscapes", 1))) if kind == "nk" else 1,
            runs=int(plan.get("runs", defaults["runs"])),
            base_seed=int(plan.get("base_seed", 0)),
            output_dir=str(plan.get("output_dir", os.path.join("results", kind))),
            n_jobs=int(plan.get("n_jobs", 1)),
            objective=objective,
            search_space=space,
            subset_runs=int(subset) if subset is not None else None,
            write_traces=bool(plan.get("write_traces", True)),
            curve_points=int(plan.get("curve_points", 201)),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "evolution": self.evolution.to_dict(),
            "algorithms": list(self.algorithms),
            "settings": [[s.n, s.k, s.population_size] for s in self.settings],
            "landscapes": self.landscapes,
            "runs": self.runs,
            "base_seed": self.base_seed,
            "objective": self.objective.to_dict() if self.objective else None,
            "search_space": self.search_space.to_dict() if self.search_space else None,
            "subset_runs": self.subset_runs,
            "curve_points": self.curve_points,
        }


@dataclass(frozen=True)
class RunJob:
    cell: str
    landscape: int
    run: int
    algorithm: str
    config: EAConfig
    n: int = 0
    k: int = 0
    landscape_seed: int = 0

    @property
    def label(self) -> str:
        return f"{self.cell}_L{self.landscape:02d}_R{self.run:02d}_{self.algorithm}"


@dataclass
class RunOutcome:
    """What a worker sends back for one run; curves are thinned, in objective units."""

    job: RunJob
    final_best: float = float("nan")
    final_mean: float = float("nan")
    evaluations: int = 0
    monotone: bool = True
    best_curve: Optional[np.ndarray] = None
    mean_curve: Optional[np.ndarray] = None
    best_individual: Optional[Individual] = None
    trace: Optional[RunTrace] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class CellSummary:
    cell: str
    algorithm: str
    runs: int
    expected_runs: int
    mean: float
    sd: float
    min: float
    max: float
    mean_final_mean: float
    evaluations: Optional[int]
    monotone: bool

    @property
    def complete(self) -> bool:
        return self.runs == self.expected_runs


@dataclass(frozen=True)
class SignificanceRow:
    cell: str
    algorithm: str
    baseline: str
    test: str
    result: TestResult


@dataclass(frozen=True)
class CurveSet:
    cell: str
    algorithm: str
    generations: np.ndarray
    best: CurveBand
    mean: CurveBand


@dataclass(frozen=True)
class BestParameterRow:
    run: int
    algorithm: str
    raw: float
    values: Tuple[float, ...]
    normalized: Tuple[float, ...]


@dataclass
class ComparisonReport:
    plan: ExperimentPlan
    cells: List[CellSummary] = field(default_factory=list)
    significance: List[SignificanceRow] = field(default_factory=list)
    curves: List[CurveSet] = field(default_factory=list)
    traces: Dict[str, RunTrace] = field(default_factory=dict)
    best_parameters: List[BestParameterRow] = field(default_factory=list)
    failures: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return all(cell.complete for cell in self.cells)

    def cell(self, cell: str, algorithm: str) -> CellSummary:
        for summary in self.cells:
            if summary.cell == cell and summary.algorithm == algorithm:
                return summary
        raise KeyError((cell, algorithm))


def curve_generations(budget: int, points: int) -> np.ndarray:
    """Evenly spaced generations 0..budget, at most `points` of them, always both ends."""
    count = min(budget + 1, points)
    return np.unique(np.linspace(0, budget, count).round().astype(np.int64))


def _outcome(job: RunJob, trace: RunTrace, points: int, keep_trace: bool) -> RunOutcome:
    generations = curve_generations(job.config.budget, points)
    best, mean = trace.raw_series("best"), trace.raw_series("mean")
    return RunOutcome(
        job=job,
        final_best=float(best[-1]),
        final_mean=float(mean[-1]),
        evaluations=trace.evaluations,
        monotone=trace.is_monotone(),
        best_curve=best[generations],
        mean_curve=mean[generations],
        best_individual=trace.best_individual,
        trace=trace if keep_trace else None,
    )


def _failed(job: RunJob, error: HDEAError) -> RunOutcome:
    return RunOutcome(job=job, error=f"{error.category}: {error}")


@lru_cache(maxsize=4)
def _landscape(n: int, k: int, seed: int) -> NKLandscape:
    return NKLandscape.generate(n, k, seed)


def execute_nk_run(job: RunJob, points: int, keep_trace: bool) -> RunOutcome:
    """Worker entry point: regenerate the landscape from its seed and run one job."""
    try:
        landscape = _landscape(job.n, job.k, job.landscape_seed)
        objective = SampledObjective(
            NKObjective(landscape),
            direction="maximize",
            run_seed=job.config.run_seed,
            genome_spec=GenomeSpec.bits(job.n),
        )
        trace = Evolver(job.config, objective).run()
    except HDEAError as e:
        return _failed(job, e)
    return _outcome(job, trace, points, keep_trace)


def execute_compare_run(plan: ExperimentPlan, run: int) -> List[RunOutcome]:
    """
    Worker entry point for one run index of a budgeted comparison.

    The initial population is drawn and evaluated once, in its own evaluator
    session; every algorithm then evolves a copy of it in a session of its own.
    """
    cell = plan.cells[0]
    init_seed = plan.init_seed(cell, 0, run)
    jobs = [
        RunJob(
            cell=cell,
            landscape=0,
            run=run,
            algorithm=algorithm,
            config=replace(
                plan.evolution,
                algorithm=algorithm,
                init_seed=init_seed,
                run_seed=plan.run_seed(cell, 0, run, algorithm),
            ),
        )
        for algorithm in plan.algorithms
    ]
    space = plan.search_space
    try:
        seed = derive_seed(plan.base_seed, "initial-evaluation", run)
        with open_objective(plan.objective, seed, space=space) as objective:
            initial = Evolver(jobs[0].config, objective).initialize()
    except HDEAError as e:
        return [_failed(job, e) for job in jobs]

    outcomes = []
    for job in jobs:
        try:
            seed = derive_seed(plan.base_seed, "objective", run, job.algorithm)
            with open_objective(plan.objective, seed, space=space) as objective:
                trace = Evolver(job.config, objective).run(initial.individuals)
        except HDEAError as e:
            outcomes.append(_failed(job, e))
            continue
        outcomes.append(_outcome(job, trace, plan.curve_points, plan.write_traces))
    return outcomes


class ExperimentHarness:
    def __init__(self, plan: ExperimentPlan):
        """
        Parameters:
            plan (ExperimentPlan): The grid to execute. Runs are dispatched to
                plan.n_jobs joblib workers and merged back in submission order.
        """
        self.plan = plan
        self.logger = CustomLogger.get_logger(__name__)

    def _initialize_wandb(self) -> bool:
        """
        Initialize Weights & Biases logging if the API key is set.
        """
        if "WANDB_API_KEY" not in os.environ:
            return False
        wandb.login(key=os.environ["WANDB_API_KEY"])
        time_and_date = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
        run_name = f"{self.plan.name}_" + time_and_date
        wandb.init(project="hdea", name=run_name, config=self.plan.to_dict())
        return True

    def _log_to_wandb(self, report: ComparisonReport):
        for summary in report.cells:
            wandb.log(
                {
                    f"{summary.cell}/{summary.algorithm}/final_best_mean": summary.mean,
                    f"{summary.cell}/{summary.algorithm}/final_best_max": summary.max,
                    f"{summary.cell}/{summary.algorithm}/final_best_min": summary.min,
                }
            )
        wandb.finish()

    def nk_jobs(self) -> List[RunJob]:
        plan = self.plan
        jobs = []
        for setting in plan.settings:
            cell = setting.label
            for landscape in range(plan.landscapes):
                landscape_seed = plan.landscape_seed(setting.n, setting.k, landscape)
                for run in range(plan.runs):
                    init_seed = plan.init_seed(cell, landscape, run)
                    for algorithm in plan.algorithms:
                        config = replace(
                            plan.evolution,
                            population_size=setting.population_size,
                            algorithm=algorithm,
                            init_seed=init_seed,
                            run_seed=plan.run_seed(cell, landscape, run, algorithm),
                        )
                        jobs.append(
                            RunJob(cell, landscape, run, algorithm, config,
                                   n=setting.n, k=setting.k, landscape_seed=landscape_seed)
                        )
        return jobs

    def run(self) -> ComparisonReport:
        if self.plan.kind == "nk":
            return self.run_nk_sweep()
        return self.run_budgeted_compare()

    def run_nk_sweep(self) -> ComparisonReport:
        """Execute every NK run and assemble summaries, tests and curves."""
        plan = self.plan
        if plan.kind != "nk":
            raise ConfigurationError("run_nk_sweep needs an NK plan")
        use_wandb = self._initialize_wandb()
        jobs = self.nk_jobs()
        self.logger.info(f"Plan '{plan.name}': {len(jobs)} runs on {plan.n_jobs} worker(s)")
        outcomes = Parallel(n_jobs=plan.n_jobs)(
            delayed(execute_nk_run)(job, plan.curve_points, plan.write_traces) for job in jobs
        )
        report = self._assemble(outcomes)
        report.significance = self._nk_significance(report, outcomes)
        if use_wandb:
            self._log_to_wandb(report)
        return report

    def run_budgeted_compare(self) -> ComparisonReport:
        """Execute the paired runs of a real-valued comparison."""
        plan = self.plan
        if plan.kind != "compare":
            raise ConfigurationError("run_budgeted_compare needs a compare plan")
        use_wandb = self._initialize_wandb()
        self.logger.info(
            f"Plan '{plan.name}': {plan.runs} paired runs of {list(plan.algorithms)} "
            f"on a {plan.objective.kind} objective"
        )
        batches = Parallel(n_jobs=plan.n_jobs)(
            delayed(execute_compare_run)(plan, run) for run in range(plan.runs)
        )
        outcomes = [outcome for batch in batches for outcome in batch]
        report = self._assemble(outcomes)
        report.significance = self._compare_significance(report, outcomes)
        report.best_parameters = self._best_parameters(outcomes)
        if use_wandb:
            self._log_to_wandb(report)
        return report

    def _assemble(self, outcomes: List[RunOutcome]) -> ComparisonReport:
        plan = self.plan
        report = ComparisonReport(plan=plan)
        grouped: Dict[Tuple[str, str], List[RunOutcome]] = {}
        for outcome in outcomes:
            grouped.setdefault((outcome.job.cell, outcome.job.algorithm), []).append(outcome)
            if outcome.ok and outcome.trace is not None:
                report.traces[outcome.job.label] = outcome.trace
            if not outcome.ok:
                report.failures.append((outcome.job.label, outcome.error))
                self.logger.error(f"Run {outcome.job.label} failed: {outcome.error}")

        expected = plan.landscapes * plan.runs
        for cell in plan.cells:
            for algorithm in plan.algorithms:
                group = grouped.get((cell, algorithm), [])
                summary = self._summarize_cell(cell, algorithm, group, expected)
                report.cells.append(summary)
                state = "complete" if summary.complete else "INCOMPLETE"
                self.logger.info(
                    f"{cell} {algorithm}: mean final best {summary.mean:.6g} "
                    f"[{summary.min:.6g}, {summary.max:.6g}] over {summary.runs} runs ({state})"
                )
                curves = self._curves(cell, algorithm, [o for o in group if o.ok])
                if curves is not None:
                    report.curves.append(curves)
        return report

    def _summarize_cell(self, cell, algorithm, outcomes, expected) -> CellSummary:
        succeeded = [o for o in outcomes if o.ok]
        finals = np.array([o.final_best for o in succeeded])
        evaluations = sorted({o.evaluations for o in succeeded})
        if len(evaluations) > 1:
            self.logger.error(f"{cell} {algorithm}: unequal evaluation counts {evaluations}")
        nan = float("nan")
        return CellSummary(
            cell=cell,
            algorithm=algorithm,
            runs=len(succeeded),
            expected_runs=expected,
            mean=float(finals.mean()) if finals.size else nan,
            sd=float(finals.std(ddof=1)) if finals.size > 1 else nan,
            min=float(finals.min()) if finals.size else nan,
            max=float(finals.max()) if finals.size else nan,
            mean_final_mean=float(np.mean([o.final_mean for o in succeeded])) if succeeded else nan,
            evaluations=evaluations[0] if len(evaluations) == 1 else None,
            monotone=all(o.monotone for o in succeeded),
        )

    def _curves(self, cell, algorithm, outcomes) -> Optional[CurveSet]:
        if not outcomes:
            return None
        budget = outcomes[0].job.config.budget
        return CurveSet(
            cell=cell,
            algorithm=algorithm,
            generations=curve_generations(budget, self.plan.curve_points),
            best=_band([o.best_curve for o in outcomes]),
            mean=_band([o.mean_curve for o in outcomes]),
        )

    def _test(self, rows, cell, algorithm, test, function, xs, ys):
        try:
            result = function(xs, ys)
        except StatisticsError as e:
            self.logger.warning(f"{cell} {algorithm} vs {BASELINE}: {test} skipped ({e})")
            return
        rows.append(SignificanceRow(cell, algorithm, BASELINE, test, result))
        self.logger.info(
            f"{cell} {algorithm} vs {BASELINE}: {test} statistic={result.statistic:.6g} p={result.p_value:.4g}"
        )

    def _paired_groups(self, report, outcomes):
        """Yield (cell, algorithm, own outcomes, baseline outcomes) for complete cell pairs."""
        if BASELINE not in self.plan.algorithms:
            return
        for cell in self.plan.cells:
            baseline = [o for o in outcomes if o.job.cell == cell and o.job.algorithm == BASELINE]
            for algorithm in self.plan.algorithms:
                if algorithm == BASELINE:
                    continue
                if not (report.cell(cell, algorithm).complete and report.cell(cell, BASELINE).complete):
                    self.logger.warning(f"{cell} {algorithm}: incomplete, no significance tests")
                    continue
                own = [o for o in outcomes if o.job.cell == cell and o.job.algorithm == algorithm]
                yield cell, algorithm, own, baseline

    def _nk_significance(self, report, outcomes) -> List[SignificanceRow]:
        rows: List[SignificanceRow] = []
        for cell, algorithm, own, baseline in self._paired_groups(report, outcomes):
            self._test(
                rows, cell, algorithm, "welch-pooled-final-best", welch_t_test,
                [o.final_best for o in own], [o.final_best for o in baseline],
            )
            self._test(
                rows, cell, algorithm, "wilcoxon-landscape-paired-final-best", wilcoxon_signed_rank,
                _landscape_means(own, self.plan.landscapes),
                _landscape_means(baseline, self.plan.landscapes),
            )
        return rows

    def _compare_significance(self, report, outcomes) -> List[SignificanceRow]:
        rows: List[SignificanceRow] = []
        subsets = [(self.plan.runs, "")]
        if self.plan.subset_runs is not None and self.plan.subset_runs < self.plan.runs:
            subsets.append((self.plan.subset_runs, f"-first{self.plan.subset_runs}"))
        for cell, algorithm, own, baseline in self._paired_groups(report, outcomes):
            for count, suffix in subsets:
                for measure in ("final_best", "final_mean"):
                    self._test(
                        rows, cell, algorithm,
                        f"wilcoxon-{measure.replace('_', '-')}{suffix}", wilcoxon_signed_rank,
                        [getattr(o, measure) for o in own[:count]],
                        [getattr(o, measure) for o in baseline[:count]],
                    )
        return rows

    def _best_parameters(self, outcomes) -> List[BestParameterRow]:
        space = self.plan.search_space
        rows = []
        for outcome in outcomes:
            if not outcome.ok:
                continue
            best = outcome.best_individual
            rows.append(
                BestParameterRow(
                    run=outcome.job.run,
                    algorithm=outcome.job.algorithm,
                    raw=float(best.raw),
                    values=tuple(float(v) for v in best.genome.values),
                    normalized=tuple(float(v) for v in space.normalize(best.genome.values)),
                )
            )
        return rows


def _band(curves) -> CurveBand:
    if len(curves) == 1:
        curve = np.asarray(curves[0], dtype=np.float64)
        missing = np.full_like(curve, np.nan)
        return CurveBand(mean=curve, lower=missing, upper=missing, n=1, level=CONFIDENCE_LEVEL)
    return confidence_band(curves, CONFIDENCE_LEVEL)


def _landscape_means(outcomes: List[RunOutcome], landscapes: int) -> List[float]:
    return [
        float(np.mean([o.final_best for o in outcomes if o.job.landscape == landscape]))
        for landscape in range(landscapes)
    ]


def run_nk_sweep(plan: ExperimentPlan) -> ComparisonReport:
    return ExperimentHarness(plan).run_nk_sweep()


def run_budgeted_compare(plan: ExperimentPlan) -> ComparisonReport:
    return ExperimentHarness(plan).run_budgeted_compare()
