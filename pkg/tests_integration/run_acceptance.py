import argparse
import filecmp
import itertools
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np
import pytest
from joblib import Parallel, delayed
from scipy import stats

# Add the parent directory to the sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from hdea.CustomLogger import CustomLogger
from hdea.Evolver import EAConfig, Evolver
from hdea.ExperimentHarness import ExperimentPlan, NKSetting, run_budgeted_compare, run_nk_sweep
from hdea.Genome import GenomeSpec
from hdea.NKLandscape import NKLandscape
from hdea.Objective import NKObjective, ObjectiveSpec, SampledObjective, SearchSpace
from hdea.ReportGenerator import export_report
from hdea.Statistics import welch_t_test, wilcoxon_signed_rank
from hdea.utils import derive_seed, make_rng

REPO_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
MOCK_COMMAND = (sys.executable, "-m", "hdea.main", "eval-server", "--mock")

logger = CustomLogger.get_logger("acceptance")


def banner(text):
    print("\n" + "*" * len(text))
    print(text)
    print("*" * len(text) + "\n")


def nk_plan(args, k_values, algorithms, base_seed=0, **overrides):
    values = dict(
        name=f"acceptance-nk-{base_seed}",
        kind="nk",
        evolution=EAConfig.from_dict({"budget": args.budget}),
        algorithms=algorithms,
        settings=tuple(NKSetting(args.n, k, 30) for k in k_values),
        landscapes=args.landscapes,
        runs=args.runs,
        base_seed=base_seed,
        n_jobs=args.n_jobs,
        write_traces=False,
    )
    values.update(overrides)
    return ExperimentPlan(**values)


def welch_by_cell(report, algorithm):
    return {row.cell: row.result for row in report.significance
            if row.algorithm == algorithm and row.test == "welch-pooled-final-best"}


def check_parity_and_monotone(report):
    by_cell = {}
    for summary in report.cells:
        by_cell.setdefault(summary.cell, set()).add(summary.evaluations)
    parity = all(len(counts) == 1 and None not in counts for counts in by_cell.values())
    monotone = all(summary.monotone for summary in report.cells)
    return parity, monotone


def criterion_ruggedness(args):
    report = run_nk_sweep(nk_plan(args, (0, 4, 10), ("baseline", "hdea", "control-2p")))
    results = welch_by_cell(report, "hdea")
    rugged = f"N{args.n}_K10_P30"
    smooth = f"N{args.n}_K0_P30"
    better = report.cell(rugged, "hdea").mean > report.cell(rugged, "baseline").mean
    passed = better and results[rugged].p_value < 0.05 and results[smooth].p_value > 0.05
    logger.info(
        f"K=10 hdea-baseline p={results[rugged].p_value:.4g} (hdea better: {better}); "
        f"K=0 p={results[smooth].p_value:.4g}"
    )
    return passed, report


def _oracle_run(landscape, algorithm, seed, budget):
    objective = SampledObjective(NKObjective(landscape), genome_spec=GenomeSpec.bits(landscape.n))
    config = EAConfig.from_dict({"algorithm": algorithm, "budget": budget, "run_seed": seed})
    trace = Evolver(config, objective).run()
    return trace.final_best, trace.evaluations, trace.is_monotone()


def criterion_oracle(args):
    landscape = NKLandscape.generate(16, 0, 2024)
    _, optimum = landscape.brute_force_optimum()
    passed = True
    for algorithm in ("baseline", "hdea"):
        results = Parallel(n_jobs=args.n_jobs)(
            delayed(_oracle_run)(landscape, algorithm, derive_seed(7, "oracle", r), 20000)
            for r in range(50)
        )
        hits = sum(np.isclose(best, optimum, rtol=0, atol=1e-12) for best, _, _ in results)
        logger.info(f"{algorithm}: optimum reached in {hits}/50 runs")
        passed &= hits >= 48 and all(monotone for _, _, monotone in results)
    return passed


def criterion_control(args):
    successes = 0
    for replication in range(1, 6):
        report = run_nk_sweep(
            nk_plan(args, (10,), ("baseline", "control-2p"), base_seed=replication)
        )
        p_value = welch_by_cell(report, "control-2p")[f"N{args.n}_K10_P30"].p_value
        logger.info(f"replication {replication}: control-2p vs baseline p={p_value:.4g}")
        successes += p_value > 0.05
    return successes >= 4


def criterion_operators():
    return pytest.main(["-q", os.path.join(REPO_ROOT, "tests", "test_Variation.py")]) == 0


def criterion_wilcoxon(cases=1000):
    rng = make_rng(11)
    for _ in range(cases):
        n = int(rng.integers(1, 13))
        differences = np.round(rng.normal(0.2, 1.0, n), 1)
        differences[differences == 0] = 0.3
        ranks = stats.rankdata(np.abs(differences))
        observed = ranks[differences > 0].sum()
        sums = np.array(list(itertools.product((0, 1), repeat=n))) @ ranks
        oracle = min(1.0, 2 * min(np.mean(sums >= observed - 1e-9), np.mean(sums <= observed + 1e-9)))
        if abs(wilcoxon_signed_rank(differences, np.zeros(n)).p_value - oracle) > 1e-12:
            return False
    return True


def _permutation_p(xs, ys, permutations, rng, chunk=100_000):
    observed = abs(welch_t_test(xs, ys).statistic)
    pooled = np.concatenate([xs, ys])
    hits = 0
    for start in range(0, permutations, chunk):
        size = min(chunk, permutations - start)
        shuffled = rng.permuted(np.tile(pooled, (size, 1)), axis=1)
        a, b = shuffled[:, : len(xs)], shuffled[:, len(xs):]
        t = (a.mean(axis=1) - b.mean(axis=1)) / np.sqrt(
            a.var(axis=1, ddof=1) / a.shape[1] + b.var(axis=1, ddof=1) / b.shape[1]
        )
        hits += int(np.sum(np.abs(t) >= observed - 1e-12))
    return hits / permutations


def criterion_welch(permutations, cases=100):
    rng = make_rng(12)
    worst = 0.0
    for _ in range(cases):
        xs, ys = rng.normal(rng.uniform(0, 1), 1, 10), rng.normal(0, 1, 10)
        gap = abs(welch_t_test(xs, ys).p_value - _permutation_p(xs, ys, permutations, rng))
        worst = max(worst, gap)
    logger.info(f"largest |p_welch - p_perm| = {worst:.4g}")
    return worst <= 0.02


def compare_plan(args, objective, **overrides):
    values = dict(
        name="acceptance-compare",
        kind="compare",
        evolution=EAConfig.from_dict({}, "realvalued_protocol"),
        algorithms=("baseline", "hdea"),
        runs=args.compare_runs,
        base_seed=3,
        n_jobs=args.n_jobs,
        objective=objective,
        search_space=SearchSpace.default(),
    )
    values.update(overrides)
    return ExperimentPlan(**values)


def criterion_external(args):
    constant = ObjectiveSpec(kind="external", direction="minimize", samples=5, command=MOCK_COMMAND)
    report = run_budgeted_compare(compare_plan(args, constant, runs=2))
    evaluations = {summary.evaluations for summary in report.cells}
    end_to_end = report.complete and evaluations == {(50 + 100) * 5}

    crashing = replace(constant, command=MOCK_COMMAND + ("--crash-after", "400"), timeout=120)
    crashed = run_budgeted_compare(compare_plan(args, crashing, runs=1))
    categorized = bool(crashed.failures) and all(
        error.startswith("evaluation:") for _, error in crashed.failures
    )

    surrogate = ObjectiveSpec(kind="surrogate", direction="minimize", samples=5)
    report = run_budgeted_compare(compare_plan(args, surrogate))
    wins = 0
    for run in range(args.compare_runs):
        label = f"P50_L00_R{run:02d}"
        wins += report.traces[f"{label}_hdea"].final_mean >= report.traces[f"{label}_baseline"].final_mean
    logger.info(
        f"mock compare complete: {end_to_end}; killed evaluator categorized: {categorized}; "
        f"hdea average-solution wins {wins}/{args.compare_runs}"
    )
    return end_to_end and categorized and wins > args.compare_runs / 2


def criterion_determinism(args):
    plan = nk_plan(args, (2,), ("baseline", "hdea"), landscapes=2, runs=2,
                   evolution=EAConfig.from_dict({"budget": 500}), write_traces=True)
    with tempfile.TemporaryDirectory() as directory:
        first, second = os.path.join(directory, "a"), os.path.join(directory, "b")
        export_report(run_nk_sweep(plan), first)
        export_report(run_nk_sweep(plan), second)
        names = [os.path.relpath(os.path.join(root, name), first)
                 for root, _, files in os.walk(first) for name in files]
        _, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
        logger.info(f"{len(names)} artifacts compared, {len(mismatch) + len(errors)} differ")
        return bool(names) and not mismatch and not errors


def parse_args():
    parser = argparse.ArgumentParser(description="Acceptance experiments for hdea.")
    parser.add_argument("--quick", action="store_true", help="Smaller grids for a smoke pass.")
    parser.add_argument("--n-jobs", type=int, default=-1, help="Parallel workers. Default: all cores.")
    parser.add_argument("--permutations", type=int, default=1_000_000, help="Permutations per Welch case.")
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    os.chdir(REPO_ROOT)
    args.n = 50
    args.budget = 2000 if args.quick else 20000
    args.landscapes = args.runs = 3 if args.quick else 10
    args.compare_runs = 6 if args.quick else 30
    permutations = 20_000 if args.quick else args.permutations

    results = {}
    banner("1. NK ruggedness effect (plus 3. parity and 4. monotone elitism)")
    results["1 ruggedness"], sweep = criterion_ruggedness(args)
    results["3 parity"], results["4 monotone"] = check_parity_and_monotone(sweep)
    banner("2. Reduced-N oracle convergence")
    results["2 oracle"] = criterion_oracle(args)
    banner("5. Control-2p matches baseline")
    results["5 control-2p"] = criterion_control(args)
    banner("6. Operator property suites")
    results["6 operators"] = criterion_operators()
    banner("7. Wilcoxon exactness")
    results["7 wilcoxon"] = criterion_wilcoxon()
    banner("8. Welch test vs permutation")
    results["8 welch"] = criterion_welch(permutations)
    banner("9. External protocol and surrogate compare")
    results["9 external"] = criterion_external(args)
    banner("10. Determinism")
    results["10 determinism"] = criterion_determinism(args)

    banner("Summary")
    for name, passed in results.items():
        print(f"{name:<16} {'PASS' if passed else 'FAIL'}")
    sys.exit(0 if all(results.values()) else 1)
