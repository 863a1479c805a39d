import argparse
import json
import os
import sys
from dataclasses import replace

from hdea.CustomLogger import CustomLogger
from hdea.Evolver import EAConfig, Evolver
from hdea.ExperimentHarness import ExperimentHarness, ExperimentPlan
from hdea.MockEvaluator import MOCK_MODES, MockEvaluator
from hdea.NKLandscape import NKLandscape
from hdea.Objective import ObjectiveSpec, SearchSpace, open_objective
from hdea.ReportGenerator import ReportGenerator
from hdea.Statistics import summarize, welch_t_test, wilcoxon_signed_rank
from hdea.errors import ConfigurationError, HDEAError
from hdea.settings.config_loader import load_config_file
from hdea.utils import json_safe, read_csv_column
from hdea.version import __version__


def parse_args(argv=None):
    """
    Parse command line arguments.
    """
    parser = argparse.ArgumentParser(description=f"HDEA v{__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen_nk = subparsers.add_parser("gen-nk", help="Generate an NK landscape file.")
    gen_nk.add_argument("--n", type=int, required=True, help="Number of genes.")
    gen_nk.add_argument("--k", type=int, required=True, help="Epistatic neighbours per gene.")
    gen_nk.add_argument("--seed", type=int, required=True, help="Generation seed.")
    gen_nk.add_argument("--out", required=True, help="Path of the landscape JSON file.")
    gen_nk.add_argument(
        "--print-optimum",
        action="store_true",
        help="Also print the brute-force global optimum (n <= 24). Default: False.",
    )
    gen_nk.set_defaults(handler=command_gen_nk)

    run = subparsers.add_parser("run", help="Run one evolution from a config file.")
    run.add_argument("--config", required=True, help="Run configuration (TOML).")
    run.add_argument(
        "--out", required=True, help="Trace CSV path; a JSON sidecar is written next to it."
    )
    run.set_defaults(handler=command_run)

    for name, kind, text in (
        ("sweep", "nk", "Run an NK landscape sweep."),
        ("compare", "compare", "Run a budgeted real-valued comparison."),
    ):
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument("--config", required=True, help="Experiment plan (TOML).")
        sub.add_argument(
            "--out", default=None, help="Output directory. Default: [plan] output_dir."
        )
        sub.add_argument(
            "--n-jobs", type=int, default=None, help="Parallel workers. Default: [plan] n_jobs."
        )
        sub.set_defaults(handler=command_experiment, plan_kind=kind)

    stats = subparsers.add_parser("stats", help="Summaries and tests on CSV columns.")
    stats.add_argument("--a", required=True, help="First CSV file.")
    stats.add_argument("--b", default=None, help="Second CSV file (for tests).")
    stats.add_argument("--column", default="best", help="Column to read. Default: %(default)s.")
    stats.add_argument(
        "--test",
        choices=("summary", "welch", "wilcoxon"),
        default="summary",
        help="What to compute. Default: %(default)s.",
    )
    stats.add_argument(
        "--alternative",
        choices=("two-sided", "greater", "less"),
        default="two-sided",
        help="Alternative hypothesis. Default: %(default)s.",
    )
    stats.set_defaults(handler=command_stats)

    server = subparsers.add_parser(
        "eval-server", help="Serve the evaluator protocol on stdin/stdout."
    )
    server.add_argument("--mock", action="store_true", help="Use the bundled mock evaluator.")
    server.add_argument("--mode", choices=MOCK_MODES, default="constant", help="Default: %(default)s.")
    server.add_argument("--value", type=float, default=480.0, help="Constant value. Default: %(default)s.")
    server.add_argument("--dimension", type=int, default=6, help="Declared dimension. Default: %(default)s.")
    server.add_argument(
        "--crash-after",
        type=int,
        default=None,
        help="Exit abruptly after answering this many requests. Default: never.",
    )
    server.set_defaults(handler=command_eval_server)

    return parser.parse_args(argv)


def command_gen_nk(args) -> int:
    landscape = NKLandscape.generate(args.n, args.k, args.seed)
    landscape.save(args.out)
    CustomLogger.get_logger(__name__).info(
        f"Wrote NK landscape n={args.n} k={args.k} seed={args.seed} to {args.out}"
    )
    if args.print_optimum:
        genome, fitness = landscape.brute_force_optimum()
        print(f"{genome} {fitness!r}")
    return 0


def command_run(args) -> int:
    """
    Run one evolution.

    The config holds [evolution], [variation] and [objective] tables, and
    [search_space] for real-valued objectives. NK objectives name a landscape
    file (landscape_path) or generate one from landscape = [n, k, seed].
    """
    config = load_config_file(args.config)
    if "objective" not in config:
        raise ConfigurationError(f"{args.config} has no [objective] table")
    objective_spec = ObjectiveSpec.from_dict(config["objective"])
    protocol = "nk_protocol" if objective_spec.kind == "nk" else "realvalued_protocol"
    evolution = dict(config.get("evolution", {}))
    evolution["variation"] = config.get("variation", {})
    ea_config = EAConfig.from_dict(evolution, protocol)
    space = SearchSpace.from_dict(config["search_space"]) if "search_space" in config else None

    with open_objective(objective_spec, ea_config.run_seed, space=space) as objective:
        trace = Evolver(ea_config, objective).run()

    stem = args.out[:-4] if args.out.endswith(".csv") else args.out
    directory = os.path.dirname(stem)
    if directory:
        os.makedirs(directory, exist_ok=True)
    trace.save(stem, {"objective": objective_spec.to_dict()})
    CustomLogger.get_logger(__name__).info(f"Trace written to {stem}.csv")
    return 0


def command_experiment(args) -> int:
    logger = CustomLogger.get_logger(__name__)
    plan = ExperimentPlan.from_config(load_config_file(args.config), args.plan_kind)
    output_dir = args.out or plan.output_dir
    if args.n_jobs is not None:
        plan = replace(plan, n_jobs=args.n_jobs)
    report = ExperimentHarness(plan).run()
    ReportGenerator.export_report(report, output_dir)
    logger.info(f"Report written to {output_dir}")
    if not report.complete:
        logger.warning(f"{len(report.failures)} run(s) failed; incomplete cells are marked in summary.csv")
    return 0


def command_stats(args) -> int:
    xs = read_csv_column(args.a, args.column)
    if args.test == "summary":
        result = summarize(xs).to_dict()
    else:
        if args.b is None:
            raise ConfigurationError(f"--test {args.test} needs a second file (--b)")
        ys = read_csv_column(args.b, args.column)
        test = welch_t_test if args.test == "welch" else wilcoxon_signed_rank
        result = test(xs, ys, args.alternative).to_dict()
    print(json.dumps(json_safe(result), sort_keys=True, allow_nan=False))
    return 0


def command_eval_server(args) -> int:
    if not args.mock:
        raise ConfigurationError(
            "Only the bundled mock evaluator can be served; pass --mock "
            "(see docs/external_protocol.md for wiring a real simulator)"
        )
    server = MockEvaluator(
        mode=args.mode,
        value=args.value,
        dimension=args.dimension,
        crash_after=args.crash_after,
    )
    return server.serve()


def main(argv=None):
    args = parse_args(argv)
    if args.command != "eval-server":
        CustomLogger.reset_log_file()
    try:
        code = args.handler(args)
    except HDEAError as e:
        CustomLogger.get_logger(__name__).error(f"{e.category}: {e}")
        sys.exit(e.exit_code)
    sys.exit(code)


if __name__ == "__main__":
    main()
