import os

from jinja2 import Template

from hdea.ExperimentHarness import ComparisonReport
from hdea.errors import ConfigurationError
from hdea.utils import write_csv, write_json

SUMMARY_HEADER = (
    "cell", "algorithm", "runs", "expected_runs", "complete",
    "mean", "sd", "min", "max", "mean_final_mean", "evaluations", "monotone",
)
SIGNIFICANCE_HEADER = (
    "cell", "algorithm", "baseline", "test", "method",
    "statistic", "p_value", "effect", "df", "n",
)
CURVES_HEADER = (
    "cell", "algorithm", "generation", "runs",
    "best_mean", "best_lower", "best_upper",
    "mean_mean", "mean_lower", "mean_upper",
)
FAILURES_HEADER = ("run", "error")


def _flag(value: bool) -> str:
    return "true" if value else "false"


class ReportGenerator:
    HTML_TEMPLATE = """
    <!DOCTYPE html>
    <html lang="en">
    <head>
        <meta charset="UTF-8">
        <meta name="viewport" content="width=device-width, initial-scale=1.0">
        <title>{{ plan.name }}</title>
        <style>
            body {
                font-family: 'Segoe UI', Tahoma, Geneva, Verdana, sans-serif;
                margin: 20px;
            }
            table {
                border-collapse: collapse;
                width: 100%;
                margin-bottom: 24px;
                box-shadow: 0 2px 3px rgba(0,0,0,0.1);
            }
            th, td {
                border: 1px solid #ddd;
                text-align: left;
                padding: 8px;
            }
            th {
                background-color: #f2f2f2;
            }
            tr:nth-child(even) {
                background-color: #f9f9f9;
            }
            .status-complete {
                color: green;
            }
            .status-incomplete {
                color: red;
            }
            .significant {
                font-weight: bold;
            }
        </style>
    </head>
    <body>
        <h1>{{ plan.name }}</h1>
        <p>{{ plan.kind }} plan, {{ plan.total_runs }} runs, objective direction: {{ plan.direction }}</p>
        <h2>Final best fitness</h2>
        <table>
            <tr>
                <th>Cell</th>
                <th>Algorithm</th>
                <th>Runs</th>
                <th>Mean</th>
                <th>Min</th>
                <th>Max</th>
                <th>Evaluations per run</th>
                <th>Status</th>
            </tr>
            {% for cell in report.cells %}
            <tr>
                <td>{{ cell.cell }}</td>
                <td>{{ cell.algorithm }}</td>
                <td>{{ cell.runs }} / {{ cell.expected_runs }}</td>
                <td>{{ "%.6g"|format(cell.mean) }}</td>
                <td>{{ "%.6g"|format(cell.min) }}</td>
                <td>{{ "%.6g"|format(cell.max) }}</td>
                <td>{{ cell.evaluations if cell.evaluations is not none else "mismatch" }}</td>
                {% if cell.complete %}
                <td class="status-complete">complete</td>
                {% else %}
                <td class="status-incomplete">incomplete</td>
                {% endif %}
            </tr>
            {% endfor %}
        </table>
        <h2>Significance against {{ baseline }}</h2>
        <table>
            <tr>
                <th>Cell</th>
                <th>Algorithm</th>
                <th>Test</th>
                <th>Statistic</th>
                <th>p</th>
                <th>Effect</th>
            </tr>
            {% for row in report.significance %}
            <tr{% if row.result.p_value < 0.05 %} class="significant"{% endif %}>
                <td>{{ row.cell }}</td>
                <td>{{ row.algorithm }}</td>
                <td>{{ row.test }}</td>
                <td>{{ "%.6g"|format(row.result.statistic) }}</td>
                <td>{{ "%.4g"|format(row.result.p_value) }}</td>
                <td>{{ "%.6g"|format(row.result.effect) }}</td>
            </tr>
            {% endfor %}
        </table>
        {% if report.failures %}
        <h2>Failed runs</h2>
        <table>
            <tr>
                <th>Run</th>
                <th>Error</th>
            </tr>
            {% for label, error in report.failures %}
            <tr>
                <td>{{ label }}</td>
                <td><pre>{{ error }}</pre></td>
            </tr>
            {% endfor %}
        </table>
        {% endif %}
    </body>
    </html>
    """

    @classmethod
    def generate_report(cls, report: ComparisonReport, file_path: str):
        """
        Renders the HTML overview of a comparison report and writes it to a file.

        :param report: The ComparisonReport to render.
        :param file_path: Path to the HTML file where the report will be written.
        """
        template = Template(cls.HTML_TEMPLATE)
        html_content = template.render(report=report, plan=report.plan, baseline="baseline")

        with open(file_path, "w", newline="") as file:
            file.write(html_content)

    @classmethod
    def export_report(cls, report: ComparisonReport, directory: str) -> dict:
        """
        Write every artifact of a report under `directory`.

        Files: summary.csv, significance.csv, curves.csv, failures.csv,
        plan.json, report.html, best_parameters.csv for compare plans, and
        traces/<label>.csv plus a .json sidecar for every kept trace. Names
        depend only on the plan and the output holds no timestamps, so
        exporting the same report twice yields identical bytes.

        Returns:
            dict: Artifact name to path.
        """
        traces_dir = os.path.join(directory, "traces")
        try:
            os.makedirs(traces_dir, exist_ok=True)
        except OSError as e:
            raise ConfigurationError(f"Cannot create report directory {directory}: {e}") from e

        paths = {
            name: os.path.join(directory, name)
            for name in (
                "summary.csv", "significance.csv", "curves.csv", "failures.csv",
                "plan.json", "report.html",
            )
        }
        try:
            cls._write_summary(report, paths["summary.csv"])
            cls._write_significance(report, paths["significance.csv"])
            cls._write_curves(report, paths["curves.csv"])
            write_csv(paths["failures.csv"], FAILURES_HEADER, report.failures)
            write_json(paths["plan.json"], report.plan.to_dict())
            if report.plan.kind == "compare":
                paths["best_parameters.csv"] = os.path.join(directory, "best_parameters.csv")
                cls._write_best_parameters(report, paths["best_parameters.csv"])
            for label in sorted(report.traces):
                stem = os.path.join(traces_dir, label)
                report.traces[label].save(stem, {"label": label, "plan": report.plan.name})
                paths[f"traces/{label}"] = stem
            cls.generate_report(report, paths["report.html"])
        except OSError as e:
            raise ConfigurationError(f"Cannot write report to {directory}: {e}") from e
        return paths

    @staticmethod
    def _write_summary(report: ComparisonReport, path: str):
        rows = (
            (
                c.cell, c.algorithm, c.runs, c.expected_runs, _flag(c.complete),
                c.mean, c.sd, c.min, c.max, c.mean_final_mean,
                "" if c.evaluations is None else c.evaluations, _flag(c.monotone),
            )
            for c in report.cells
        )
        write_csv(path, SUMMARY_HEADER, rows)

    @staticmethod
    def _write_significance(report: ComparisonReport, path: str):
        rows = (
            (
                row.cell, row.algorithm, row.baseline, row.test, row.result.method,
                float(row.result.statistic), float(row.result.p_value), float(row.result.effect),
                row.result.df, "" if row.result.n is None else row.result.n,
            )
            for row in report.significance
        )
        write_csv(path, SIGNIFICANCE_HEADER, rows)

    @staticmethod
    def _write_curves(report: ComparisonReport, path: str):
        def rows():
            for curve in report.curves:
                for i, generation in enumerate(curve.generations):
                    yield (
                        curve.cell, curve.algorithm, int(generation), curve.best.n,
                        float(curve.best.mean[i]), float(curve.best.lower[i]), float(curve.best.upper[i]),
                        float(curve.mean.mean[i]), float(curve.mean.lower[i]), float(curve.mean.upper[i]),
                    )

        write_csv(path, CURVES_HEADER, rows())

    @staticmethod
    def _write_best_parameters(report: ComparisonReport, path: str):
        names = list(report.plan.search_space.names) if report.plan.search_space else []
        header = ["run", "algorithm", "raw"] + names + [f"{name}_normalized" for name in names]
        rows = (
            [row.run, row.algorithm, row.raw] + list(row.values) + list(row.normalized)
            for row in report.best_parameters
        )
        write_csv(path, header, rows)


def export_report(report: ComparisonReport, directory: str) -> dict:
    return ReportGenerator.export_report(report, directory)

