# coding:utf-8
"""
Report rendering: aligned text, markdown, HTML (markdown2) and JSON.

Rows follow the comparison-table order: Validity, Proximity, Prediction gain,
Proximity score, Accuracy. One column per report, optionally followed by the
published reference columns of the same dataset.
"""
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import markdown2

from ..common.exception_handler import DataError
from ..services.metrics_service import METRIC_ORDER, METRIC_TITLES, MetricsReport, reference_for

FORMATS = ("text", "markdown", "html", "json")
ROWS = METRIC_ORDER + ("accuracy",)

_REFERENCE_TITLES = {"vcnet": "VCNet (published)", "counternet": "CounterNet (published)",
                     "posthoc": "Post-hoc (published)"}


def load_reports(path) -> List[MetricsReport]:
    """ a single report.json or a paired_report.json """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"report file does not exist: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"report file {path} is not valid JSON: {e}") from e

    if isinstance(data, dict) and "metrics" in data:
        return [MetricsReport.from_dict(data)]
    if isinstance(data, dict) and "joint" in data and "posthoc" in data:
        return [MetricsReport.from_dict(data["joint"]), MetricsReport.from_dict(data["posthoc"])]
    raise DataError(f"{path} is neither a metrics report nor a paired report")


def _cell(report: MetricsReport, row: str) -> str:
    if row == "accuracy":
        return "-" if report.accuracy is None else f"{report.accuracy:.2f}"
    summary = report.metrics.get(row)
    if summary is None:
        return "-"
    if row == "validity":
        return f"{summary.mean:.2f}"
    return f"{summary.mean:.2f} ± {summary.std:.2f}"


def _referenceCell(value: Tuple[float, Optional[float]]) -> str:
    mean, std = value
    return f"{mean:.2f}" if std is None else f"{mean:.2f} ± {std:.2f}"


def table(reports: Sequence[MetricsReport], reference: bool = False) -> Tuple[List[str], List[List[str]]]:
    """ header and body rows shared by every format """
    header = ["Metric"] + [r.method for r in reports]
    body = [[METRIC_TITLES[row]] + [_cell(r, row) for r in reports] for row in ROWS]

    published = reference_for(reports[0].dataset) if reference and reports else None
    if published:
        for method, values in published.items():
            header.append(_REFERENCE_TITLES[method])
            for line, row in zip(body, ROWS):
                line.append(_referenceCell(values[row]))
    return header, body


def _footer(reports: Sequence[MetricsReport]) -> List[str]:
    lines = []
    for r in reports:
        lines.append(f"{r.method}: n={r.sample_size}, seed={r.seed}"
                     + (f", {r.excluded_proximity_score} excluded from proximity score"
                        if r.excluded_proximity_score else ""))
    notes = sorted({note for r in reports for note in r.notes})
    return lines + [f"note: {note}" for note in notes]


def render_text(reports: Sequence[MetricsReport], reference: bool = False) -> str:
    header, body = table(reports, reference)
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]

    def fmt(line):
        return "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(line, widths)))

    rule = "-" * len(fmt(header))
    title = f"Dataset: {reports[0].dataset}"
    return "\n".join([title, rule, fmt(header), rule] + [fmt(line) for line in body] + [rule] + _footer(reports))


def render_markdown(reports: Sequence[MetricsReport], reference: bool = False) -> str:
    header, body = table(reports, reference)
    lines = [f"## {reports[0].dataset}", "",
             "| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] + ["---:"] * (len(header) - 1)) + "|"]
    lines += ["| " + " | ".join(line) + " |" for line in body]
    lines += [""] + [f"- {line}" for line in _footer(reports)]
    return "\n".join(lines) + "\n"


def render_html(reports: Sequence[MetricsReport], reference: bool = False) -> str:
    return markdown2.markdown(render_markdown(reports, reference), extras=["tables"])


def render_json(reports: Sequence[MetricsReport]) -> str:
    data: Dict = reports[0].to_dict() if len(reports) == 1 else {r.method: r.to_dict() for r in reports}
    return json.dumps(data, indent=2, ensure_ascii=False)


def render(reports: Sequence[MetricsReport], fmt: str = "text", reference: bool = False) -> str:
    if fmt == "text":
        return render_text(reports, reference)
    if fmt == "markdown":
        return render_markdown(reports, reference)
    if fmt == "html":
        return render_html(reports, reference)
    if fmt == "json":
        return render_json(reports)
    raise ValueError(f"unknown report format '{fmt}'")
