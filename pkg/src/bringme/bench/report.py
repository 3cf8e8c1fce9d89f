"""CSV and markdown rendering of experiment records."""

from __future__ import annotations

import csv
import io
import math
from itertools import combinations
from typing import Sequence

from ..resolve import APPROACHES, SITUATIONS
from .runner import MetricsRecord
from .stats import SummaryCell, significance, stars, summarize

CSV_HEADER = (
    "approach", "situation", "command", "rep", "success", "time_s",
    "inquiries", "visits", "llm_calls", "llm_time_s", "tokens",
)
FORMATS = ("csv", "markdown")

CORE_METRICS = {
    "success": "Task completion rate",
    "time_s": "Task completion time [s]",
    "inquiries": "Number of inquiries to the user",
    "visits": "Number of visited furniture",
}
SITUATION_TITLES = {"without_defaults": "without default location", "with_defaults": "with default location"}


class ReportError(ValueError):
    pass


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_csv(records: Sequence[MetricsRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([
            r.approach, r.situation, r.command, r.rep, int(r.success), _fmt(r.time_s),
            r.inquiries, r.visits, r.llm_calls, _fmt(r.llm_time_s), r.tokens,
        ])
    return buf.getvalue()


def read_csv(text: str) -> list[MetricsRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ReportError(f"unexpected CSV header {reader.fieldnames}")
    return [
        MetricsRecord(
            approach=row["approach"],
            situation=row["situation"],
            command=row["command"],
            rep=int(row["rep"]),
            success=row["success"] == "1",
            time_s=float(row["time_s"]),
            inquiries=int(row["inquiries"]),
            visits=int(row["visits"]),
            llm_calls=int(row["llm_calls"]),
            llm_time_s=float(row["llm_time_s"]),
            tokens=int(row["tokens"]),
        )
        for row in reader
    ]


def _ordered(present: set[str], canonical: Sequence[str]) -> list[str]:
    return [x for x in canonical if x in present] + sorted(present - set(canonical))


def _cell(cell: SummaryCell | None, pct: bool = False, field: str = "mean") -> str:
    if cell is None:
        return "-"
    value = getattr(cell, field)
    if math.isnan(value):
        return "-"
    return f"{100 * value:.1f}%" if pct else f"{value:.2f}"


def _grid_table(records, metric: str, approaches, situations, success_only=False) -> list[str]:
    cells = summarize(records, metric, success_only=success_only)
    cols = [(s, a) for s in situations for a in approaches]
    lines = [
        "| | " + " | ".join(f"{a} ({SITUATION_TITLES.get(s, s)})" for s, a in cols) + " |",
        "|---" * (len(cols) + 1) + "|",
    ]
    pct = metric == "success"
    lines.append("| Mean | " + " | ".join(_cell(cells.get((a, s)), pct) for s, a in cols) + " |")
    if not pct:
        lines.append("| SD | " + " | ".join(_cell(cells.get((a, s)), field="sd") for s, a in cols) + " |")
    lines.append("| n | " + " | ".join(str(cells[(a, s)].n) if (a, s) in cells else "0" for s, a in cols) + " |")
    return lines


def _time_by_verb(records, approaches, situations) -> list[str]:
    cells = summarize(records, "time_s", by=("verb", "approach", "situation"), success_only=True)
    verbs = _ordered({r.verb for r in records}, ["Find", "Take", "Bring"])
    cols = [(s, a) for s in situations for a in approaches]
    lines = [
        "| | " + " | ".join(f"{a} ({SITUATION_TITLES.get(s, s)})" for s, a in cols) + " |",
        "|---" * (len(cols) + 1) + "|",
    ]
    for v in verbs:
        lines.append(f"| {v} | " + " | ".join(_cell(cells.get((v, a, s))) for s, a in cols) + " |")
    return lines


def _execution_cost(records, approaches, situations) -> list[str]:
    llm_approaches = [a for a in approaches if APPROACHES.get(a, (True,))[0]]
    cols = [(s, a) for s in situations for a in llm_approaches]
    if not cols:
        return ["No model-backed approaches in this run."]
    llm_time = summarize(records, "llm_time_s")
    calls = summarize(records, "llm_calls")
    tokens = summarize(records, "tokens")
    lines = [
        "| | " + " | ".join(f"{a} ({SITUATION_TITLES.get(s, s)})" for s, a in cols) + " |",
        "|---" * (len(cols) + 1) + "|",
    ]

    def per_output(key):
        if key not in calls or calls[key].mean == 0:
            return "-"
        return f"{llm_time[key].mean / calls[key].mean:.2f}"

    def per_call_tokens(key):
        if key not in calls or calls[key].mean == 0:
            return "-"
        return f"{tokens[key].mean / calls[key].mean:.1f}"

    keys = [(a, s) for s, a in cols]
    lines.append("| Time for list generation [s] | " + " | ".join(_cell(llm_time.get(k)) for k in keys) + " |")
    lines.append("| Number of inquiries to LLM | " + " | ".join(_cell(calls.get(k)) for k in keys) + " |")
    lines.append("| Time for each LLM output [s] | " + " | ".join(per_output(k) for k in keys) + " |")
    lines.append("| Generated tokens per episode | " + " | ".join(_cell(tokens.get(k)) for k in keys) + " |")
    lines.append("| Generated tokens per LLM output | " + " | ".join(per_call_tokens(k) for k in keys) + " |")
    return lines


def _significance(records, approaches, situations) -> list[str]:
    lines = ["| Metric | Situation | A | B | p | |", "|---|---|---|---|---|---|"]
    for metric in ("inquiries", "visits"):
        for s in situations:
            for a, b in combinations(approaches, 2):
                p = significance(records, (a, s), (b, s), metric)
                shown = "-" if p is None else f"{p:.4f}"
                lines.append(f"| {metric} | {s} | {a} | {b} | {shown} | {stars(p)} |")
    return lines


def render_markdown(records: Sequence[MetricsRecord]) -> str:
    approaches = _ordered({r.approach for r in records}, list(APPROACHES))
    situations = _ordered({r.situation for r in records}, list(SITUATIONS))
    commands = list(dict.fromkeys(r.command for r in records))
    out = [
        "# Fetch-task experiment report",
        "",
        f"{len(records)} episodes; {len(commands)} distinct commands; "
        f"approaches: {', '.join(approaches)}.",
        "",
    ]
    for metric, title in CORE_METRICS.items():
        out += [f"## {title}", ""]
        out += _grid_table(records, metric, approaches, situations, success_only=(metric == "time_s"))
        if metric == "time_s":
            out += ["", "Successful episodes only."]
        out.append("")
    out += ["## Task completion time by command type [s]", "", "Successful episodes only.", ""]
    out += _time_by_verb(records, approaches, situations)
    out += ["", "## Execution cost", ""]
    out += _execution_cost(records, approaches, situations)
    out += [
        "",
        "## Significance",
        "",
        "Two-sided Mann-Whitney U test (exact for pooled n <= 50, normal approximation otherwise). "
        "*: p < 0.05, **: p < 0.01.",
        "",
    ]
    out += _significance(records, approaches, situations)
    out.append("")
    return "\n".join(out)


def emit_report(records: Sequence[MetricsRecord], fmt: str = "csv") -> str:
    if fmt not in FORMATS:
        raise ReportError(f"unknown report format {fmt!r}; choose from {FORMATS}")
    if not records:
        raise ReportError("no records to report")
    if fmt == "csv":
        return write_csv(records)
    return render_markdown(records)
