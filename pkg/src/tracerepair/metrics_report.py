"""Evaluation quantities and result tables.

Repair rate is always computed over failed traces only; accuracy deltas
come from raw counts; binomial uncertainty uses Wilson score intervals.
Reports render as full-precision CSV (round-trippable) plus a markdown
table per corpus for humans.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Mapping

from .crs_engine import TraceScoring

METHOD_ORDER = ("direct", "self_refine", "self_reflection", "causal_repair")


@dataclass(frozen=True)
class RunSummary:
    label: str
    method: str
    total: int
    passed: int
    failed: int
    repaired: int
    minimality_mean: float | None = None
    crs_precision: float | None = None
    consensus_rate: float | None = None

    def __post_init__(self) -> None:
        if self.passed + self.failed != self.total:
            raise ValueError("passed + failed must equal total")
        if not 0 <= self.repaired <= self.failed:
            raise ValueError("repaired must be within 0..failed")

    @property
    def repair_rate(self) -> float:
        return 0.0 if self.failed == 0 else self.repaired / self.failed

    @property
    def accuracy_before(self) -> float:
        return self.passed / self.total

    @property
    def accuracy_after(self) -> float:
        return (self.passed + self.repaired) / self.total

    @property
    def delta(self) -> float:
        return self.accuracy_after - self.accuracy_before


def repair_rate(failed: int, repaired: int) -> float:
    """Fraction of failed traces converted to success."""
    if failed <= 0:
        raise ValueError("repair rate is undefined with no failed traces")
    if not 0 <= repaired <= failed:
        raise ValueError("repaired must be within 0..failed")
    return repaired / failed


def accuracy_delta(total: int, passed_before: int, repaired: int) -> tuple[float, float, float]:
    """(before, after, delta) task accuracy from raw counts.

    ``repaired`` is the net change in passing traces, so refinement methods
    that break previously-correct answers may pass a negative value.
    """
    if total <= 0:
        raise ValueError("total must be positive")
    if not 0 <= passed_before <= total:
        raise ValueError("passed_before out of range")
    if not 0 <= passed_before + repaired <= total:
        raise ValueError("counts inconsistent: passed_before + repaired out of range")
    before = passed_before / total
    after = (passed_before + repaired) / total
    return before, after, after - before


def crs_precision(
    scorings: Iterable[TraceScoring],
    flag_source: str = "crs",
) -> float:
    """Fraction of flagged steps admitting a validated outcome-flipping intervention.

    flag_source="crs" flags exactly the steps the interventional score
    already validated, so the value is 1 by construction; it exists for
    symmetry.  flag_source="attribution_prompt" reads each scoring's
    ``flagged_steps`` (prompt-driven attribution), whose flags can miss.
    """
    flagged = 0
    validated = 0
    for scoring in scorings:
        by_index = {s.step_index: s for s in scoring.scores}
        if flag_source == "crs":
            flags = [s.step_index for s in scoring.scores if s.crs == 1]
        elif flag_source == "attribution_prompt":
            flags = list(scoring.flagged_steps or [])
        else:
            raise ValueError(f"unknown flag_source {flag_source!r}")
        for i in flags:
            flagged += 1
            score = by_index.get(i)
            if score is not None and score.successful_interventions:
                validated += 1
    if flagged == 0:
        raise ValueError("no flagged steps; precision undefined")
    return validated / flagged


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= successes <= n:
        raise ValueError("successes out of range")
    z = NormalDist().inv_cdf((1.0 + confidence) / 2.0)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    margin = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - margin)
    high = 1.0 if successes == n else min(1.0, center + margin)
    return low, high


# ---------------------------------------------------------------------------
# Report rendering

_CSV_FIELDS = (
    "label", "method", "total", "passed", "failed", "repaired",
    "repair_rate", "accuracy_before", "accuracy_after", "delta",
    "minimality_mean", "crs_precision", "consensus_rate",
)

_ABSENT = "—"  # rendered for missing optional cells


@dataclass(frozen=True)
class Report:
    csv_text: str
    markdown: str


def _method_key(method: str) -> tuple[int, str]:
    try:
        return (METHOD_ORDER.index(method), method)
    except ValueError:
        return (len(METHOD_ORDER), method)


def _fmt_pct(value: float) -> str:
    return f"{100.0 * value:.1f}"


def _fmt_opt(value: float | None, digits: int = 2) -> str:
    return _ABSENT if value is None else f"{value:.{digits}f}"


def render_report(
    summaries: list[RunSummary],
    judge_precision: Mapping[str, float] | None = None,
) -> Report:
    """Render summaries as (CSV, markdown).

    The CSV keeps full float precision and round-trips through
    :func:`parse_report_csv`; the markdown shows one table per label with
    percentages at one decimal place.  When a judge-precision audit is
    supplied, an adjusted repair-rate column (rate x precision) is added.
    """
    if not summaries:
        raise ValueError("need at least one summary")
    ordered = sorted(summaries, key=lambda s: (s.label, _method_key(s.method)))

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for s in ordered:
        writer.writerow(
            {
                "label": s.label,
                "method": s.method,
                "total": s.total,
                "passed": s.passed,
                "failed": s.failed,
                "repaired": s.repaired,
                "repair_rate": repr(s.repair_rate),
                "accuracy_before": repr(s.accuracy_before),
                "accuracy_after": repr(s.accuracy_after),
                "delta": repr(s.delta),
                "minimality_mean": "" if s.minimality_mean is None else repr(s.minimality_mean),
                "crs_precision": "" if s.crs_precision is None else repr(s.crs_precision),
                "consensus_rate": "" if s.consensus_rate is None else repr(s.consensus_rate),
            }
        )

    lines: list[str] = []
    adjusted = judge_precision or {}
    for label in sorted({s.label for s in ordered}):
        rows = [s for s in ordered if s.label == label]
        lines.append(f"## {label}")
        lines.append("")
        header = "| Method | Total | Pass | Fail | Repairs (%) | Min. | Before | After | Delta |"
        sep = "|---|---|---|---|---|---|---|---|---|"
        if label in adjusted:
            header += " Adj. Rate |"
            sep += "---|"
        lines.append(header)
        lines.append(sep)
        for s in rows:
            cells = [
                s.method,
                str(s.total),
                str(s.passed),
                str(s.failed),
                f"{s.repaired} ({_fmt_pct(s.repair_rate)})",
                _fmt_opt(s.minimality_mean),
                f"{s.accuracy_before:.3f}",
                f"{s.accuracy_after:.3f}",
                f"{s.delta:+.3f}",
            ]
            if label in adjusted:
                cells.append(_fmt_pct(s.repair_rate * adjusted[label]))
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
    return Report(csv_text=buf.getvalue(), markdown="\n".join(lines))


def parse_report_csv(text: str) -> list[RunSummary]:
    """Recover summaries from the CSV side of a report."""
    out: list[RunSummary] = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            RunSummary(
                label=row["label"],
                method=row["method"],
                total=int(row["total"]),
                passed=int(row["passed"]),
                failed=int(row["failed"]),
                repaired=int(row["repaired"]),
                minimality_mean=float(row["minimality_mean"]) if row["minimality_mean"] else None,
                crs_precision=float(row["crs_precision"]) if row["crs_precision"] else None,
                consensus_rate=float(row["consensus_rate"]) if row["consensus_rate"] else None,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Published reference counts (regression fixture)


@dataclass(frozen=True)
class ReferenceRow:
    label: str
    method: str
    total: int
    passed: int
    failed: int
    repaired: int
    net_repaired: int
    printed_rate_pct: float
    printed_before: float
    printed_after: float
    printed_delta: float
    printed_minimality: float


def load_reference_counts(path: str | Path | None = None) -> list[ReferenceRow]:
    """Rows of the shipped reference-counts fixture (published benchmark results)."""
    if path is None:
        text = resources.files("tracerepair").joinpath("data", "reference_counts.csv").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    rows = []
    for row in csv.DictReader(io.StringIO("\n".join(lines))):
        rows.append(
            ReferenceRow(
                label=row["label"],
                method=row["method"],
                total=int(row["total"]),
                passed=int(row["passed"]),
                failed=int(row["failed"]),
                repaired=int(row["repaired"]),
                net_repaired=int(row["net_repaired"]),
                printed_rate_pct=float(row["printed_rate_pct"]),
                printed_before=float(row["printed_before"]),
                printed_after=float(row["printed_after"]),
                printed_delta=float(row["printed_delta"]),
                printed_minimality=float(row["printed_minimality"]),
            )
        )
    return rows
