"""Run metrics and report emission.

Counts are stored raw; averages and percentages are derived at formatting
time (two decimals, percentages relative to the number of flagged files).
The JSON form round-trips losslessly so downstream tooling can re-render.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ParseError

SCHEMA_VERSION = 1
NO_VALUE = "–"  # en dash for undefined ratios

NO_PASSING = "no_passing_candidate"
FILE_ERROR = "error"


@dataclass
class CheckMetrics:
    check_id: str
    files_flagged: int = 0
    issues_flagged: int = 0
    files_passing_static: int = 0
    issues_remaining: int = 0
    files_ranked_high: int = 0
    files_ranked_low: int = 0

    def add(self, other: "CheckMetrics") -> None:
        self.files_flagged += other.files_flagged
        self.issues_flagged += other.issues_flagged
        self.files_passing_static += other.files_passing_static
        self.issues_remaining += other.issues_remaining
        self.files_ranked_high += other.files_ranked_high
        self.files_ranked_low += other.files_ranked_low


def fmt_ratio(numerator: int, denominator: int) -> str:
    if denominator == 0:
        return NO_VALUE
    return f"{numerator / denominator:.2f}"


def fmt_percent(numerator: int, denominator: int) -> str:
    if denominator == 0:
        return NO_VALUE
    return f"{100.0 * numerator / denominator:.2f}%"


def fmt_count_with_ratio(count: int, denominator: int) -> str:
    return f"{count} ({fmt_ratio(count, denominator)})"


def fmt_count_with_percent(count: int, denominator: int) -> str:
    return f"{count} ({fmt_percent(count, denominator)})"


def metrics_cells(m: CheckMetrics) -> dict[str, str]:
    """The six derived presentation cells for one metrics row."""
    return {
        "files_flagged": str(m.files_flagged),
        "issues_flagged": fmt_count_with_ratio(m.issues_flagged, m.files_flagged),
        "files_passing_static": fmt_count_with_percent(m.files_passing_static, m.files_flagged),
        "issues_remaining": fmt_count_with_ratio(m.issues_remaining, m.files_flagged),
        "files_ranked_high": fmt_count_with_percent(m.files_ranked_high, m.files_flagged),
        "files_ranked_low": fmt_count_with_percent(m.files_ranked_low, m.files_flagged),
    }


@dataclass
class FileDetail:
    file: str
    check_id: str
    issues_flagged: int
    candidates_total: int = 0
    candidates_screened: int = 0
    candidates_passed: int = 0
    violations_remaining: int = 0
    classification: Optional[str] = None  # ranked_high / ranked_low / no_passing_candidate / error
    best_patch: Optional[str] = None
    scores: list[int] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class PipelineReport:
    checks: list[CheckMetrics] = field(default_factory=list)
    files: list[FileDetail] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def aggregate(self) -> CheckMetrics:
        total = CheckMetrics(check_id="aggregate")
        for row in self.checks:
            total.add(row)
        return total

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "checks": [asdict(c) for c in self.checks],
            "aggregate": asdict(self.aggregate),
            "files": [asdict(f) for f in self.files],
            "errors": list(self.errors),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineReport":
        try:
            checks = [CheckMetrics(**c) for c in doc["checks"]]
            files = [FileDetail(**f) for f in doc["files"]]
            return cls(
                checks=checks,
                files=files,
                errors=list(doc.get("errors", [])),
                schema_version=doc.get("schema_version", SCHEMA_VERSION),
            )
        except (KeyError, TypeError) as e:
            raise ParseError(f"bad report document: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "PipelineReport":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"report is not valid JSON: {e}") from e
        return cls.from_dict(doc)


MD_HEADERS = [
    "Check",
    "#Files flagged",
    "#Issues flagged (Avg. per file)",
    "#Files passing static checks (%)",
    "#Issues remaining (Avg. per file)",
    "#Files ranked high (%)",
    "#Files ranked low (%)",
]


def _md_row(label: str, m: CheckMetrics) -> str:
    cells = metrics_cells(m)
    return "| " + " | ".join(
        [
            label,
            cells["files_flagged"],
            cells["issues_flagged"],
            cells["files_passing_static"],
            cells["issues_remaining"],
            cells["files_ranked_high"],
            cells["files_ranked_low"],
        ]
    ) + " |"


def render_markdown(report: PipelineReport) -> str:
    lines = [
        "| " + " | ".join(MD_HEADERS) + " |",
        "|" + "|".join(["---"] + ["---:"] * (len(MD_HEADERS) - 1)) + "|",
    ]
    for row in report.checks:
        lines.append(_md_row(row.check_id, row))
    if len(report.checks) != 1:
        lines.append(_md_row("aggregate", report.aggregate))
    return "\n".join(lines) + "\n"


def emit_report(report: PipelineReport, out_dir, formats=("json", "md")) -> dict[str, Path]:
    """Write the machine-readable and human-readable report files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(report.to_json(), encoding="utf-8")
        written["json"] = path
    if "md" in formats:
        path = out_dir / "report.md"
        path.write_text(render_markdown(report), encoding="utf-8")
        written["md"] = path
    return written
