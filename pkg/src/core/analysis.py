"""Analyzer output ingestion and the analyzer adapter contract.

Findings from any tool are normalized into `Violation` records. Adapters wrap
a concrete analyzer behind ``run(check_id, file_content=None, workspace=None)``
and must be deterministic for fixed inputs so stage-4 pruning is reproducible.

This module is also runnable as a stand-in analyzer process::

    python -m core.analysis --rules rules.toml --check no-print \
        --workspace src/ --out report.sarif
"""

from __future__ import annotations

import argparse
import json
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import AnalyzerCrashed, InvalidPattern, ParseError, SpawnError, ValidationError


@dataclass(frozen=True)
class Violation:
    """One flagged finding, anchored to a line span."""

    file: str
    start_line: int
    end_line: int
    rule_id: str
    message: str

    def __post_init__(self):
        if not (1 <= self.start_line <= self.end_line):
            raise ValidationError(
                f"bad line span {self.start_line}..{self.end_line} in {self.file}"
            )
        if not self.rule_id:
            raise ValidationError("rule_id must be nonempty")

    def sort_key(self):
        return (self.file, self.start_line, self.end_line, self.rule_id, self.message)


@dataclass
class AnalysisReport:
    """Normalized findings for one analysis target.

    `dropped` counts tool results that lacked line information and were
    skipped rather than failing the whole parse.
    """

    target: str
    violations: list[Violation] = field(default_factory=list)
    dropped: int = 0

    def normalized(self) -> "AnalysisReport":
        return AnalysisReport(
            target=self.target,
            violations=sorted(self.violations, key=Violation.sort_key),
            dropped=self.dropped,
        )


def _loads_json(data) -> dict:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8", errors="replace")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"report is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("report root must be a JSON object")
    return doc


def _strip_uri(uri: str) -> str:
    if uri.startswith("file://"):
        uri = uri[len("file://"):].lstrip("/")
    return uri


def parse_sarif_subset(data, target: str = "") -> AnalysisReport:
    """Parse the minimal SARIF 2.1.0 subset the pipeline needs.

    Reads ``runs[].results[]`` with ruleId, message.text and the first
    physical location's region. Results without a start line are dropped
    and counted in ``report.dropped``.
    """
    doc = _loads_json(data)
    if "runs" not in doc or not isinstance(doc["runs"], list):
        raise ParseError("SARIF report missing 'runs' array")
    violations = []
    dropped = 0
    for run in doc["runs"]:
        results = run.get("results", [])
        if not isinstance(results, list):
            raise ParseError("SARIF 'results' must be an array")
        for result in results:
            if "ruleId" not in result:
                raise ParseError("SARIF result missing 'ruleId'")
            message = result.get("message", {})
            if not isinstance(message, dict) or "text" not in message:
                raise ParseError("SARIF result missing 'message.text'")
            locations = result.get("locations") or []
            region = {}
            uri = ""
            if locations:
                physical = locations[0].get("physicalLocation", {})
                region = physical.get("region", {})
                uri = physical.get("artifactLocation", {}).get("uri", "")
            start = region.get("startLine")
            if start is None:
                dropped += 1
                continue
            end = region.get("endLine", start)
            violations.append(
                Violation(
                    file=_strip_uri(uri),
                    start_line=int(start),
                    end_line=int(end),
                    rule_id=result["ruleId"],
                    message=message["text"],
                )
            )
    return AnalysisReport(target=target, violations=violations, dropped=dropped).normalized()


def parse_sonar_issues(data, target: str = "") -> AnalysisReport:
    """Parse a SonarQube issues-search-style JSON subset.

    Reads ``issues[].rule``, ``.line``, ``.message`` and ``.component``
    (the part after the last ':' is taken as the file path). Issues
    without a line are dropped and counted.
    """
    doc = _loads_json(data)
    issues = doc.get("issues")
    if not isinstance(issues, list):
        raise ParseError("issues report missing 'issues' array")
    violations = []
    dropped = 0
    for issue in issues:
        if "rule" not in issue or "message" not in issue:
            raise ParseError("issue entry missing 'rule' or 'message'")
        line = issue.get("line")
        if line is None:
            dropped += 1
            continue
        component = issue.get("component", "")
        file = component.rsplit(":", 1)[-1] if component else ""
        violations.append(
            Violation(
                file=file,
                start_line=int(line),
                end_line=int(line),
                rule_id=issue["rule"],
                message=issue["message"],
            )
        )
    return AnalysisReport(target=target, violations=violations, dropped=dropped).normalized()


def serialize_report(report: AnalysisReport) -> str:
    """Internal JSON-lines format: a header record, then one violation per line."""
    lines = [json.dumps({"target": report.target, "dropped": report.dropped}, sort_keys=True)]
    for v in report.violations:
        lines.append(
            json.dumps(
                {
                    "file": v.file,
                    "start_line": v.start_line,
                    "end_line": v.end_line,
                    "rule_id": v.rule_id,
                    "message": v.message,
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def parse_report_jsonl(text) -> AnalysisReport:
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty report")
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as e:
        raise ParseError(f"bad JSON-lines report: {e}") from e
    try:
        violations = [Violation(**r) for r in records]
        return AnalysisReport(
            target=header["target"], violations=violations, dropped=header.get("dropped", 0)
        ).normalized()
    except (KeyError, TypeError) as e:
        raise ParseError(f"bad report record: {e}") from e


REPORT_PARSERS = {
    "sarif": parse_sarif_subset,
    "sonar": parse_sonar_issues,
    "jsonl": lambda data, target="": parse_report_jsonl(data),
}


@dataclass(frozen=True)
class ToyRule:
    """A line-pattern rule for the hermetic stand-in analyzer."""

    rule_id: str
    pattern: str
    message: Optional[str] = None  # template; {text} and {pattern} are substituted


def coerce_rule(rule) -> ToyRule:
    if isinstance(rule, ToyRule):
        return rule
    if isinstance(rule, dict):
        return ToyRule(rule["id"], rule["pattern"], rule.get("message"))
    return ToyRule(*rule)


def _compile_rules(rules) -> list[tuple[ToyRule, re.Pattern]]:
    compiled = []
    for rule in rules:
        rule = coerce_rule(rule)
        try:
            compiled.append((rule, re.compile(rule.pattern)))
        except re.error as e:
            raise InvalidPattern(f"rule {rule.rule_id!r}: {e}") from e
    return compiled


def toy_analyzer(rules, file_content: str, path: str = "input") -> AnalysisReport:
    """Scan content line by line; one violation per (line, rule) match."""
    compiled = _compile_rules(rules)
    violations = []
    for lineno, line in enumerate(file_content.splitlines(), start=1):
        for rule, pattern in compiled:
            if pattern.search(line):
                template = rule.message or "pattern {pattern!r} matched: {text}"
                message = template.format(
                    pattern=rule.pattern, text=line.strip(), line=lineno
                ) if "{" in template else template
                violations.append(
                    Violation(
                        file=path,
                        start_line=lineno,
                        end_line=lineno,
                        rule_id=rule.rule_id,
                        message=message,
                    )
                )
    return AnalysisReport(target=path, violations=violations).normalized()


class ToyAnalyzerAdapter:
    """In-process adapter over `toy_analyzer`. Deterministic by construction."""

    def __init__(self, rules, file_glob: str = "**/*.py"):
        self.rules = [coerce_rule(r) for r in rules]
        self.file_glob = file_glob
        _compile_rules(self.rules)  # fail fast on bad patterns

    def _rules_for(self, check_id: str):
        return [r for r in self.rules if r.rule_id == check_id]

    def run(self, check_id: str, file_content: Optional[str] = None,
            workspace=None, path: str = "input") -> AnalysisReport:
        rules = self._rules_for(check_id)
        if file_content is not None:
            report = toy_analyzer(rules, file_content, path=path)
            return AnalysisReport(target=path, violations=report.violations).normalized()
        if workspace is None:
            raise ValidationError("adapter.run needs file_content or workspace")
        workspace = Path(workspace)
        violations = []
        for file in sorted(workspace.glob(self.file_glob)):
            if not file.is_file():
                continue
            rel = file.relative_to(workspace).as_posix()
            content = file.read_text(encoding="utf-8", errors="replace")
            violations.extend(toy_analyzer(rules, content, path=rel).violations)
        return AnalysisReport(target=str(workspace), violations=violations).normalized()


class CommandAnalyzerAdapter:
    """Adapter that spawns an external analyzer command per invocation.

    The command template must contain ``{check}``, ``{workspace}`` and
    ``{out}`` placeholders; the process is expected to write its report to
    the ``{out}`` path in `report_format`.
    """

    def __init__(self, command_template: str, report_format: str = "sarif"):
        if report_format not in REPORT_PARSERS:
            raise ValidationError(f"unknown report format {report_format!r}")
        for placeholder in ("{check}", "{workspace}", "{out}"):
            if placeholder not in command_template:
                raise ValidationError(f"command template missing {placeholder}")
        self.command_template = command_template
        self.report_format = report_format

    def run(self, check_id: str, file_content: Optional[str] = None,
            workspace=None, path: str = "input") -> AnalysisReport:
        if file_content is not None:
            with tempfile.TemporaryDirectory(prefix="core-analyze-") as tmp:
                target = Path(tmp) / path
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(file_content, encoding="utf-8")
                return self._run_on_workspace(check_id, tmp)
        if workspace is None:
            raise ValidationError("adapter.run needs file_content or workspace")
        return self._run_on_workspace(check_id, workspace)

    def _run_on_workspace(self, check_id: str, workspace) -> AnalysisReport:
        workspace = Path(workspace)
        with tempfile.TemporaryDirectory(prefix="core-report-") as tmp:
            out_path = Path(tmp) / "report.out"
            command = (
                self.command_template
                .replace("{check}", check_id)
                .replace("{workspace}", str(workspace))
                .replace("{out}", str(out_path))
            )
            try:
                proc = subprocess.run(
                    shlex.split(command), capture_output=True, text=True
                )
            except FileNotFoundError as e:
                raise SpawnError(f"cannot spawn analyzer: {e}") from e
            if not out_path.exists():
                if proc.returncode != 0:
                    raise AnalyzerCrashed(
                        f"analyzer exited {proc.returncode} with no report: "
                        f"{proc.stderr.strip()[:500]}"
                    )
                return AnalysisReport(target=str(workspace)).normalized()
            parser = REPORT_PARSERS[self.report_format]
            report = parser(out_path.read_bytes(), target=str(workspace))
            kept = [v for v in report.violations if v.rule_id == check_id]
            return AnalysisReport(
                target=report.target, violations=kept, dropped=report.dropped
            ).normalized()


def run_external_analyzer(command_template: str, check_id: str, workspace,
                          report_format: str = "sarif") -> AnalysisReport:
    """One-shot convenience over `CommandAnalyzerAdapter`."""
    adapter = CommandAnalyzerAdapter(command_template, report_format=report_format)
    return adapter.run(check_id, workspace=workspace)


def report_to_sarif(report: AnalysisReport) -> str:
    """Render a report in the SARIF subset this module parses."""
    results = [
        {
            "ruleId": v.rule_id,
            "message": {"text": v.message},
            "locations": [
                {
                    "physicalLocation": {
                        "artifactLocation": {"uri": v.file},
                        "region": {"startLine": v.start_line, "endLine": v.end_line},
                    }
                }
            ],
        }
        for v in report.violations
    ]
    doc = {
        "version": "2.1.0",
        "runs": [{"tool": {"driver": {"name": "core-toy-analyzer"}}, "results": results}],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_toy_rules(path) -> list[ToyRule]:
    """Read ``[[rule]]`` tables (id, pattern, optional message) from TOML."""
    try:
        doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"rules file is not valid TOML: {e}") from e
    rules = []
    for table in doc.get("rule", []):
        if "id" not in table or "pattern" not in table:
            raise ParseError("rule table needs 'id' and 'pattern'")
        rules.append(ToyRule(table["id"], table["pattern"], table.get("message")))
    return rules


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="core.analysis", description="Toy line-pattern analyzer (hermetic stand-in)"
    )
    parser.add_argument("--rules", required=True, help="TOML file with [[rule]] tables")
    parser.add_argument("--check", required=True, help="rule id to run")
    parser.add_argument("--workspace", required=True)
    parser.add_argument("--out", required=True, help="where to write the SARIF report")
    parser.add_argument("--glob", default="**/*.py")
    args = parser.parse_args(argv)

    adapter = ToyAnalyzerAdapter(load_toy_rules(args.rules), file_glob=args.glob)
    report = adapter.run(args.check, workspace=args.workspace)
    Path(args.out).write_text(report_to_sarif(report), encoding="utf-8")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
