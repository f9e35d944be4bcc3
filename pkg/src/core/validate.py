"""Stage-4 pruning: re-run the configured check against each candidate.

A candidate passes only when the analyzer reports zero violations of the
configured check in the revised file. Analyzer failures are conservative:
the candidate is treated as still carrying the original violations.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import CoreError
from .revisions import CandidateRevision


@dataclass
class ValidationOutcome:
    candidate: CandidateRevision
    violations_after: int
    passed: bool
    error: Optional[str] = None


@dataclass
class FileOutcome:
    file: str
    candidates_passed: int
    min_violations_remaining: int


def validate_candidates(
    adapter,
    check_id: str,
    candidates: Sequence[CandidateRevision],
    work_dir,
    original_violations: int,
    keep_work: bool = False,
) -> list[ValidationOutcome]:
    """Run the analyzer over every candidate in its own scratch workspace."""
    work_dir = Path(work_dir)
    outcomes = []
    for i, candidate in enumerate(candidates):
        scratch = work_dir / f"cand{i}"
        target = scratch / candidate.file
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(candidate.revised_content, encoding="utf-8")
        try:
            report = adapter.run(check_id, workspace=scratch)
            count = sum(1 for v in report.violations if v.rule_id == check_id)
            outcomes.append(ValidationOutcome(candidate, count, count == 0))
        except CoreError as e:
            outcomes.append(
                ValidationOutcome(
                    candidate, original_violations, False, error=f"{type(e).__name__}: {e}"
                )
            )
        finally:
            if not keep_work:
                shutil.rmtree(scratch, ignore_errors=True)
    return outcomes


def summarize_file(outcomes: Sequence[ValidationOutcome], file: str = "") -> FileOutcome:
    """Per-file rollup: passing count, and residual issues when nothing passed."""
    if not outcomes:
        raise ValueError("summarize_file needs at least one outcome")
    passed = sum(1 for o in outcomes if o.passed)
    if passed:
        remaining = 0
    else:
        remaining = min(o.violations_after for o in outcomes)
    return FileOutcome(
        file=file or outcomes[0].candidate.file,
        candidates_passed=passed,
        min_violations_remaining=remaining,
    )
