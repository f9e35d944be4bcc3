"""End-to-end orchestration: flag, cover, propose, prune, rank, report.

One invocation processes one check over a corpus; `run_all` iterates the
catalog. Per-file failures are contained: they become report rows and error
notes, never aborts.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import blocks as blockmod
from .analysis import Violation
from .catalog import CheckSpec, get_check, load_catalog
from .config import RunConfig, build_adapter, build_backends, build_syntax_checker
from .errors import CatalogError, CoreError, UnknownCheck
from .llm import sample
from .prompts import render_proposer_prompt
from .ranking import RANKED_LOW, ScoredRevision, classify_file, score_candidates
from .report import (
    FILE_ERROR,
    NO_PASSING,
    CheckMetrics,
    FileDetail,
    PipelineReport,
    emit_report,
)
from .revisions import assemble_candidate, dedup, extract_code, screen_syntax
from .validate import summarize_file, validate_candidates


def file_slug(path: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", path.replace("/", "__"))


@dataclass
class FileResult:
    detail: FileDetail
    scored: list[ScoredRevision]
    metrics: CheckMetrics


def _relevant_for_unit(index, check: CheckSpec, unit, budget: int):
    seen = set()
    collected = []
    for hint in check.relevant_block_queries:
        for violation in unit.covered:
            for label, text in blockmod.fetch_relevant_blocks(index, hint, violation, budget):
                if (label, text) in seen:
                    continue
                seen.add((label, text))
                collected.append((label, text))
    return collected


def _dump(path: Optional[Path], name: str, content: str) -> None:
    if path is None:
        return
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(content, encoding="utf-8")


def process_file(
    config: RunConfig,
    check: CheckSpec,
    adapter,
    proposer,
    ranker,
    syntax_checker,
    rel_path: str,
    violations: list[Violation],
) -> FileResult:
    """Run stages 2-5 for one flagged file."""
    issues = len(violations)
    metrics = CheckMetrics(check_id=check.check_id, files_flagged=1, issues_flagged=issues)
    detail = FileDetail(file=rel_path, check_id=check.check_id, issues_flagged=issues)
    slug = file_slug(rel_path)

    def failed(reason: str) -> FileResult:
        metrics.issues_remaining = issues
        detail.violations_remaining = issues
        detail.classification = FILE_ERROR
        detail.error = reason
        return FileResult(detail, [], metrics)

    content = (Path(config.corpus) / rel_path).read_text(encoding="utf-8", errors="replace")
    language = config.context.language_for(rel_path)
    index = blockmod.build_block_index(content, language)
    try:
        units = blockmod.cover_violations(
            index, violations, config.context.token_budget, config.context.window_lines
        )
    except CoreError as e:
        return failed(f"covering failed: {e}")

    # stage 3: sample the proposer once per unit
    per_unit_samples = []
    sample_errors = []
    for i, unit in enumerate(units):
        relevant = _relevant_for_unit(index, check, unit, config.context.token_budget)
        prompt = render_proposer_prompt(check, unit, relevant)
        _dump(config.dump_prompts, f"{slug}.u{i}.prompt.txt", prompt.rendered_text)
        try:
            batch = sample(
                proposer,
                prompt.rendered_text,
                config.plan,
                file_id=rel_path,
                unit=f"u{i}",
                max_output_tokens=config.llm.max_output_tokens,
            )
        except CoreError as e:
            return failed(f"unit {i}: {e}")
        sample_errors.extend(f"u{i}#{idx}: {msg}" for idx, msg in batch.failures)
        per_unit_samples.append({s.sample_index: s for s in batch.samples})

    # pair unit outputs by sample index; a candidate needs output for every unit
    temps = config.plan.temperatures()
    candidates = []
    for sample_index in range(config.plan.total()):
        if not all(sample_index in unit_samples for unit_samples in per_unit_samples):
            continue
        outputs = [
            (unit, extract_code(per_unit_samples[i][sample_index].text))
            for i, unit in enumerate(units)
        ]
        try:
            candidates.append(
                assemble_candidate(
                    content,
                    outputs,
                    file=rel_path,
                    temperature=temps[sample_index],
                    sample_index=sample_index,
                )
            )
        except CoreError as e:
            sample_errors.append(f"sample {sample_index}: {e}")
    detail.candidates_total = len(candidates)
    if sample_errors:
        detail.error = "; ".join(sample_errors)

    # stage 4: dedup, syntax screen, analyzer pruning
    candidates = dedup(candidates)
    kept, rejected = screen_syntax(syntax_checker, language, candidates)
    detail.candidates_screened = len(kept)
    if not kept:
        metrics.issues_remaining = issues
        detail.violations_remaining = issues
        detail.classification = NO_PASSING
        return FileResult(detail, [], metrics)

    work_dir = config.work_dir or (Path(config.out_dir) / "work")
    outcomes = validate_candidates(
        adapter,
        check.check_id,
        kept,
        Path(work_dir) / slug,
        original_violations=issues,
        keep_work=config.keep_work,
    )
    summary = summarize_file(outcomes, file=rel_path)
    detail.candidates_passed = summary.candidates_passed
    passed = [o.candidate for o in outcomes if o.passed]
    if not passed:
        metrics.issues_remaining = summary.min_violations_remaining
        detail.violations_remaining = summary.min_violations_remaining
        detail.classification = NO_PASSING
        return FileResult(detail, [], metrics)

    metrics.files_passing_static = 1

    # stage 5: rank the survivors
    scored = score_candidates(
        ranker,
        check,
        passed,
        max_output_tokens=config.llm.max_output_tokens,
        keep_transcripts=config.dump_prompts is not None,
    )
    classification = classify_file(scored)
    detail.classification = classification
    detail.scores = [int(s.score.value) for s in sorted(scored, key=lambda s: s.rank)]
    if classification == RANKED_LOW:
        metrics.files_ranked_low = 1
    else:
        metrics.files_ranked_high = 1
        detail.best_patch = patch_name(slug, scored[0])
    return FileResult(detail, scored, metrics)


def patch_name(slug: str, scored: ScoredRevision) -> str:
    return f"{slug}.rank{scored.rank}.score{int(scored.score.value)}.patch"


def write_patch_set(
    rel_path: str,
    scored: list[ScoredRevision],
    out_dir,
    classification: str,
    include_rejected: bool = False,
    dump_transcripts: bool = False,
) -> list[Path]:
    """Write per-candidate unified diffs plus a per-file index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    slug = file_slug(rel_path)
    written = []
    write_patches = classification != RANKED_LOW or include_rejected
    index_entries = []
    for item in sorted(scored, key=lambda s: s.rank):
        name = patch_name(slug, item)
        index_entries.append(
            {
                "rank": item.rank,
                "score": int(item.score.value),
                "reason": item.score.reason,
                "temperature": item.candidate.origin.temperature,
                "sample_index": item.candidate.origin.sample_index,
                "patch": name if write_patches else None,
            }
        )
        if write_patches:
            path = out_dir / name
            path.write_text(item.candidate.diff_text, encoding="utf-8")
            written.append(path)
            if dump_transcripts and item.transcript is not None:
                transcript_path = out_dir / (name + ".ranker.txt")
                prompt_text, response = item.transcript
                transcript_path.write_text(
                    prompt_text + "\n" + response + "\n", encoding="utf-8"
                )
                written.append(transcript_path)
    index = {
        "file": rel_path,
        "classification": classification,
        "candidates": index_entries,
    }
    if classification == RANKED_LOW:
        index["note"] = "no accepted revision"
    index_path = out_dir / f"{slug}.index.json"
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(index_path)
    return written


def run_pipeline(config: RunConfig) -> PipelineReport:
    """Run one check over the corpus and write patches plus the report."""
    config.validate()
    catalog = load_catalog(config.catalog_path)
    try:
        check = get_check(catalog, config.check_id)
    except UnknownCheck as e:
        raise CatalogError(str(e)) from e
    report = _run_check(config, check)
    emit_report(report, config.out_dir)
    return report


def _run_check(config: RunConfig, check: CheckSpec) -> PipelineReport:
    adapter = build_adapter(config.analyzer)
    proposer, ranker = build_backends(config)
    syntax_checker = build_syntax_checker(config.syntax)

    report = PipelineReport()
    metrics = CheckMetrics(check_id=check.check_id)
    report.checks.append(metrics)

    try:
        flagged = adapter.run(check.check_id, workspace=config.corpus)
    except CoreError as e:
        report.errors.append(f"initial analysis failed: {type(e).__name__}: {e}")
        return report

    by_file: dict[str, list[Violation]] = {}
    for violation in flagged.violations:
        by_file.setdefault(violation.file, []).append(violation)

    def run_one(item):
        rel_path, violations = item
        try:
            return process_file(
                config, check, adapter, proposer, ranker, syntax_checker,
                rel_path, violations,
            )
        except Exception as e:  # containment: any per-file failure becomes a row
            issues = len(violations)
            detail = FileDetail(
                file=rel_path,
                check_id=check.check_id,
                issues_flagged=issues,
                violations_remaining=issues,
                classification=FILE_ERROR,
                error=f"{type(e).__name__}: {e}",
            )
            row = CheckMetrics(
                check_id=check.check_id,
                files_flagged=1,
                issues_flagged=issues,
                issues_remaining=issues,
            )
            return FileResult(detail, [], row)

    items = sorted(by_file.items())
    workers = max(1, min(config.effective_workers(), max(len(items), 1)))
    if workers == 1:
        results = [run_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, items))

    patches_dir = Path(config.out_dir) / "patches" / file_slug(check.check_id)
    for result in results:
        metrics.add(result.metrics)
        report.files.append(result.detail)
        if result.scored:
            write_patch_set(
                result.detail.file,
                result.scored,
                patches_dir,
                result.detail.classification,
                include_rejected=config.include_rejected,
                dump_transcripts=config.dump_prompts is not None,
            )
        if result.detail.error:
            report.errors.append(f"{result.detail.file}: {result.detail.error}")
    metrics.check_id = check.check_id
    return report


def run_all(config: RunConfig) -> PipelineReport:
    """Run every catalog check; per-check rows plus shared file details."""
    config.validate()
    catalog = load_catalog(config.catalog_path)
    if not catalog:
        raise CatalogError("catalog is empty")
    combined = PipelineReport()
    for check_id, check in catalog.items():
        part = _run_check(config, check)
        combined.checks.extend(part.checks)
        combined.files.extend(part.files)
        combined.errors.extend(part.errors)
    emit_report(combined, config.out_dir)
    return combined
