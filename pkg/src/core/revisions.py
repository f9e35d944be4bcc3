"""Turning model outputs into full-file candidate revisions.

Covers the tail of generation and the front half of pruning: strip code
fences, patch generated blocks back into the original file, compute unified
diffs, de-duplicate identical revisions and screen out syntax errors.
"""

from __future__ import annotations

import difflib
import re
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .blocks import PromptUnit
from .errors import SpanOutOfRange

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
NO_NEWLINE_MARKER = "\\ No newline at end of file"


def extract_code(response_text: str) -> str:
    """Pull code out of a model response.

    Fenced blocks win; with none present the response is returned verbatim
    minus leading/trailing blank lines.
    """
    bodies = [m.rstrip("\n") for m in _FENCE_RE.findall(response_text)]
    if bodies:
        return "\n".join(bodies)
    lines = response_text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    return "\n".join(lines)


def patch_unit(original_content: str, unit: PromptUnit, generated_block: str) -> str:
    """Replace the unit's line span with the generated block.

    Lines outside the span stay byte-identical; the original file's missing
    trailing newline is preserved when the patch reaches the end of file.
    """
    lines = original_content.splitlines(keepends=True)
    n = len(lines)
    start, end = unit.block.start_line, unit.block.end_line
    if not (1 <= start <= end <= max(n, 1)):
        raise SpanOutOfRange(
            f"span {start}..{end} out of range for {n}-line content"
        )
    generated = generated_block
    if generated and not generated.endswith("\n"):
        generated += "\n"
    head = "".join(lines[: start - 1])
    tail = "".join(lines[end:])
    revised = head + generated + tail
    # the synthetic newline on `generated` must not outlive a file that never
    # ended with one; head/tail lines keep their own endings either way
    if (
        end >= n
        and generated
        and original_content
        and not original_content.endswith("\n")
        and revised.endswith("\n")
    ):
        revised = revised[:-1]
    return revised


def make_unified_diff(original: str, revised: str, path: str) -> str:
    """Standard unified diff (3 context lines) with no-newline markers."""
    a = original.splitlines(keepends=True)
    b = revised.splitlines(keepends=True)
    out = []
    for line in difflib.unified_diff(a, b, fromfile="a/" + path, tofile="b/" + path, n=3):
        out.append(line)
        if not line.endswith("\n"):
            out.append("\n" + NO_NEWLINE_MARKER + "\n")
    return "".join(out)


def changed_line_count(diff_text: str) -> int:
    count = 0
    for line in diff_text.splitlines():
        if line.startswith("+++") or line.startswith("---"):
            continue
        if line.startswith(("+", "-")):
            count += 1
    return count


@dataclass(frozen=True)
class Origin:
    """Where a candidate came from: which units, at what sampling point."""

    unit_indices: tuple[int, ...]
    temperature: float
    sample_index: int


@dataclass(frozen=True)
class CandidateRevision:
    file: str
    revised_content: str
    origin: Origin
    diff_text: str


def assemble_candidate(
    original_content: str,
    units_with_outputs: Sequence[tuple[PromptUnit, str]],
    file: str = "input",
    temperature: float = 0.0,
    sample_index: int = 0,
    unit_indices: Optional[Sequence[int]] = None,
) -> CandidateRevision:
    """Compose one full-file candidate from per-unit generated blocks.

    Patches are applied in descending start-line order so earlier spans stay
    valid while later ones are rewritten.
    """
    if unit_indices is None:
        unit_indices = tuple(range(len(units_with_outputs)))
    ordered = sorted(
        units_with_outputs, key=lambda pair: pair[0].block.start_line, reverse=True
    )
    content = original_content
    for unit, generated in ordered:
        content = patch_unit(content, unit, generated)
    return CandidateRevision(
        file=file,
        revised_content=content,
        origin=Origin(tuple(unit_indices), temperature, sample_index),
        diff_text=make_unified_diff(original_content, content, file),
    )


def _normalize_for_dedup(content: str) -> str:
    return "\n".join(line.rstrip() for line in content.splitlines())


def dedup(candidates: Sequence[CandidateRevision]) -> list[CandidateRevision]:
    """Collapse byte-identical revisions (modulo trailing whitespace).

    Each group keeps its lowest-(temperature, sample_index) member; groups
    stay in first-appearance order.
    """
    groups: dict[str, list[CandidateRevision]] = {}
    for candidate in candidates:
        groups.setdefault(_normalize_for_dedup(candidate.revised_content), []).append(candidate)
    survivors = []
    for members in groups.values():
        survivors.append(
            min(members, key=lambda c: (c.origin.temperature, c.origin.sample_index))
        )
    return survivors


class DefaultSyntaxChecker:
    """Built-in checker: full parse for Python, balanced delimiters otherwise."""

    def check(self, language: str, content: str) -> Optional[str]:
        if language == "python":
            try:
                compile(content, "<candidate>", "exec")
                return None
            except SyntaxError as e:
                return f"syntax error: {e.msg} (line {e.lineno})"
        return _balanced_delimiters(content)


_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {")": "(", "]": "[", "}": "{"}


def _balanced_delimiters(content: str) -> Optional[str]:
    stack = []
    quote = None
    escaped = False
    for ch in content:
        if quote is not None:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in ("'", '"'):
            quote = ch
        elif ch in _OPENERS:
            stack.append(ch)
        elif ch in _CLOSERS:
            if not stack or stack[-1] != _CLOSERS[ch]:
                return f"unbalanced {ch!r}"
            stack.pop()
    if stack:
        return f"unclosed {stack[-1]!r}"
    return None


class CommandSyntaxChecker:
    """External parse-only command; ``{file}`` is substituted before running."""

    def __init__(self, commands: dict, fallback: Optional[DefaultSyntaxChecker] = None):
        self.commands = dict(commands)
        self.fallback = fallback or DefaultSyntaxChecker()

    def check(self, language: str, content: str) -> Optional[str]:
        template = self.commands.get(language)
        if template is None:
            return self.fallback.check(language, content)
        with tempfile.NamedTemporaryFile(
            "w", suffix=f".{language}", delete=False, encoding="utf-8"
        ) as fh:
            fh.write(content)
            temp_path = fh.name
        try:
            proc = subprocess.run(
                template.replace("{file}", temp_path),
                shell=True,
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                detail = (proc.stderr or proc.stdout).strip()
                return f"checker exited {proc.returncode}: {detail[:300]}"
            return None
        finally:
            Path(temp_path).unlink(missing_ok=True)


def screen_syntax(
    checker, language: str, candidates: Sequence[CandidateRevision]
) -> tuple[list[CandidateRevision], list[tuple[CandidateRevision, str]]]:
    """Partition candidates into syntactically acceptable and rejected."""
    kept = []
    rejected = []
    for candidate in candidates:
        if not candidate.revised_content.strip():
            rejected.append((candidate, "empty revision"))
            continue
        detail = checker.check(language, candidate.revised_content)
        if detail is None:
            kept.append(candidate)
        else:
            rejected.append((candidate, detail))
    return kept, rejected
