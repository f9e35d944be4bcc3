"""Source files as nested syntactic blocks, and token-budgeted prompt units.

A file is modeled as a containment forest of blocks (whole file, classes,
functions). `cover_violations` picks, for each flagged location, the largest
enclosing block that fits the token budget and groups every still-uncovered
violation inside it into one prompt unit. Oversized regions fall back to a
shrinking line window.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

from .analysis import Violation
from .catalog import RelevantBlockHint
from .errors import BudgetTooSmall, UnsupportedLanguage

WHOLE_FILE = "whole_file"
CLASS_LIKE = "class_like"
FUNCTION_LIKE = "function_like"
LINE_WINDOW = "line_window"

DEFAULT_WINDOW_LINES = 25


def estimate_tokens(text: str) -> int:
    """Tokenizer-agnostic size estimate: ceil(utf-8 bytes / 4)."""
    return math.ceil(len(text.encode("utf-8")) / 4)


@dataclass(eq=False)
class CodeBlock:
    kind: str
    start_line: int
    end_line: int
    parent: Optional["CodeBlock"] = None
    name: Optional[str] = None

    def contains_line(self, line: int) -> bool:
        return self.start_line <= line <= self.end_line

    def span(self) -> tuple[int, int]:
        return (self.start_line, self.end_line)

    def size(self) -> int:
        return self.end_line - self.start_line + 1

    def depth(self) -> int:
        d, b = 0, self
        while b.parent is not None:
            d, b = d + 1, b.parent
        return d

    def ancestors(self) -> list["CodeBlock"]:
        """Chain from self up to the root, self included."""
        chain, b = [self], self
        while b.parent is not None:
            b = b.parent
            chain.append(b)
        return chain

    def __repr__(self):
        name = f" {self.name}" if self.name else ""
        return f"<{self.kind}{name} {self.start_line}..{self.end_line}>"


@dataclass
class BlockIndex:
    """Containment forest for one file, plus the source it was built from."""

    content: str
    blocks: list[CodeBlock]  # whole_file first

    def __post_init__(self):
        self.lines = self.content.splitlines(keepends=True)

    @property
    def whole_file(self) -> CodeBlock:
        return self.blocks[0]

    @property
    def line_count(self) -> int:
        return max(1, len(self.lines))

    def slice(self, start_line: int, end_line: int) -> str:
        return "".join(self.lines[start_line - 1:end_line])

    def text_of(self, block: CodeBlock) -> str:
        if block.kind == WHOLE_FILE:
            return self.content
        return self.slice(block.start_line, block.end_line)

    def _containing(self, line: int) -> list[CodeBlock]:
        return [b for b in self.blocks if b.contains_line(line)]

    def innermost(self, line: int, kind: Optional[str] = None) -> Optional[CodeBlock]:
        """Deepest block containing `line`, optionally filtered by kind.

        Lines outside the file still resolve to the whole-file block when no
        kind filter is given, keeping the covering procedure total.
        """
        candidates = self._containing(line)
        if kind is not None:
            candidates = [b for b in candidates if b.kind == kind]
            if not candidates:
                return None
        if not candidates:
            return self.whole_file
        return min(candidates, key=lambda b: (b.size(), -b.depth()))

    def named(self, name: str) -> Optional[CodeBlock]:
        for block in self.blocks:
            if block.name == name:
                return block
        return None


def _python_blocks(content: str, whole: CodeBlock) -> list[CodeBlock]:
    tree = ast.parse(content)
    blocks: list[CodeBlock] = []

    def walk(node, parent):
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
                kind = CLASS_LIKE if isinstance(child, ast.ClassDef) else FUNCTION_LIKE
                start = min([child.lineno] + [d.lineno for d in child.decorator_list])
                block = CodeBlock(kind, start, child.end_lineno, parent=parent, name=child.name)
                blocks.append(block)
                walk(child, block)
            else:
                walk(child, parent)

    walk(tree, whole)
    return blocks


def _plain_blocks(content: str, whole: CodeBlock) -> list[CodeBlock]:
    return []


BLOCK_PARSERS: dict[str, Callable[[str, CodeBlock], list[CodeBlock]]] = {
    "python": _python_blocks,
    "plain": _plain_blocks,
}


def register_block_parser(language: str, parser) -> None:
    BLOCK_PARSERS[language] = parser


def build_block_index(file_content: str, language: str) -> BlockIndex:
    """Build the containment forest; degrade to whole-file-only on parser failure."""
    if language not in BLOCK_PARSERS:
        raise UnsupportedLanguage(f"no block parser for {language!r}")
    line_count = max(1, len(file_content.splitlines()))
    whole = CodeBlock(WHOLE_FILE, 1, line_count)
    try:
        children = BLOCK_PARSERS[language](file_content, whole)
    except Exception:
        children = []
    return BlockIndex(content=file_content, blocks=[whole] + list(children))


@dataclass
class PromptUnit:
    """One (code block, covered violations) pair rendered into a single prompt."""

    block: CodeBlock
    block_text: str
    covered: list[Violation]
    estimated_tokens: int


def _window_widths(initial: int):
    w = max(0, initial)
    yield w
    while w > 0:
        w //= 2
        yield w


def cover_violations(
    index: BlockIndex,
    violations: list[Violation],
    budget: int,
    window_lines: int = DEFAULT_WINDOW_LINES,
    estimator: Callable[[str], int] = estimate_tokens,
) -> list[PromptUnit]:
    """Partition violations into token-budgeted prompt units.

    Small files go out whole in a single unit. Otherwise, iterate over the
    violations in ascending line order; for the first uncovered one, pick the
    largest enclosing block that fits the budget and sweep every other
    still-uncovered violation inside its span into the same unit. When even
    the innermost block is too big, fall back to a line window around the
    violation, halving its half-width until the text fits.
    """
    if budget <= 0:
        raise BudgetTooSmall(f"budget must be positive, got {budget}")
    remaining = sorted(violations, key=lambda v: (v.start_line, v.end_line, v.rule_id))
    if not remaining:
        return []

    whole_est = estimator(index.content)
    if whole_est <= budget:
        return [PromptUnit(index.whole_file, index.content, remaining, whole_est)]

    units: list[PromptUnit] = []
    covered_spans: list[tuple[int, int]] = []
    while remaining:
        v = remaining[0]
        chosen: Optional[CodeBlock] = None
        chosen_text = ""
        inner = index.innermost(v.start_line)
        if inner.kind != WHOLE_FILE:
            for block in inner.ancestors():
                text = index.text_of(block)
                if estimator(text) <= budget:
                    chosen, chosen_text = block, text
                else:
                    break  # ancestors only get bigger
        if chosen is None:
            lo, hi = _clipped_window_bounds(index, v.start_line, covered_spans)
            for w in _window_widths(window_lines):
                start = max(lo, v.start_line - w)
                end = min(hi, v.start_line + w)
                text = index.slice(start, end)
                if estimator(text) <= budget:
                    chosen = CodeBlock(LINE_WINDOW, start, end)
                    chosen_text = text
                    break
            if chosen is None:
                raise BudgetTooSmall(
                    f"line {v.start_line} of {v.file} alone exceeds budget {budget}"
                )
        span = chosen.span()
        covered = [u for u in remaining if span[0] <= u.start_line <= span[1]]
        remaining = [u for u in remaining if not (span[0] <= u.start_line <= span[1])]
        units.append(PromptUnit(chosen, chosen_text, covered, estimator(chosen_text)))
        covered_spans.append(span)
    return units


def _clipped_window_bounds(index, line, covered_spans):
    # keep windows off lines already owned by an earlier unit
    lo, hi = 1, index.line_count
    for start, end in covered_spans:
        if end < line:
            lo = max(lo, end + 1)
        elif start > line:
            hi = min(hi, start - 1)
    return lo, hi


_SYMBOL_RE = re.compile(r"[`'\"]([A-Za-z_][A-Za-z0-9_]*)[`'\"]")


def _truncate_to_tokens(text: str, max_tokens: int, estimator) -> str:
    if estimator(text) <= max_tokens:
        return text
    out: list[str] = []
    total = ""
    for line in text.splitlines(keepends=True):
        if estimator(total + line) > max_tokens:
            break
        out.append(line)
        total += line
    if not out and text:
        # single oversized line: hard byte cut
        return text.encode("utf-8")[: max_tokens * 4].decode("utf-8", errors="ignore")
    return "".join(out)


def fetch_relevant_blocks(
    index: BlockIndex,
    hint: RelevantBlockHint,
    violation: Violation,
    budget: int = 4000,
    estimator: Callable[[str], int] = estimate_tokens,
) -> list[tuple[str, str]]:
    """Resolve one relevant-block hint against the index.

    Unresolvable hints yield an empty list; each returned text is truncated
    to a quarter of the budget so extra context cannot crowd out the code.
    """
    results: list[tuple[str, str]] = []
    if hint.kind == "enclosing_class":
        block = index.innermost(violation.start_line, kind=CLASS_LIKE)
        if block is not None:
            results.append(("enclosing class", index.text_of(block)))
    elif hint.kind == "enclosing_function":
        block = index.innermost(violation.start_line, kind=FUNCTION_LIKE)
        if block is not None:
            results.append(("enclosing function", index.text_of(block)))
    elif hint.kind == "named_symbol_definition":
        if hint.symbol_source == "fixed_name":
            names = [hint.fixed_name]
        else:
            names = _SYMBOL_RE.findall(violation.message)
        for name in names:
            block = index.named(name)
            if block is not None:
                results.append((f"definition of `{name}`", index.text_of(block)))
                break
    limit = max(1, budget // 4)
    return [(label, _truncate_to_tokens(text, limit, estimator)) for label, text in results]
