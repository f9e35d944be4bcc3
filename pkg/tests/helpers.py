"""Independent oracles used by the test suite.

The unified-diff applier here is deliberately written from the diff format
definition, not from difflib, so round-trip tests check the emitted diffs
against a second implementation.
"""

import random
import re

from core.blocks import (
    CLASS_LIKE,
    FUNCTION_LIKE,
    LINE_WINDOW,
    WHOLE_FILE,
    BlockIndex,
    CodeBlock,
    estimate_tokens,
)

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


def apply_unified_diff(original: str, diff_text: str) -> str:
    """Apply a unified diff, honoring "\\ No newline at end of file" markers."""
    if not diff_text:
        return original
    src = original.splitlines(keepends=True)
    diff_lines = diff_text.splitlines(keepends=True)
    out = []
    pos = 0
    i = 0
    while i < len(diff_lines) and not diff_lines[i].startswith("@@"):
        i += 1
    while i < len(diff_lines):
        m = _HUNK_RE.match(diff_lines[i])
        assert m, f"bad hunk header: {diff_lines[i]!r}"
        a_start = int(m.group(1))
        a_count = int(m.group(2)) if m.group(2) is not None else 1
        start_idx = a_start - 1 if a_count > 0 else a_start
        assert start_idx >= pos, "hunks out of order"
        out.extend(src[pos:start_idx])
        pos = start_idx
        i += 1
        while i < len(diff_lines) and not diff_lines[i].startswith("@@"):
            line = diff_lines[i]
            if line.startswith("\\"):
                i += 1
                continue
            tag, body = line[0], line[1:]
            if i + 1 < len(diff_lines) and diff_lines[i + 1].startswith("\\"):
                body = body.rstrip("\n")
            if tag == " ":
                assert src[pos] == body, f"context mismatch at line {pos + 1}"
                out.append(src[pos])
                pos += 1
            elif tag == "-":
                assert src[pos] == body, f"deletion mismatch at line {pos + 1}"
                pos += 1
            elif tag == "+":
                out.append(body)
            else:
                raise AssertionError(f"bad diff line: {line!r}")
            i += 1
    out.extend(src[pos:])
    return "".join(out)


def random_block_forest(rng: random.Random, n_lines: int):
    """A random containment forest of class/function blocks over n_lines."""
    whole = CodeBlock(WHOLE_FILE, 1, n_lines)
    blocks = []

    def subdivide(lo, hi, parent, depth):
        if depth >= 3 or hi - lo < 1:
            return
        cursor = lo
        for _ in range(rng.randint(0, 3)):
            if cursor > hi:
                break
            start = rng.randint(cursor, hi)
            end = rng.randint(start, hi)
            if parent.kind != WHOLE_FILE and (start, end) == (parent.start_line, parent.end_line):
                cursor = end + 1
                continue  # keep strict containment
            kind = rng.choice((CLASS_LIKE, FUNCTION_LIKE))
            block = CodeBlock(kind, start, end, parent=parent, name=f"b{len(blocks)}")
            blocks.append(block)
            subdivide(start, end, block, depth + 1)
            cursor = end + 1

    subdivide(1, n_lines, whole, 0)
    return whole, blocks


def random_cover_instance(seed: int):
    """(index, violations, budget) with budget large enough for any single line."""
    from core.analysis import Violation

    rng = random.Random(seed)
    n_lines = rng.randint(1, 120)
    content = "".join("x" * rng.randint(0, 30) + "\n" for _ in range(n_lines))
    if rng.random() < 0.2:
        content = content.rstrip("\n")  # exercise missing trailing newline
        if not content:
            content = "x"
    whole, blocks = random_block_forest(rng, n_lines)
    index = BlockIndex(content=content, blocks=[whole] + blocks)

    violations = []
    for k in range(rng.randint(1, 8)):
        start = rng.randint(1, n_lines)
        violations.append(
            Violation(
                file="f.py",
                start_line=start,
                end_line=min(n_lines, start + rng.randint(0, 2)),
                rule_id="r",
                message=f"violation {k}",
            )
        )

    max_line_tokens = max(
        estimate_tokens(index.slice(n, n)) for n in range(1, index.line_count + 1)
    )
    whole_tokens = estimate_tokens(content)
    mode = rng.random()
    if mode < 0.25:
        budget = whole_tokens + rng.randint(0, 10)  # whole file fits
    elif mode < 0.5:
        budget = max(max_line_tokens + 1, whole_tokens // 2)
    else:
        budget = max_line_tokens + rng.randint(1, 20)  # tight: forces windows
    return index, violations, budget


def check_cover_properties(index, violations, budget, units, estimator=estimate_tokens):
    """Assert partition, budget, containment, ordering, and maximality.

    Maximality is checked against a brute-force enumeration of every block
    containing the unit's first violation, not against the index's parent
    pointers.
    """
    key = lambda v: (v.start_line, v.end_line, v.rule_id, v.message)
    flat = [v for u in units for v in u.covered]
    assert sorted(map(key, flat)) == sorted(map(key, violations)), "coverage is not a partition"
    assert len(flat) == len(violations), "violation covered more than once or dropped"

    firsts = [min(u.covered, key=key).start_line for u in units]
    assert firsts == sorted(firsts), "units not in ascending order of first violation"

    whole_fits = estimator(index.content) <= budget
    if whole_fits:
        assert len(units) == 1 and units[0].block.kind == WHOLE_FILE, "small-file short-circuit"

    for unit in units:
        assert unit.estimated_tokens <= budget, "unit exceeds budget"
        assert estimator(unit.block_text) <= budget
        for v in unit.covered:
            assert unit.block.start_line <= v.start_line <= unit.block.end_line

        if unit.block.kind in (CLASS_LIKE, FUNCTION_LIKE):
            parent = unit.block.parent
            assert parent is not None
            parent_text = index.text_of(parent)
            assert estimator(parent_text) > budget, "parent of chosen block also fits"
            v0 = min(unit.covered, key=key)
            fitting = [
                b
                for b in index.blocks
                if b.kind in (CLASS_LIKE, FUNCTION_LIKE)
                and b.contains_line(v0.start_line)
                and estimator(index.text_of(b)) <= budget
            ]
            best = max(fitting, key=lambda b: b.size())
            assert unit.block.span() == best.span(), "not the largest fitting block"
        elif unit.block.kind == LINE_WINDOW and not whole_fits:
            v0 = min(unit.covered, key=key)
            containing = [
                b
                for b in index.blocks
                if b.kind != WHOLE_FILE
                and b.contains_line(v0.start_line)
                and estimator(index.text_of(b)) <= budget
            ]
            assert not containing, "window used although a block would fit"
