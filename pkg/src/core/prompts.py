"""Deterministic rendering of the proposer and ranker prompts.

Templates are embedded constants; per-check variation flows only through the
`CheckSpec` content, so the same template serves every tool and language.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .blocks import PromptUnit, estimate_tokens
from .catalog import CheckSpec
from .errors import EmptyDiff

DO_NOT_REMOVE = "Do not remove any section of the code unrelated to the desired fix."

SCORING_RUBRIC = """\
Score 0, if the patch has changes unrelated and unnecessary to fixing the warning (Strong Reject).
Score 1, if the patch has a few correct fixes, but still modifies the original snippet unnecessarily (Weak Reject).
Score 2, if the patch has mostly correct fixes but is still not ideal (Weak Accept).
Score 3, if the patch only makes edits that fix the warning with least impact on any unrelated segments of the original snippet (Strong Accept)."""

HALLUCINATION_NOTE = """\
If you find additions or deletions of code snippets that are unrelated to the desired fixes (think LLM hallucinations), it can be categorically scored 0 (Strong Reject). That said, you can make exceptions in very specific cases where you are sure that the additions or deletions do not alter the functional correctness of the code, as outlined next."""

ALLOWED_EXCEPTIONS = """\
Allowed Exceptions:
The following (unrelated) code changes in the diff file can be considered okay and need not come in the way of labeling an otherwise correct code change as accept (score 2 or 3). This list is not exhaustive, but you should get the idea
(a) deleting comments is okay,
(b) rewriting a = a + 1 as a += 1 is okay, even though it may not have anything to do with the warning of interest,
(c) making version specific changes is okay, say changing print ("hello") to print "hello"."""

DISALLOWED_CHANGES = """\
The following (unrelated) code changes in the diff file are NOT considered okay, and you should label the diff file as reject (score 0 or 1) even if it is otherwise correct for the query. This list is not exhaustive, but you should get the idea
(a) deleting or adding a print statement,
(b) optimizing a computation,
(c) changing variable names or introducing typos."""

OUTPUT_INSTRUCTION = "Output only the reason and score for the patch below. Do not output anything else."


@dataclass(frozen=True)
class ProposerPrompt:
    p1_description: str
    p2_rubric: str
    p3_relevant_blocks: Optional[str]
    p4_code: str
    p5_warnings_and_lines: str
    rendered_text: str
    estimated_tokens: int


@dataclass(frozen=True)
class RankerPrompt:
    title: str
    description: str
    fix_rubric: str
    scoring_rubric: str
    allowed_exceptions: str
    disallowed_changes: str
    diff_text: str
    rendered_text: str


def _lines_of_interest(unit: PromptUnit) -> list[str]:
    base = unit.block.start_line
    block_lines = unit.block_text.splitlines()
    seen = set()
    rendered = []
    for violation in unit.covered:
        rel = violation.start_line - base + 1
        if rel in seen:
            continue
        seen.add(rel)
        text = block_lines[rel - 1] if 1 <= rel <= len(block_lines) else ""
        rendered.append(f"{rel}. {text}")
    return rendered


def render_proposer_prompt(
    check: CheckSpec,
    unit: PromptUnit,
    relevant: Sequence[tuple[str, str]] = (),
) -> ProposerPrompt:
    """Fill the fixed proposer template for one prompt unit.

    The code slice is embedded verbatim between the "Buggy Code:" marker and
    the warnings section, so it can be recovered byte-exactly from the
    rendered text (see `extract_buggy_code`).
    """
    tool = check.tool_name
    p1 = (
        f"We are fixing code that has been flagged for the {tool} warning titled "
        f'"{check.title}" which has the following description:\n\n{check.description}'
    )
    p2 = f"The recommended way to fix code flagged for this warning is:\n\n{check.fix_rubric}"
    p3 = None
    if relevant:
        chunks = [f"{label}:\n{text.rstrip()}" for label, text in relevant]
        p3 = "The following code blocks may be relevant for the fix:\n\n" + "\n\n".join(chunks)

    messages = [v.message for v in sorted(unit.covered, key=lambda v: v.start_line)]
    interest = _lines_of_interest(unit)
    p5 = (
        f"{tool} warning(s) for the above buggy code:\n"
        + "\n".join(messages)
        + "\n\nThe following lines are likely to be of interest:\n"
        + "\n".join(interest)
        + "\n\nFixed Code:\n"
    )

    instruction = (
        f"Modify the Buggy code below to fix the {tool} warning(s). "
        f"Output the entire code block with appropriate changes. {DO_NOT_REMOVE}"
    )
    parts = [p1, p2]
    if p3 is not None:
        parts.append(p3)
    parts.append(instruction)
    rendered = "\n\n".join(parts) + "\n\nBuggy Code:\n" + unit.block_text + "\n" + p5
    return ProposerPrompt(
        p1_description=p1,
        p2_rubric=p2,
        p3_relevant_blocks=p3,
        p4_code=unit.block_text,
        p5_warnings_and_lines=p5,
        rendered_text=rendered,
        estimated_tokens=estimate_tokens(rendered),
    )


_BUGGY_CODE_RE = re.compile(
    r"Buggy Code:\n(.*)\n[^\n]*warning\(s\) for the above buggy code:", re.DOTALL
)


def extract_buggy_code(rendered_text: str) -> Optional[str]:
    """Recover the verbatim code slice from a rendered proposer prompt."""
    m = _BUGGY_CODE_RE.search(rendered_text)
    if m is None:
        return None
    return m.group(1)


def render_ranker_prompt(check: CheckSpec, diff_text: str) -> RankerPrompt:
    """Fill the fixed ranker template for one candidate diff."""
    if not diff_text or not diff_text.strip():
        raise EmptyDiff("cannot rank an empty diff")
    header = (
        "You are an expert developer. You are verifying the code generated by LLM "
        f'to fix the warning titled "{check.title}" which has the following description:\n\n'
        f"{check.description}"
    )
    rubric = (
        "The recommended ways to fix code flagged for this warning are:\n\n"
        f"{check.fix_rubric}"
    )
    task = (
        "Your task is to assess the quality of the generated patch and rate it on "
        "the following evaluation criteria:\n" + SCORING_RUBRIC
    )
    rendered = "\n\n".join(
        [
            header,
            rubric,
            task,
            HALLUCINATION_NOTE,
            ALLOWED_EXCEPTIONS,
            DISALLOWED_CHANGES,
            OUTPUT_INSTRUCTION,
            "Diff:\n" + diff_text.rstrip("\n"),
            "Reason:",
        ]
    )
    return RankerPrompt(
        title=check.title,
        description=check.description,
        fix_rubric=check.fix_rubric,
        scoring_rubric=SCORING_RUBRIC,
        allowed_exceptions=ALLOWED_EXCEPTIONS,
        disallowed_changes=DISALLOWED_CHANGES,
        diff_text=diff_text,
        rendered_text=rendered,
    )
