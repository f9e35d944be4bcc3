"""Stage 5: scoring validated candidates on the 0-3 rubric and ranking them."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

from .catalog import CheckSpec
from .errors import UnparsableScore
from .llm import CompletionRequest, RequestTag
from .prompts import render_ranker_prompt
from .revisions import CandidateRevision, changed_line_count


class ScoreValue(IntEnum):
    STRONG_REJECT = 0
    WEAK_REJECT = 1
    WEAK_ACCEPT = 2
    STRONG_ACCEPT = 3


@dataclass(frozen=True)
class RankScore:
    value: ScoreValue
    reason: str


@dataclass
class ScoredRevision:
    candidate: CandidateRevision
    score: RankScore
    rank: int
    transcript: Optional[tuple[str, str]] = None  # (prompt, response) when dumping


_SCORE_RE = re.compile(r"\bscore\b\s*[:=]?\s*[*_`'\"\(\[\{]*\s*(\d+)", re.IGNORECASE)
_REASON_PREFIX_RE = re.compile(r"^\s*reason\s*[:=]\s*", re.IGNORECASE)

RANKED_HIGH = "ranked_high"
RANKED_LOW = "ranked_low"


def parse_score(response_text: str) -> RankScore:
    """Extract the last ``Score: <0-3>`` occurrence; the text before it is the reason."""
    matches = list(_SCORE_RE.finditer(response_text))
    if not matches:
        raise UnparsableScore(f"no score found in {response_text[:200]!r}")
    m = matches[-1]
    value = int(m.group(1))
    if value > 3:
        raise UnparsableScore(f"score {value} outside 0..3")
    reason = _REASON_PREFIX_RE.sub("", response_text[: m.start()]).strip()
    return RankScore(ScoreValue(value), reason)


def score_candidates(
    ranker_backend,
    check: CheckSpec,
    candidates: Sequence[CandidateRevision],
    max_output_tokens: int = 512,
    keep_transcripts: bool = False,
) -> list[ScoredRevision]:
    """Score every candidate's diff at temperature 0, then rank.

    One unparsable response earns one retry; a second failure (or any backend
    error) degrades the candidate to Strong Reject so unvetted revisions are
    never surfaced high. Sort key: score desc, diff size asc, then origin.
    """
    scored = []
    for idx, candidate in enumerate(candidates):
        prompt = render_ranker_prompt(check, candidate.diff_text)
        score = None
        response = ""
        for _ in range(2):  # initial attempt + one retry
            try:
                request = CompletionRequest(
                    prompt_text=prompt.rendered_text,
                    temperature=0.0,
                    max_output_tokens=max_output_tokens,
                    tag=RequestTag(file_id=candidate.file, unit="rank", sample_index=idx),
                )
                response = ranker_backend.complete(request)
                score = parse_score(response)
                break
            except Exception:
                continue
        if score is None:
            score = RankScore(ScoreValue.STRONG_REJECT, "unparsable")
        transcript = (prompt.rendered_text, response) if keep_transcripts else None
        scored.append(ScoredRevision(candidate, score, rank=0, transcript=transcript))

    scored.sort(
        key=lambda s: (
            -int(s.score.value),
            changed_line_count(s.candidate.diff_text),
            s.candidate.origin.temperature,
            s.candidate.origin.sample_index,
        )
    )
    for position, item in enumerate(scored, start=1):
        item.rank = position
    return scored


def classify_file(scored: Sequence[ScoredRevision]) -> str:
    """ranked_high iff any candidate reached at least Weak Accept."""
    if not scored:
        raise ValueError("classify_file needs at least one scored revision")
    if any(s.score.value >= ScoreValue.WEAK_ACCEPT for s in scored):
        return RANKED_HIGH
    return RANKED_LOW
