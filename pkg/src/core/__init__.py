"""Code-revision pipeline: propose fixes for static-analysis findings with a
completion model, prune candidates with the analyzer, rank survivors on an
accept/reject rubric."""

__version__ = "0.1.0"

from .analysis import AnalysisReport, Violation
from .catalog import CheckSpec, RelevantBlockHint, get_check, load_catalog
from .llm import DEFAULT_PLAN, SamplingPlan
from .report import PipelineReport
from .revisions import CandidateRevision

__all__ = [
    "AnalysisReport",
    "CandidateRevision",
    "CheckSpec",
    "DEFAULT_PLAN",
    "PipelineReport",
    "RelevantBlockHint",
    "SamplingPlan",
    "Violation",
    "get_check",
    "load_catalog",
    "__version__",
]
