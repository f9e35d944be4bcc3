"""Run configuration: TOML config file plus CLI overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import CommandAnalyzerAdapter, ToyAnalyzerAdapter, ToyRule
from .errors import ConfigError
from .llm import (
    DEFAULT_API_KEY_ENV,
    DEFAULT_PLAN,
    OpenAIChatBackend,
    RateLimiter,
    ResilientBackend,
    SamplingPlan,
    load_mock_script,
    replay_cache,
    scripted_mock,
)
from .revisions import CommandSyntaxChecker, DefaultSyntaxChecker

DEFAULT_LANGUAGES = {".py": "python"}


@dataclass
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    proposer_model: str = "gpt-3.5-turbo"
    ranker_model: str = "gpt-4"
    rate_limit: float = 4.0  # requests per second
    retries: int = 3
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_output_tokens: int = 2048
    context_tokens: Optional[int] = None


@dataclass
class ContextConfig:
    token_budget: int = 4000
    window_lines: int = 25
    languages: dict = field(default_factory=lambda: dict(DEFAULT_LANGUAGES))

    def language_for(self, path: str) -> str:
        suffix = Path(path).suffix
        return self.languages.get(suffix, "plain")


@dataclass
class AnalyzerConfig:
    kind: str = "toy"  # "toy" or "command"
    rules: list = field(default_factory=list)  # ToyRule entries for the toy analyzer
    command: Optional[str] = None
    report_format: str = "sarif"
    file_glob: str = "**/*.py"


@dataclass
class SyntaxConfig:
    commands: dict = field(default_factory=dict)  # language -> command template


@dataclass
class RunConfig:
    catalog_path: Path
    check_id: str
    corpus: Path
    out_dir: Path
    plan: SamplingPlan = DEFAULT_PLAN
    workers: int = 0  # 0 means "cpu count"
    llm: LlmConfig = field(default_factory=LlmConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)
    syntax: SyntaxConfig = field(default_factory=SyntaxConfig)
    mock_script_path: Optional[Path] = None
    replay_path: Optional[Path] = None
    dump_prompts: Optional[Path] = None
    work_dir: Optional[Path] = None
    keep_work: bool = False
    include_rejected: bool = False
    proposer_backend: object = None  # prebuilt backends win over config
    ranker_backend: object = None

    def effective_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        return os.cpu_count() or 1

    def validate(self) -> None:
        if not Path(self.catalog_path).is_file():
            raise ConfigError(f"catalog not found: {self.catalog_path}")
        if not Path(self.corpus).is_dir():
            raise ConfigError(f"corpus directory not found: {self.corpus}")
        if self.workers < 0:
            raise ConfigError("workers must be >= 1 (or 0 for cpu count)")
        if self.analyzer.kind not in ("toy", "command"):
            raise ConfigError(f"unknown analyzer kind {self.analyzer.kind!r}")
        if self.analyzer.kind == "command" and not self.analyzer.command:
            raise ConfigError("analyzer.command required for kind = 'command'")


def _toy_rules(raw) -> list[ToyRule]:
    rules = []
    for entry in raw:
        if isinstance(entry, dict):
            if "id" not in entry or "pattern" not in entry:
                raise ConfigError("analyzer rule needs 'id' and 'pattern'")
            rules.append(ToyRule(entry["id"], entry["pattern"], entry.get("message")))
        else:
            rules.append(ToyRule(*entry))
    return rules


def load_config_file(path) -> dict:
    """Parse the TOML config file into section dataclasses plus extras."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e

    llm_raw = doc.get("llm", {})
    llm = LlmConfig(
        base_url=llm_raw.get("base_url", LlmConfig.base_url),
        proposer_model=llm_raw.get("proposer_model", LlmConfig.proposer_model),
        ranker_model=llm_raw.get("ranker_model", LlmConfig.ranker_model),
        rate_limit=float(llm_raw.get("rate_limit", LlmConfig.rate_limit)),
        retries=int(llm_raw.get("retries", LlmConfig.retries)),
        api_key_env=llm_raw.get("api_key_env", DEFAULT_API_KEY_ENV),
        max_output_tokens=int(llm_raw.get("max_output_tokens", LlmConfig.max_output_tokens)),
        context_tokens=llm_raw.get("context_tokens"),
    )
    ctx_raw = doc.get("context", {})
    context = ContextConfig(
        token_budget=int(ctx_raw.get("token_budget", ContextConfig.token_budget)),
        window_lines=int(ctx_raw.get("window_lines", ContextConfig.window_lines)),
        languages={**DEFAULT_LANGUAGES, **ctx_raw.get("languages", {})},
    )
    ana_raw = doc.get("analyzer", {})
    analyzer = AnalyzerConfig(
        kind=ana_raw.get("kind", "toy"),
        rules=_toy_rules(ana_raw.get("rules", [])),
        command=ana_raw.get("command"),
        report_format=ana_raw.get("format", "sarif"),
        file_glob=ana_raw.get("file_glob", "**/*.py"),
    )
    syntax = SyntaxConfig(commands=dict(doc.get("syntax", {}).get("commands", {})))
    return {
        "llm": llm,
        "context": context,
        "analyzer": analyzer,
        "syntax": syntax,
        "catalog": doc.get("catalog"),
    }


def build_adapter(analyzer: AnalyzerConfig):
    if analyzer.kind == "toy":
        return ToyAnalyzerAdapter(analyzer.rules, file_glob=analyzer.file_glob)
    return CommandAnalyzerAdapter(analyzer.command, report_format=analyzer.report_format)


def build_syntax_checker(syntax: SyntaxConfig):
    if syntax.commands:
        return CommandSyntaxChecker(syntax.commands)
    return DefaultSyntaxChecker()


def build_backends(config: RunConfig) -> tuple[object, object]:
    """Resolve (proposer, ranker) backends from explicit objects, mock, or HTTP."""
    proposer = config.proposer_backend
    ranker = config.ranker_backend
    if proposer is None or ranker is None:
        if config.mock_script_path is not None:
            mock = scripted_mock(load_mock_script(config.mock_script_path))
            proposer = proposer or mock
            ranker = ranker or mock
        else:
            limiter = RateLimiter(config.llm.rate_limit)
            if proposer is None:
                proposer = ResilientBackend(
                    OpenAIChatBackend(
                        config.llm.base_url,
                        config.llm.proposer_model,
                        api_key_env=config.llm.api_key_env,
                    ),
                    retries=config.llm.retries,
                    rate_limiter=limiter,
                )
            if ranker is None:
                ranker = ResilientBackend(
                    OpenAIChatBackend(
                        config.llm.base_url,
                        config.llm.ranker_model,
                        api_key_env=config.llm.api_key_env,
                    ),
                    retries=config.llm.retries,
                    rate_limiter=limiter,
                )
    if config.replay_path is not None:
        proposer = replay_cache(proposer, config.replay_path)
        ranker = replay_cache(ranker, config.replay_path)
    return proposer, ranker
