"""Per-check configuration: descriptions, fix rubrics, and relevant-block hints.

The catalog is a human-edited TOML document with one ``[[check]]`` table per
quality check. It is loaded once at pipeline start and treated as immutable
afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ParseError, UnknownCheck, ValidationError

HINT_KINDS = ("enclosing_class", "enclosing_function", "named_symbol_definition")
SYMBOL_SOURCES = ("from_warning_message", "fixed_name")


@dataclass(frozen=True)
class RelevantBlockHint:
    """How to retrieve one extra code block for the proposer prompt."""

    kind: str
    symbol_source: Optional[str] = None
    fixed_name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in HINT_KINDS:
            raise ValidationError(f"unknown relevant-block kind {self.kind!r}")
        if self.symbol_source is not None and self.symbol_source not in SYMBOL_SOURCES:
            raise ValidationError(f"unknown symbol_source {self.symbol_source!r}")
        if (self.symbol_source == "fixed_name") != (self.fixed_name is not None):
            raise ValidationError("fixed_name must be present iff symbol_source is 'fixed_name'")


@dataclass(frozen=True)
class CheckSpec:
    """One quality check: identity plus the fixed prompt components."""

    check_id: str
    tool_name: str
    title: str
    description: str
    fix_rubric: str
    relevant_block_queries: tuple[RelevantBlockHint, ...] = ()
    extra: tuple[tuple[str, object], ...] = ()  # unknown keys, preserved for round trips

    def __post_init__(self):
        if not self.check_id:
            raise ValidationError("check_id must be nonempty")
        if not self.description.strip():
            raise ValidationError(f"check {self.check_id!r}: description must be nonempty")
        if not self.fix_rubric.strip():
            raise ValidationError(f"check {self.check_id!r}: fix_rubric must be nonempty")


Catalog = dict  # check_id -> CheckSpec, in file order

_KNOWN_KEYS = ("id", "tool", "title", "description", "fix_rubric", "relevant_block")


def _hint_from_table(table: dict) -> RelevantBlockHint:
    if not isinstance(table, dict) or "kind" not in table:
        raise ParseError("relevant_block table must have a 'kind' key")
    return RelevantBlockHint(
        kind=table["kind"],
        symbol_source=table.get("symbol_source"),
        fixed_name=table.get("fixed_name"),
    )


def _spec_from_table(table: dict) -> CheckSpec:
    for key in ("id", "tool", "title", "description", "fix_rubric"):
        if key not in table:
            raise ParseError(f"check entry missing required key {key!r}")
        if not isinstance(table[key], str):
            raise ParseError(f"check key {key!r} must be a string")
    hints = tuple(_hint_from_table(t) for t in table.get("relevant_block", []))
    extra = tuple((k, v) for k, v in table.items() if k not in _KNOWN_KEYS)
    return CheckSpec(
        check_id=table["id"],
        tool_name=table["tool"],
        title=table["title"],
        description=table["description"],
        fix_rubric=table["fix_rubric"],
        relevant_block_queries=hints,
        extra=extra,
    )


def load_catalog(path) -> Catalog:
    """Load and validate a catalog file. Pure function of the file bytes."""
    data = Path(path).read_bytes()
    return parse_catalog(data)


def parse_catalog(data: bytes) -> Catalog:
    try:
        doc = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ParseError(f"catalog is not valid TOML: {e}") from e
    entries = doc.get("check", [])
    if not isinstance(entries, list):
        raise ParseError("top-level 'check' must be an array of tables")
    catalog: Catalog = {}
    for table in entries:
        spec = _spec_from_table(table)
        if spec.check_id in catalog:
            raise ValidationError(f"duplicate check id {spec.check_id!r}")
        catalog[spec.check_id] = spec
    return catalog


def get_check(catalog: Catalog, check_id: str) -> CheckSpec:
    try:
        return catalog[check_id]
    except KeyError:
        raise UnknownCheck(f"check {check_id!r} not in catalog") from None


def _toml_value(value) -> str:
    # json string escaping is a valid TOML basic-string encoding
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ValidationError(f"cannot serialize catalog value of type {type(value).__name__}")


def dump_catalog(catalog: Catalog) -> str:
    """Serialize a catalog back to TOML. parse(dump(c)) == c."""
    chunks = []
    for spec in catalog.values():
        lines = ["[[check]]"]
        lines.append(f"id = {_toml_value(spec.check_id)}")
        lines.append(f"tool = {_toml_value(spec.tool_name)}")
        lines.append(f"title = {_toml_value(spec.title)}")
        lines.append(f"description = {_toml_value(spec.description)}")
        lines.append(f"fix_rubric = {_toml_value(spec.fix_rubric)}")
        for key, value in spec.extra:
            lines.append(f"{key} = {_toml_value(value)}")
        for hint in spec.relevant_block_queries:
            lines.append("")
            lines.append("[[check.relevant_block]]")
            lines.append(f"kind = {_toml_value(hint.kind)}")
            if hint.symbol_source is not None:
                lines.append(f"symbol_source = {_toml_value(hint.symbol_source)}")
            if hint.fixed_name is not None:
                lines.append(f"fixed_name = {_toml_value(hint.fixed_name)}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + ("\n" if chunks else "")
