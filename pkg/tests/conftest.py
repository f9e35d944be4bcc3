import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make tests.helpers importable as helpers

from core.analysis import Violation
from core.catalog import CheckSpec

DATA_DIR = Path(__file__).parent / "data"

PERSISTENT_DICT_SOURCE = '''\
import os


class PersistentDict(dict):
    """A dict that persists itself to a file on write."""

    def __init__(self, filename, load=True):
        self._filename = os.path.abspath(filename)
        if load:
            self._load()
        self._transact = False

    @property
    def filename(self):
        'The filepath to write'
        return self._filename

    def _load(self):
        pass
'''

MISSING_EQUALS_DESCRIPTION = (
    "A class that defines attributes that are not present in its superclasses may "
    "need to override the __eq__() method (__ne__() should also be defined).\n\n"
    "Adding additional attributes without overriding __eq__() means that the "
    "additional attributes will not be accounted for in equality tests."
)

MISSING_EQUALS_RUBRIC = (
    "Override __eq__ method to also test for equality of added attributes by either "
    "calling eq on the base class and checking equality of the added attributes, or "
    "implementing a new eq method that checks equality on both self and inherited "
    "attributes."
)

MISSING_EQUALS_MESSAGE = (
    "The class 'PersistentDict' does not override \"__eq__\", but adds the new "
    "attributes \"_filename\" and \"_transact\"."
)


@pytest.fixture
def missing_equals_check():
    return CheckSpec(
        check_id="py/missing-equals",
        tool_name="CodeQL",
        title="`__eq__` not overridden when adding attributes",
        description=MISSING_EQUALS_DESCRIPTION,
        fix_rubric=MISSING_EQUALS_RUBRIC,
    )


@pytest.fixture
def persistent_dict_violation():
    return Violation(
        file="persistent_dict.py",
        start_line=4,
        end_line=4,
        rule_id="py/missing-equals",
        message=MISSING_EQUALS_MESSAGE,
    )


# --- hermetic end-to-end fixture: 21 files, 3 toy checks -------------------

E2E_CHECKS = {
    "no-print": {
        "pattern": r"\bprint\(",
        "title": "print call in library code",
        "description": "Library code should not write to stdout directly; print calls "
        "bypass the logging configuration and cannot be silenced by consumers.",
        "fix_rubric": "Remove the print call, or replace it with a logger invocation "
        "at an appropriate level. Do not change any other behavior.",
    },
    "no-todo": {
        "pattern": r"#\s*TODO",
        "title": "unresolved TODO comment",
        "description": "TODO comments left in shipped code hide unfinished work and "
        "go stale; tracked issues should be used instead.",
        "fix_rubric": "Delete the TODO comment line, or resolve it. Keep the "
        "surrounding code unchanged.",
    },
    "no-eval": {
        "pattern": r"\beval\(",
        "title": "use of eval",
        "description": "eval executes arbitrary expressions and is a common injection "
        "vector; safe alternatives exist for almost every use.",
        "fix_rubric": "Replace the eval call with a safe equivalent such as "
        "ast.literal_eval, or remove the dynamic evaluation entirely.",
    },
}

# behavior(file) -> (original lines, scripted response lines or None, expected class)
# "correct": all flagged lines fixed; "partial": one of several fixed;
# "identity": no script entry (mock echoes input); "unrelated": fixed plus an
# unrelated edit elsewhere (passes the analyzer, scored low by the ranker).


def _print_file(n_violations, fix, unrelated=False, tag=""):
    lines = [f"def work_{tag}(x):", "    y = x + 1"]
    for i in range(n_violations):
        lines.append(f'    print("debug {tag} {i}")')
    lines.append("    return y")
    original = "\n".join(lines) + "\n"
    if fix is None:
        return original, None
    keep = 0 if fix == "all" else n_violations - 1
    fixed = [f"def work_{tag}(x):", "    y = x + 1"]
    for i in range(keep):
        fixed.append(f'    print("debug {tag} {i}")')
    fixed.append("    return y")
    if unrelated:
        fixed[1] = "    y = x + 2"  # semantics change the analyzer cannot see
    return original, "\n".join(fixed) + "\n"


def _todo_file(n_violations, fix, unrelated=False, tag=""):
    lines = [f"def todo_{tag}():", "    total = 0"]
    for i in range(n_violations):
        lines.append(f"    # TODO handle case {i}")
    lines.append("    return total")
    original = "\n".join(lines) + "\n"
    if fix is None:
        return original, None
    keep = 0 if fix == "all" else n_violations - 1
    fixed = [f"def todo_{tag}():", "    total = 0"]
    for i in range(keep):
        fixed.append(f"    # TODO handle case {i}")
    fixed.append("    return total")
    if unrelated:
        fixed.append("")
        fixed.append(f"def extra_{tag}():")
        fixed.append("    return None")
    return original, "\n".join(fixed) + "\n"


def _eval_file(n_violations, fix, unrelated=False, tag=""):
    lines = [f"def load_{tag}(blob):", "    import ast"]
    for i in range(n_violations):
        lines.append(f"    v{i} = eval(blob)")
    lines.append("    return blob")
    original = "\n".join(lines) + "\n"
    if fix is None:
        return original, None
    keep = 0 if fix == "all" else n_violations - 1
    fixed = [f"def load_{tag}(blob):", "    import ast"]
    for i in range(keep):
        fixed.append(f"    v{i} = eval(blob)")
    for i in range(keep, n_violations):
        fixed.append(f"    v{i} = ast.literal_eval(blob)")
    fixed.append("    return blob")
    if unrelated:
        fixed[-1] = "    return None"
    return original, "\n".join(fixed) + "\n"


# (name, maker, n_violations, fix, unrelated, ranker_score)
E2E_FILES = [
    ("print_ok_a.py", _print_file, 1, "all", False, 3),
    ("print_ok_b.py", _print_file, 1, "all", False, 3),
    ("print_ok_c.py", _print_file, 1, "all", False, 2),
    ("print_ok_d.py", _print_file, 1, "all", False, 3),
    ("print_partial.py", _print_file, 2, "some", False, None),
    ("print_identity.py", _print_file, 1, None, False, None),
    ("print_unrelated_a.py", _print_file, 1, "all", True, 0),
    ("print_unrelated_b.py", _print_file, 1, "all", True, 1),
    ("todo_ok_a.py", _todo_file, 1, "all", False, 3),
    ("todo_ok_b.py", _todo_file, 1, "all", False, 3),
    ("todo_ok_c.py", _todo_file, 1, "all", False, 2),
    ("todo_ok_d.py", _todo_file, 3, "all", False, 3),
    ("todo_partial.py", _todo_file, 2, "some", False, None),
    ("todo_identity.py", _todo_file, 2, None, False, None),
    ("todo_unrelated.py", _todo_file, 1, "all", True, 0),
    ("eval_ok_a.py", _eval_file, 1, "all", False, 3),
    ("eval_ok_b.py", _eval_file, 1, "all", False, 3),
    ("eval_ok_c.py", _eval_file, 2, "all", False, 2),
    ("eval_partial.py", _eval_file, 3, "some", False, None),
    ("eval_identity.py", _eval_file, 1, None, False, None),
    ("eval_unrelated.py", _eval_file, 2, "all", True, 1),
]

# hand-computed expectations per check (see file table above)
E2E_EXPECTED = {
    "no-print": dict(files_flagged=8, issues_flagged=9, files_passing_static=6,
                     issues_remaining=2, files_ranked_high=4, files_ranked_low=2),
    "no-todo": dict(files_flagged=7, issues_flagged=11, files_passing_static=5,
                    issues_remaining=3, files_ranked_high=4, files_ranked_low=1),
    "no-eval": dict(files_flagged=6, issues_flagged=10, files_passing_static=4,
                    issues_remaining=3, files_ranked_high=3, files_ranked_low=1),
}


def build_e2e_tree(root: Path) -> dict:
    """Corpus, catalog, config and mock script for the hermetic run."""
    corpus = root / "corpus"
    corpus.mkdir(parents=True)
    script = {}
    for name, maker, n, fix, unrelated, score in E2E_FILES:
        tag = name.split(".")[0]
        original, fixed = maker(n, fix, unrelated, tag=tag)
        (corpus / name).write_text(original, encoding="utf-8")
        if fixed is not None:
            script[f"{name}:u*"] = fixed
        if score is not None:
            script[f"{name}:rank"] = f"Reason: scripted verdict for {name}.\nScore: {score}"
    script["*:rank"] = "Reason: fallback.\nScore: 0"

    catalog_lines = []
    for check_id, meta in E2E_CHECKS.items():
        catalog_lines += [
            "[[check]]",
            f'id = "{check_id}"',
            'tool = "toy"',
            f'title = "{meta["title"]}"',
            f'description = "{meta["description"]}"',
            f'fix_rubric = "{meta["fix_rubric"]}"',
            "",
        ]
    catalog_path = root / "checks.toml"
    catalog_path.write_text("\n".join(catalog_lines), encoding="utf-8")

    rules = "\n".join(
        "[[analyzer.rules]]\n"
        f'id = "{check_id}"\n'
        f"pattern = '{meta['pattern']}'\n"
        for check_id, meta in E2E_CHECKS.items()
    )
    config_path = root / "config.toml"
    config_path.write_text(
        'catalog = "checks.toml"\n\n'
        "[context]\n"
        "token_budget = 100000\n\n"
        "[analyzer]\n"
        'kind = "toy"\n'
        f"{rules}\n",
        encoding="utf-8",
    )

    script_path = root / "mock.json"
    script_path.write_text(json.dumps(script, indent=2), encoding="utf-8")
    return {
        "corpus": corpus,
        "catalog": catalog_path,
        "config": config_path,
        "mock": script_path,
    }


@pytest.fixture
def e2e_tree(tmp_path):
    return build_e2e_tree(tmp_path)
