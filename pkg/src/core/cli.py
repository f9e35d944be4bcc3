"""Command-line surface: ``core run``, ``core run-all``, ``core report``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, load_config_file
from .errors import CoreError
from .llm import DEFAULT_PLAN, SamplingPlan
from .pipeline import run_all, run_pipeline
from .report import PipelineReport, render_markdown


def _add_run_arguments(parser: argparse.ArgumentParser, with_check: bool) -> None:
    parser.add_argument("--config", required=True, help="TOML config file")
    if with_check:
        parser.add_argument("--check", required=True, help="check id from the catalog")
    parser.add_argument("--corpus", required=True, help="directory of source files")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--catalog", help="catalog file (overrides config)")
    parser.add_argument(
        "--samples-plan",
        help='sampling plan, e.g. "0:1,0.75:6,1.0:3"',
    )
    parser.add_argument("--mock-llm", help="scripted mock backend (JSON script file)")
    parser.add_argument("--replay", help="record/replay cache file")
    parser.add_argument("--dump-prompts", help="write rendered prompts to this directory")
    parser.add_argument("--work-dir", help="scratch area for candidate validation")
    parser.add_argument("--keep-work", action="store_true")
    parser.add_argument("--include-rejected", action="store_true")
    parser.add_argument("--workers", type=int, default=0, help="worker pool size (0 = cpu count)")


def _build_run_config(args, check_id: str) -> RunConfig:
    sections = load_config_file(args.config)
    catalog = args.catalog or sections["catalog"]
    if catalog is None:
        raise CoreError("no catalog path: pass --catalog or set 'catalog' in config")
    catalog_path = Path(catalog)
    if not catalog_path.is_absolute():
        catalog_path = Path(args.config).parent / catalog_path
    plan = SamplingPlan.parse(args.samples_plan) if args.samples_plan else DEFAULT_PLAN
    return RunConfig(
        catalog_path=catalog_path,
        check_id=check_id,
        corpus=Path(args.corpus),
        out_dir=Path(args.out),
        plan=plan,
        workers=args.workers,
        llm=sections["llm"],
        context=sections["context"],
        analyzer=sections["analyzer"],
        syntax=sections["syntax"],
        mock_script_path=Path(args.mock_llm) if args.mock_llm else None,
        replay_path=Path(args.replay) if args.replay else None,
        dump_prompts=Path(args.dump_prompts) if args.dump_prompts else None,
        work_dir=Path(args.work_dir) if args.work_dir else None,
        keep_work=args.keep_work,
        include_rejected=args.include_rejected,
    )


def _cmd_run(args) -> int:
    config = _build_run_config(args, args.check)
    report = run_pipeline(config)
    print(render_markdown(report), end="")
    return 0


def _cmd_run_all(args) -> int:
    config = _build_run_config(args, check_id="")
    report = run_all(config)
    print(render_markdown(report), end="")
    return 0


def _cmd_report(args) -> int:
    report = PipelineReport.from_json(Path(args.infile).read_text(encoding="utf-8"))
    if args.format == "md":
        print(render_markdown(report), end="")
    else:
        print(report.to_json(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="core",
        description="Revise code flagged by static analysis, prune with the analyzer, "
        "rank with a scoring model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one check over a corpus")
    _add_run_arguments(run_parser, with_check=True)
    run_parser.set_defaults(func=_cmd_run)

    all_parser = sub.add_parser("run-all", help="run every catalog check over a corpus")
    _add_run_arguments(all_parser, with_check=False)
    all_parser.set_defaults(func=_cmd_run_all)

    report_parser = sub.add_parser("report", help="re-render a report file")
    report_parser.add_argument("--in", dest="infile", required=True)
    report_parser.add_argument("--format", choices=("md", "json"), default="md")
    report_parser.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CoreError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
