"""The ``cruise`` command line: harvesting, preprocessing, the LLM
stages, reports, import/export, metrics, and the review server."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from . import ingest, metrics, preprocess
from .config import AppConfig, ConfigError, load_config
from .models import SampleSpec, split_issue_ref
from .pipeline import Pipeline, RunReport
from .store import Store, StoreError

STAGE_FOR_COMMAND = {
    "match": ("match",),
    "generate": ("generate",),
    "assess": ("assess",),
    "run": ("match", "generate", "assess"),
}


def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the YAML config file")


def _add_sampling(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override sampling seed")
    parser.add_argument("--stories", type=int, default=None, help="override story sample size")
    parser.add_argument("--issues", type=int, default=None, help="override issue sample size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cruise",
        description="Mine issue trackers into reviewed Gherkin acceptance criteria.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", help="fetch issues from the configured trackers")
    _add_config(p)
    p.add_argument("--tracker", default=None, help="harvest only this tracker")

    p = sub.add_parser("preprocess", help="reduce raw issues to requirement-bearing text")
    _add_config(p)

    p = sub.add_parser("import-stories", help="import user stories from a CSV file")
    _add_config(p)
    p.add_argument("--file", required=True, help="CSV with id, project, text, acceptance_criteria, language")

    for command in ("match", "generate", "assess", "run"):
        p = sub.add_parser(command, help=f"run the {command} stage" if command != "run" else "run all three stages")
        _add_config(p)
        _add_sampling(p)

    p = sub.add_parser("report", help="print the run report for the sampled sets")
    _add_config(p)
    _add_sampling(p)
    p.add_argument("--csv", default=None, help="also write the report as CSV to this path")

    p = sub.add_parser("export", help="export a store entity to CSV or JSON lines")
    _add_config(p)
    p.add_argument("--entity", required=True)
    p.add_argument("--format", required=True, choices=("csv", "jsonl"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="agreement statistics for an annotation CSV")
    p.add_argument("--annotations", required=True, help="CSV with item_id, rater_id, decision")
    p.add_argument("--consensus-m", type=int, default=3, help="approvals needed for consensus")
    p.add_argument("--json", action="store_true", help="print one JSON object instead of text")

    p = sub.add_parser("serve", help="start the review HTTP service")
    _add_config(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui-dir", default=None, help="directory with the built review UI")

    return parser


def _sample_spec(config: AppConfig, args: argparse.Namespace) -> SampleSpec:
    spec = config.sample
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.stories is not None:
        spec = replace(spec, story_count=args.stories)
    if args.issues is not None:
        spec = replace(spec, issue_count=args.issues)
    return spec


def _pipeline(config: AppConfig, store: Store) -> Pipeline:
    return Pipeline(
        store,
        config.build_ensemble(),
        config.build_generator(),
        config.build_assessor(),
        config.domain_description,
        translator=config.build_translator(),
    )


def cmd_harvest(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    trackers = config.trackers
    if args.tracker is not None:
        trackers = [t for t in trackers if t.name == args.tracker]
        if not trackers:
            print(f"error: no tracker named {args.tracker!r} in config", file=sys.stderr)
            return 2
    if not trackers:
        print("error: no trackers configured", file=sys.stderr)
        return 2
    with config.build_store() as store:
        total = 0
        for tracker in trackers:
            emitted = ingest.harvest(tracker, config.harvest_filter, store)
            print(f"{tracker.name}: {len(emitted)} issues stored")
            total += len(emitted)
        print(f"total: {total}")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    scorer = config.build_trivia_scorer()
    with config.build_store() as store:
        issues = store.list_raw_issues()
        results = preprocess.preprocess_corpus(
            issues, scorer=scorer, drop_sections=config.section_drop
        )
        for outcome in results:
            store.put_preprocessed(outcome)
        by_tracker: dict[str, list[bool]] = {}
        for issue, outcome in zip(issues, results):
            by_tracker.setdefault(issue.tracker, []).append(not outcome.dropped)
        width = max([len(t) for t in by_tracker], default=7)
        width = max(width, len("tracker"))
        print(f"{'tracker':<{width}}  {'downloaded':>10}  {'remaining':>9}")
        for tracker in sorted(by_tracker):
            kept = by_tracker[tracker]
            print(f"{tracker:<{width}}  {len(kept):>10}  {sum(kept):>9}")
        print(f"{'total':<{width}}  {len(issues):>10}  {sum(not r.dropped for r in results):>9}")
    return 0


def cmd_import_stories(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    with config.build_store() as store:
        count, errors = store.import_user_stories(args.file)
    for line_no, message in errors:
        print(f"line {line_no}: {message}", file=sys.stderr)
    print(f"imported {count} user stories ({len(errors)} rejected)")
    return 0


def cmd_stage(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    spec = _sample_spec(config, args)
    with config.build_store() as store:
        pipeline = _pipeline(config, store)
        report = pipeline.run(spec, stages=STAGE_FOR_COMMAND[args.command])
    print(report.to_text())
    return 0 if not report.pending else 1


def cmd_report(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    spec = _sample_spec(config, args)
    with config.build_store() as store:
        pipeline = _pipeline(config, store)
        report = pipeline.build_report(spec)
    print(report.to_text())
    if args.csv:
        path = Path(args.csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as out:
            writer = csv.writer(out)
            writer.writerow(("metric", "value"))
            writer.writerows(report.to_csv_rows())
        print(f"csv written to {path}")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    with config.build_store() as store:
        count = store.export(args.entity, args.format, args.out)
    print(f"exported {count} records to {args.out}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    matrix = metrics.load_annotations_csv(args.annotations)
    report = metrics.agreement_report(matrix, args.consensus_m)
    print(report.to_json() if args.json else report.to_text())
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    ui_dir = Path(args.ui_dir) if args.ui_dir else config.ui_dir
    store = config.build_store()
    app = create_app(
        store,
        threshold_m=config.threshold_m,
        panel_n=config.panel_n,
        queue_seed=config.sample.seed,
        criteria_per_story_cap=config.sample.criteria_per_story_cap,
        ui_dir=ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


HANDLERS = {
    "harvest": cmd_harvest,
    "preprocess": cmd_preprocess,
    "import-stories": cmd_import_stories,
    "match": cmd_stage,
    "generate": cmd_stage,
    "assess": cmd_stage,
    "run": cmd_stage,
    "report": cmd_report,
    "export": cmd_export,
    "metrics": cmd_metrics,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except (ConfigError, StoreError, ingest.TrackerConfigError, metrics.AnnotationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ingest.HarvestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
