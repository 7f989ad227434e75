"""Command-line entry point: run scenarios against their assertions, classify
agent descriptors into the audit report, and replay seeded leader elections."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .classifier import audit, load_bundled_descriptors, load_descriptors
from .consensus import run_election
from .harness import ScenarioRun, load_scenario, run_scenario
from .report import report_csv, report_json, report_text, write_report_bundle


def _cmd_run(args: argparse.Namespace) -> int:
    paths = [Path(p) for p in args.scenario]
    multiple = len(paths) > 1

    def one(path: Path) -> ScenarioRun:
        spec = load_scenario(path)
        return run_scenario(spec, seed_override=args.seed)

    if multiple and args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            runs = list(pool.map(one, paths))
    else:
        runs = [one(path) for path in paths]

    exit_code = 0
    for path, run in zip(paths, runs):
        if args.trace:
            trace_path = Path(args.trace)
            if multiple:
                trace_path.mkdir(parents=True, exist_ok=True)
                trace_path = trace_path / f"{run.scenario_id}.jsonl"
            trace_path.parent.mkdir(parents=True, exist_ok=True)
            trace_path.write_text(run.trace.to_jsonl(), encoding="utf-8")
        if args.memory_dump:
            Path(args.memory_dump).write_text(
                json.dumps(run.memory_dump(), indent=2) + "\n",
                encoding="utf-8")
        for result in run.results:
            status = "PASS" if result.passed else "FAIL"
            print(f"[{run.scenario_id}] {status} {result.assertion.description}"
                  f" ({result.detail})")
        summary = "all assertions passed" if run.passed \
            else "assertion failures"
        print(f"[{run.scenario_id}] seed={run.seed} "
              f"events={len(run.trace.events)}: {summary}")
        if not run.passed:
            exit_code = 1
    return exit_code


def _cmd_classify(args: argparse.Namespace) -> int:
    if args.file == "bundled":
        descriptors = load_bundled_descriptors()
    else:
        descriptors = load_descriptors(args.file)
    report = audit(descriptors)
    if args.report:
        if args.format == "json":
            sys.stdout.write(report_json(report))
        elif args.format == "csv":
            sys.stdout.write(report_csv(descriptors))
        else:
            sys.stdout.write(report_text(report))
    if args.out:
        created = write_report_bundle(descriptors, report, args.out)
        for path in created:
            print(f"wrote {path}")
    return 0


def _cmd_elect(args: argparse.Namespace) -> int:
    result = run_election(n_nodes=args.nodes, drop_prob=args.drop,
                          seed=args.seed, max_ticks=args.max_ticks,
                          delay=(args.delay_min, args.delay_max))
    lines = "".join(json.dumps(event) + "\n" for event in result.events)
    if args.trace:
        Path(args.trace).write_text(lines, encoding="utf-8")
    else:
        sys.stdout.write(lines)
    if result.timed_out:
        print(f"outcome: no leader within {result.ticks_elapsed} ticks "
              f"(seed {args.seed})")
    else:
        print(f"outcome: leader={result.leader} term={result.term} "
              f"ticks={result.ticks_elapsed} (seed {args.seed})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="umf",
        description="Deterministic multi core-agent orchestration harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run scenario files and check their "
                                       "trace assertions")
    run_p.add_argument("scenario", nargs="+",
                       help="path(s) to scenario JSON files")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    run_p.add_argument("--trace", default=None,
                       help="write the trace as JSON lines (a directory when "
                            "running several scenarios)")
    run_p.add_argument("--memory-dump", default=None,
                       help="write every agent's memory store to a JSON file")
    run_p.add_argument("--jobs", type=int, default=1,
                       help="run distinct scenarios concurrently")
    run_p.set_defaults(func=_cmd_run)

    classify_p = sub.add_parser("classify", help="classify agent descriptors "
                                                 "and print the audit report")
    classify_p.add_argument("file",
                            help="descriptor JSON file, or 'bundled' for the "
                                 "packaged fixtures")
    classify_p.add_argument("--report", action="store_true",
                            help="print the audit report")
    classify_p.add_argument("--format", choices=("text", "json", "csv"),
                            default="text")
    classify_p.add_argument("--out", default=None,
                            help="directory for the delimited rows and the "
                                 "rendered figures")
    classify_p.set_defaults(func=_cmd_classify)

    elect_p = sub.add_parser("elect", help="replay one seeded leader election")
    elect_p.add_argument("--nodes", type=int, required=True)
    elect_p.add_argument("--drop", type=float, default=0.0)
    elect_p.add_argument("--seed", type=int, default=1)
    elect_p.add_argument("--max-ticks", type=int, default=100)
    elect_p.add_argument("--delay-min", type=int, default=1)
    elect_p.add_argument("--delay-max", type=int, default=2)
    elect_p.add_argument("--trace", default=None,
                         help="write election events as JSON lines")
    elect_p.set_defaults(func=_cmd_elect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
