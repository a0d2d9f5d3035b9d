"""Command-line front end.

Exit codes: 0 every honest participant decided and every property held,
2 some honest participant is undecided, 3 a property was violated,
1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path
from typing import Optional

from ..sim.explore import explore_schedules
from ..sim.properties import check_properties, split_intact
from ..sim.scenario import ConfigError, ScenarioConfig, impossibility_config, lemma1_config, parse_scenario
from ..sim.simulator import run_scenario
from ..sim.transcript import TranscriptFormatError, Transcript, read_transcript, write_transcript
from .stats import aggregate, sweep

TRACE_DIR_ENV = "CASPER_ABFT_TRACE_DIR"

EXIT_OK, EXIT_USAGE, EXIT_UNDECIDED, EXIT_VIOLATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _load_scenario(path: str) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text)


def trace_path(requested: Optional[str], config: ScenarioConfig) -> Optional[Path]:
    """Where to write a transcript; the environment variable moves it into its directory."""
    env = os.environ.get(TRACE_DIR_ENV)
    if env:
        name = Path(requested).name if requested else f"{config.scenario_id}-seed{config.seed}.tsv"
        return Path(env) / name
    return Path(requested) if requested else None


def _parse_seeds(spec: str) -> range:
    m = re.fullmatch(r"(\d+)\.\.(\d+)", spec.strip())
    if not m:
        raise UsageError(f"--seeds expects LO..HI, got {spec!r}")
    lo, hi = int(m.group(1)), int(m.group(2))
    if hi < lo:
        raise UsageError(f"empty seed range {spec!r}")
    return range(lo, hi + 1)


def _outcome_lines(tr: Transcript) -> list[str]:
    lines = []
    for p in sorted(tr.outcomes):
        o = tr.outcomes[p]
        lines.append(f"P{p}: " + ("undecided" if o is None else f"decided {o[0]} at step {o[1]}"))
    lines.append(f"status: {tr.status}, {len(tr.events)} events")
    return lines


def _report(tr: Transcript, quiet: bool, trace: Optional[str]) -> int:
    path = trace_path(trace, tr.config)
    if path is not None:
        write_transcript(tr, path)
    report = check_properties(tr)
    if not quiet:
        print(f"scenario {tr.config.scenario_id} seed={tr.config.seed}")
        for line in _outcome_lines(tr) + report.lines():
            print(line)
        if path is not None:
            print(f"trace written to {path}")
    return report.exit_code()


def cmd_run(args) -> int:
    config = _load_scenario(args.scenario)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return _report(run_scenario(config), args.quiet, args.trace)


def cmd_sweep(args) -> int:
    config = _load_scenario(args.scenario)
    seeds = _parse_seeds(args.seeds)
    records = sweep(config, seeds, workers=args.workers)
    summary = aggregate(records)
    doc = summary.to_dict()
    doc["runs"] = [
        {"seed": r.seed, "decided": r.decided, "steps": r.steps, "exit_code": r.exit_code} for r in records
    ]
    Path(args.summary).parent.mkdir(parents=True, exist_ok=True)
    Path(args.summary).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    mean = "n/a" if summary.mean_steps is None else f"{summary.mean_steps:.2f}"
    print(
        f"scenario {summary.scenario_id}: {summary.seeds_run} seeds, {summary.decisions} decided, "
        f"{summary.agreement_violations} agreement violations, mean steps {mean}, max steps {summary.max_steps}"
    )
    return summary.exit_code


def cmd_check(args) -> int:
    try:
        tr = read_transcript(args.trace)
    except OSError as exc:
        raise UsageError(f"cannot read trace {args.trace}: {exc.strerror}") from None
    report = check_properties(tr)
    for line in report.lines():
        print(line)
    return report.exit_code()


def cmd_demo(args) -> int:
    if args.demo == "impossibility":
        if args.t < 1:
            raise UsageError("--t must be at least 1")
        tr = run_scenario(impossibility_config(args.t, seed=args.seed))
        code = _report(tr, args.quiet, args.trace)
        intact, broken = split_intact(tr)
        if not args.quiet:
            decided = sum(o is not None for o in tr.outcomes.values())
            print(f"decisions: {decided}")
            print("estimate split intact at every step" if intact else f"estimate split broken at step {broken}")
        return code
    tr = run_scenario(lemma1_config(args.n, value=args.value, seed=args.seed))
    return _report(tr, args.quiet, args.trace)


def cmd_explore(args) -> int:
    config = _load_scenario(args.scenario)
    if config.n > 4:
        raise UsageError("exhaustive exploration supports n <= 4")
    if args.depth < 0:
        raise UsageError("--depth must be non-negative")
    report = explore_schedules(config, args.depth)
    print(report.summary())
    for name, accepted in report.violations[:10]:
        print(f"violation {name}: {accepted}")
    if report.violations:
        return EXIT_VIOLATION
    return EXIT_OK if report.complete else EXIT_UNDECIDED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="casper-abft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--scenario", required=True, metavar="FILE")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", metavar="PATH")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one scenario over a seed range")
    p.add_argument("--scenario", required=True, metavar="FILE")
    p.add_argument("--seeds", required=True, metavar="LO..HI", help="inclusive range")
    p.add_argument("--summary", required=True, metavar="PATH")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="re-check the properties of a stored transcript")
    p.add_argument("--trace", required=True, metavar="PATH")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("demo", help="canned demonstrations")
    demos = p.add_subparsers(dest="demo", required=True)
    d = demos.add_parser("impossibility", help="split-vote livelock under the unrevised rules")
    d.add_argument("--t", type=int, required=True)
    d = demos.add_parser("lemma1", help="unanimous input decides at step 0")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--value", type=int, choices=(0, 1), default=0)
    for d in demos.choices.values():
        d.add_argument("--seed", type=int, default=1)
        d.add_argument("--trace", metavar="PATH")
        d.add_argument("--quiet", action="store_true")
        d.set_defaults(func=cmd_demo)

    p = sub.add_parser("explore", help="exhaustive schedules of one broadcast instance")
    p.add_argument("--scenario", required=True, metavar="FILE")
    p.add_argument("--depth", type=int, required=True)
    p.set_defaults(func=cmd_explore)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, TranscriptFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
