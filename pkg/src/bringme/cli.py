"""Command line: ``run`` an experiment grid, ``report`` saved records, ``chat`` interactively."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .bench import ExperimentSpec, emit_report, load_fixtures, read_csv, run_experiment, run_single
from .bench.report import FORMATS, write_csv
from .resolve import APPROACHES, SITUATIONS, ApproachConfig
from .simworld import Inquiry, SimulatedUser


def _load_spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.from_file(args.spec) if args.spec else ExperimentSpec.default()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "parallelism", None) is not None:
        overrides["parallelism"] = args.parallelism
    return replace(spec, **overrides) if overrides else spec


def cmd_run(args) -> int:
    spec = _load_spec(args)
    out = Path(args.out) if args.out else None
    records = run_experiment(spec, log_dir=out / "logs" if out else None)
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.csv").write_text(write_csv(records), encoding="utf-8")
        (out / "report.md").write_text(emit_report(records, "markdown"), encoding="utf-8")
    sys.stdout.write(emit_report(records, args.format))
    return 0


def cmd_report(args) -> int:
    records = read_csv(Path(args.records).read_text(encoding="utf-8"))
    text = emit_report(records, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


class ConsoleUser:
    """Puts the robot's questions to a person at the terminal."""

    def __init__(self, stdin=None, stdout=None):
        self.stdin = stdin or sys.stdin
        self.stdout = stdout or sys.stdout

    def ask(self, inquiry: Inquiry) -> str:
        self.stdout.write(f"robot> {inquiry.question}\nyou> ")
        self.stdout.flush()
        return self.stdin.readline().strip()


def cmd_chat(args) -> int:
    spec = _load_spec(args)
    fixtures = load_fixtures(spec)
    approach = ApproachConfig.named(args.approach, args.situation)
    out = sys.stdout
    user = SimulatedUser.for_world(fixtures.world) if args.simulated_user else ConsoleUser()
    out.write(f"approach {approach.name}, {approach.situation}. Type a command, or 'quit'.\n")
    episode = 0
    while True:
        out.write("command> ")
        out.flush()
        line = sys.stdin.readline()
        if not line or line.strip().lower() in {"quit", "exit"}:
            return 0
        if not line.strip():
            continue
        result = run_single(
            fixtures, approach, line.strip(), (spec.seed, episode), spec.detect_prob,
            episode_id=f"chat|{episode}", user=user,
        )
        episode += 1
        for rec in result.log.records:
            if rec["event"] in {"plan", "visit", "fallback", "llm_call", "grasp", "deliver"}:
                out.write(f"  [{rec['t']:7.1f}s] {rec['event']}: {rec['payload']}\n")
        status = f"found at {result.found_at}" if result.success else f"failed ({result.failure})"
        out.write(
            f"{status}; {result.visits} visit(s), {result.n_inquiries} question(s), "
            f"{result.llm_calls} model call(s), {result.time_s:.1f}s\n"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bringme", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment spec with the simulated user")
    run.add_argument("--spec", help="experiment JSON (default: bundled protocol)")
    run.add_argument("--out", help="directory for records.csv, report.md and logs/")
    run.add_argument("--seed", type=int)
    run.add_argument("--parallelism", type=int)
    run.add_argument("--format", choices=FORMATS, default="markdown", help="what to print to stdout")
    run.set_defaults(func=cmd_run)

    report = sub.add_parser("report", help="render a records CSV")
    report.add_argument("--records", required=True)
    report.add_argument("--format", choices=FORMATS, default="markdown")
    report.add_argument("--out")
    report.set_defaults(func=cmd_report)

    chat = sub.add_parser("chat", help="interactive session; you answer the robot's questions")
    chat.add_argument("--spec")
    chat.add_argument("--approach", choices=list(APPROACHES), default="OKB+LLM")
    chat.add_argument("--situation", choices=list(SITUATIONS), default="with_defaults")
    chat.add_argument("--simulated-user", action="store_true", help="let the truthful simulated user answer")
    chat.add_argument("--seed", type=int)
    chat.set_defaults(func=cmd_chat)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)
