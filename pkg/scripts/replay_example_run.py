"""Replay one episode and print its event log.

By default this is the apple search without default locations: the model
proposes cabinet_kitchen first and the robot finds the apple at the second stop.
"""

import argparse
import json

from bringme.bench import ExperimentSpec
from bringme.bench.runner import load_fixtures, run_single
from bringme.resolve import APPROACHES, SITUATIONS, ApproachConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("command", nargs="?", default="Find an apple.")
    parser.add_argument("--approach", choices=list(APPROACHES), default="OKB+LLM")
    parser.add_argument("--situation", choices=list(SITUATIONS), default="without_defaults")
    parser.add_argument("--detect-prob", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    fixtures = load_fixtures(ExperimentSpec.default())
    result = run_single(
        fixtures, ApproachConfig.named(args.approach, args.situation), args.command,
        seed=args.seed, detect_prob=args.detect_prob, episode_id="replay",
    )
    for rec in result.log.records:
        print(f"{rec['t']:8.1f}s  {rec['event']:<16} {json.dumps(rec['payload'])}")
    print()
    print(f"success={result.success} found_at={result.found_at} visits={result.visits} "
          f"inquiries={result.n_inquiries} llm_calls={result.llm_calls} time={result.time_s:.1f}s")


if __name__ == "__main__":
    main()
