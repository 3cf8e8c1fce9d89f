"""Run the bundled experiment grid and write records, report and logs.

    python3 scripts/reproduce_tables.py --out results/
"""

import argparse
import time
from pathlib import Path

from bringme.bench import ExperimentSpec, emit_report, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--spec", help="experiment JSON; defaults to the bundled one")
    parser.add_argument("--repetitions", type=int)
    args = parser.parse_args()

    spec = ExperimentSpec.from_file(args.spec) if args.spec else ExperimentSpec.default()
    if args.repetitions:
        spec.repetitions = args.repetitions
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    records = run_experiment(spec, log_dir=out / "logs")
    elapsed = time.perf_counter() - started

    (out / "records.csv").write_text(emit_report(records, "csv"), encoding="utf-8")
    markdown = emit_report(records, "markdown")
    (out / "report.md").write_text(markdown, encoding="utf-8")
    print(markdown)
    print(f"{len(records)} episodes in {elapsed:.2f}s; outputs in {out}/")


if __name__ == "__main__":
    main()
