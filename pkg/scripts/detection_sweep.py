"""Completion rate and visits as perception gets less reliable.

Not part of the acceptance gate; a quick look at how the fallback loop copes
when the detector misses objects that are really there.
"""

import argparse

from bringme.bench import ExperimentSpec, run_experiment, summarize


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--probs", type=float, nargs="+", default=[1.0, 0.9, 0.7, 0.5])
    parser.add_argument("--repetitions", type=int, default=10)
    args = parser.parse_args()

    print("| detect_prob | approach | situation | completion | visits | inquiries |")
    print("|---|---|---|---|---|---|")
    for p in args.probs:
        records = run_experiment(ExperimentSpec.default(detect_prob=p, repetitions=args.repetitions))
        rate = summarize(records, "success")
        visits = summarize(records, "visits")
        inquiries = summarize(records, "inquiries")
        for key in sorted(rate):
            print(f"| {p:.2f} | {key[0]} | {key[1]} | {100 * rate[key].mean:.1f}% "
                  f"| {visits[key].mean:.2f} | {inquiries[key].mean:.2f} |")


if __name__ == "__main__":
    main()
