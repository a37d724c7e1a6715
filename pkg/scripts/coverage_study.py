"""Replication study of effect estimates on the reference design.

    python scripts/coverage_study.py --reps 500 --n 10000 --kernel bartlett

Coverage rates at a few dozen replications are too noisy to judge against the
[0.92, 0.98] band; use several hundred.
"""

import argparse

import numpy as np

from abmediation.effects import EFFECT_KEYS
from abmediation.gmm import HacConfig
from abmediation.validation import coverage_checks, delta_checks, reference_spec, sampling_study


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", choices=["lag0", "bartlett"], default="lag0")
    args = p.parse_args()

    study = sampling_study(reference_spec(), args.reps, args.n, args.seed, HacConfig(args.kernel))
    sd = study.values.std(axis=0, ddof=1)
    print(f"{'effect':8s} {'truth':>10s} {'mean est':>10s} {'rep SD':>10s} {'mean SE':>10s}")
    for i, key in enumerate(EFFECT_KEYS):
        print(f"{key:8s} {study.truth[key]:10.4f} {study.values[:, i].mean():10.4f} "
              f"{sd[i]:10.5f} {study.std_errors[:, i].mean():10.5f}")
    print()
    for c in delta_checks(study) + coverage_checks(study):
        print(c.line())
    bias = np.abs(study.values.mean(axis=0) - [study.truth[k] for k in EFFECT_KEYS]) / (sd / np.sqrt(args.reps))
    print(f"\nlargest |bias| in Monte Carlo SEs: {bias.max():.2f}")


if __name__ == "__main__":
    main()
