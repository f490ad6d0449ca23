"""Locate the square-lattice site percolation threshold from crossing probabilities.

The top-bottom crossing probability of an n x n square tends to 1/2 at the
threshold; curves for several n cross there. The coarse-graining module
compares its measured block densities against this number.
"""
import argparse

import numpy as np
from scipy import ndimage

from fkslab.renorm import SITE_THRESHOLD_2D
from fkslab.rng import stream


def crossing_probability(n, p, trials, rng):
    hits = 0
    for _ in range(trials):
        labels, _ = ndimage.label(rng.random((n, n)) < p)
        top = np.setdiff1d(labels[0], [0])
        hits += bool(np.intersect1d(top, labels[-1]).size)
    return hits / trials


def half_point(n, trials, seed, lo=0.5, hi=0.7, steps=14):
    """Bisection on a monotone noisy curve; common random keys per step."""
    for k in range(steps):
        mid = 0.5 * (lo + hi)
        if crossing_probability(n, mid, trials, stream(seed, "scan", n, k)) < 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--trials", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"reference value {SITE_THRESHOLD_2D}")
    for n in args.sizes:
        print(f"n={n:4d}  crossing probability 1/2 at p = {half_point(n, args.trials, args.seed):.4f}")


if __name__ == "__main__":
    main()
