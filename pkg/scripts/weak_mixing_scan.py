"""Influence of the far boundary on the root edge of a half box, against K."""
import argparse

from fkslab.ising import weak_mixing_gap


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--Ks", type=int, nargs="+", default=[1, 2, 3, 4, 6])
    ap.add_argument("--p", type=float, default=0.40)
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--samples", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for K in args.Ks:
        r = weak_mixing_gap(K, args.s, args.p, samples=args.samples, seed=args.seed, d=args.d, segments=4,
                            burn_in=300, thin=2)
        print(f"K={K:2d}  gap={r.estimate:+.4f} +- {r.stderr:.4f}   "
              f"wired={r.extra['wired']:.4f} free={r.extra['free']:.4f}")


if __name__ == "__main__":
    main()
