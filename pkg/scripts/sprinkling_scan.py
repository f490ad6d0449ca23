"""Frequency of the uniqueness event and of a single final U class against the
sprinkling intensity, under free and wired outer boundaries."""
import argparse

from fkslab.events import unique_frequency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=32)
    ap.add_argument("--delta", type=float, default=0.5)
    ap.add_argument("--p", type=float, default=0.40)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.0, 0.01, 0.05, 0.1])
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for bc in ("free", "wired"):
        for eps in args.eps:
            res = unique_frequency(args.L, args.delta, args.p, eps, samples=args.samples, seed=args.seed,
                                   segments=4, burn_in=200, thin=5, bc=bc)
            cells = "  ".join(f"{r.observable}={r.estimate:.3f}+-{r.stderr:.3f}" for r in res)
            print(f"{bc:5s} eps={eps:<5} {cells}")


if __name__ == "__main__":
    main()
