"""Coarse-grained site field on a slab: block density, conditional floor and
connection frequencies, next to the site percolation threshold."""
import argparse
import json

from fkslab.renorm import renorm_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--L", type=int, default=8)
    ap.add_argument("--N", type=int, default=32)
    ap.add_argument("--p", type=float, default=0.42)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--delta", type=float, default=1.0)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rep = renorm_pipeline(args.L, args.N, args.p, args.eps, args.delta, samples=args.samples, seed=args.seed,
                          segments=2, burn_in=300, thin=5)
    rep.pop("fields")
    verdict = "above" if rep["alpha_hat"] > rep["site_threshold"] else "not above"
    print(json.dumps(rep, indent=2, default=str))
    print(f"conditional floor {rep['alpha_hat']:.3f} is {verdict} the site threshold {rep['site_threshold']}")


if __name__ == "__main__":
    main()
