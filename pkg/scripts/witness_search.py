"""Random search for a concircular field whose Lie derivative of the mean
Cartan torsion does not vanish.  Not finding one is the expected outcome.
"""

import argparse

import numpy as np

from concircular.fields import search_theorem1_witness
from concircular.metric import metric_from_dict

METRICS = {
    "randers": {"family": "randers", "dim": 2, "beta": ["0.2 + 0.1*x2", "0.1*x1"]},
    "quartic": {"family": "minkowski", "dim": 2, "norm": "(y1**4 + y2**4 + y1**2*y2**2)**0.25"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--metric", choices=sorted(METRICS), default="randers")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = metric_from_dict(METRICS[args.metric])
    hit = search_theorem1_witness(spec, np.random.default_rng(args.seed), args.trials, degree=args.degree)
    if hit is None:
        print(f"no witness among {args.trials} random degree-{args.degree} fields")
    else:
        V, rep = hit
        print("witness found:", V.to_dict())
        print(rep.summary())


if __name__ == "__main__":
    main()
