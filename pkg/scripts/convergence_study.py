"""RK4 error against step size for a Euclidean circle, with the observed order.

    python scripts/convergence_study.py --steps 0.04 0.02 0.01 0.005
"""

import argparse

import numpy as np

from concircular.circles import CircleInit, euclidean_circle_samples, integrate
from concircular.metric import Euclidean


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=float, nargs="+", default=[0.04, 0.02, 0.01, 0.005])
    ap.add_argument("--s-max", type=float, default=np.pi)
    ap.add_argument("--k", type=float, default=2.0, help="curvature of the circle")
    args = ap.parse_args()

    spec = Euclidean(2)
    x0, u, v = np.array([0.1, -0.2]), np.array([0.6, 0.8]), args.k * np.array([-0.8, 0.6])
    prev = None
    print(f"{'step':>10} {'max error':>12} {'order':>7}")
    for h in sorted(args.steps, reverse=True):
        traj = integrate(spec, CircleInit(x0, u, v), args.s_max, h)
        err = np.abs(traj.gamma - euclidean_circle_samples(x0, u, v, traj.s)[0]).max()
        order = "" if prev is None else f"{np.log(prev[1] / err) / np.log(prev[0] / h):7.3f}"
        print(f"{h:10.4g} {err:12.3e} {order:>7}")
        prev = (h, err)


if __name__ == "__main__":
    main()
