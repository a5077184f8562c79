"""Lines and circles of the plane under F~ = |y| / (a|x|^2 + <b, x> + c).

Prints the closed-form verdict for random lines and circles next to the
numerically measured acceleration norm, and the flag curvature 4ac - |b|^2.
"""

import argparse

import numpy as np

from concircular.conformal import (Remark61Family, circle_samples, line_samples, remark61_predicates,
                                   tilde_acceleration_norm)
from concircular.curvature import riemann
from concircular.metric import sample_points


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, default=0.5)
    ap.add_argument("--b", type=float, nargs=2, default=[0.3, -0.2])
    ap.add_argument("--c", type=float, default=1.2)
    ap.add_argument("--count", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    fam = Remark61Family(args.a, tuple(args.b), args.c)
    rng = np.random.default_rng(args.seed)
    s = np.linspace(0, 1, 101)
    print(f"u = {fam.expression()}")
    print(f"predicted flag curvature 4ac - |b|^2 = {fam.curvature():.6f}")
    spec = fam.metric()
    ks = [k for p in sample_points(spec, rng, 3, 2, box=(-0.3, 0.3))
          for _, k in riemann(spec, p, 2, rng).flag_samples]
    print(f"measured flag curvature range [{min(ks):.10f}, {max(ks):.10f}]")

    print("\nlines: kind, closed-form norm, measured norm range")
    for _ in range(args.count):
        xi = rng.standard_normal(2)
        xi /= np.linalg.norm(xi)
        tau = rng.uniform(-0.3, 0.3, 2)
        cls = remark61_predicates(fam, ("line", xi, tau))
        m = tilde_acceleration_norm(fam, line_samples(xi, tau, s))
        print(f"  {cls.kind:9s} {cls.curvature_norm:.8f}  [{m.min():.8f}, {m.max():.8f}]")
    print("\ncircles: kind, closed-form norm, measured norm range")
    for _ in range(args.count):
        k = rng.uniform(0.5, 3)
        ang = rng.uniform(0, 2 * np.pi)
        xi = np.array([np.cos(ang), np.sin(ang)]) / k
        eta = np.array([-xi[1], xi[0]])
        tau = rng.uniform(-0.3, 0.3, 2)
        cls = remark61_predicates(fam, ("circle", xi, eta, tau))
        m = tilde_acceleration_norm(fam, circle_samples(xi, eta, tau, k, s))
        print(f"  {cls.kind:9s} {cls.curvature_norm:.8f}  [{m.min():.8f}, {m.max():.8f}]")


if __name__ == "__main__":
    main()
