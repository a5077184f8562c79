"""Metric families, fields and helpers shared by the tests."""

import numpy as np

from concircular.circles import CircleInit, local_quantities
from concircular.metric import ConformalScale, Euclidean, MinkowskiNorm, Randers, Riemannian

EUCLID2 = Euclidean(2)
EUCLID3 = Euclidean(3)
RIEM2 = Riemannian(2, [["1 + 0.2*x1**2", "0.1*x1*x2"], ["0.1*x1*x2", "1 + 0.3*sin(x2)"]])
QUARTIC = MinkowskiNorm(2, "(y1**4 + y2**4 + y1**2*y2**2)**0.25")
RANDERS2 = Randers(2, None, ["0.2 + 0.1*x2", "0.1*x1"])
RANDERS_ALPHA = Randers(2, [["1 + 0.1*x2**2", "0"], ["0", "1.2"]], ["0.15*x1", "0.1 + 0.05*x2"])
CONFORMAL2 = ConformalScale(RANDERS2, "1 + 0.2*x1**2 + 0.1*x2")
MINK3 = MinkowskiNorm(3, "sqrt(y1**2 + sqrt((y2**2 + y3**2)**2 + 0.5*(y2**4 + y3**4)))")

FAMILIES = {
    "euclidean": EUCLID2,
    "riemannian": RIEM2,
    "minkowski": QUARTIC,
    "randers": RANDERS2,
    "conformal": CONFORMAL2,
}


def admissible_init(spec, x0, w1, w2, kappa):
    """Unit velocity along w1 and covariant acceleration of g-norm kappa along w2."""
    x0 = np.asarray(x0, float)
    w1, w2 = np.asarray(w1, float), np.asarray(w2, float)
    u = w1 / float(spec.F(x0, w1))
    g = local_quantities(spec, x0, u).g
    v = w2 - (u @ g @ w2) * u
    v = kappa * v / np.sqrt(v @ g @ v)
    return CircleInit(x0, u, v)


def random_tangent_points(spec, rng, count, box=(-0.5, 0.5)):
    from concircular.metric import TangentPoint

    out = []
    for _ in range(count):
        x = rng.uniform(*box, spec.dim)
        y = rng.standard_normal(spec.dim)
        out.append(TangentPoint(x, y / float(spec.F(x, y))))
    return out


def richardson_gradient(f, x, h=1e-3):
    """Central differences with one Richardson step, O(h^4)."""
    x = np.asarray(x, float)

    def cd(h):
        return np.stack([(np.asarray(f(x + h * e)) - np.asarray(f(x - h * e))) / (2 * h)
                         for e in np.eye(len(x))], axis=-1)

    return (4 * cd(h / 2) - cd(h)) / 3
