"""Finsler metric families and the fundamental tensors derived from F².

Every family exposes ``F2(x, y)`` written in jet arithmetic, so the same
code evaluates on floats and on Taylor jets.  All derived tensors come out
of :class:`MetricJets`, which expands F² once around a tangent point and
differentiates the expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr, jets
from .errors import ConfigError, ConvexityError, DomainError
from .jets import JetConfig, einsum

EIG_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class TangentPoint:
    """A point (x, y) of the slit tangent bundle."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise ValueError(f"x and y differ in dimension: {x.shape} vs {y.shape}")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise DomainError("non-finite tangent point")
        if not np.any(y):
            raise DomainError("y = 0 is outside the slit tangent bundle")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def dim(self):
        return len(self.x)

    def scaled(self, lam):
        return TangentPoint(self.x, lam * self.y)


def _as_function(value, dim, allow_y=False):
    """Accept a number, an expression string or a callable of (x[, y])."""
    if callable(value) and not isinstance(value, expr.Expression):
        return value, None
    if isinstance(value, expr.Expression):
        return value, value.source
    if isinstance(value, (int, float, np.floating, np.integer)):
        c = float(value)
        return (lambda x, y=None: c), repr(c)
    if isinstance(value, str):
        e = expr.parse(value, dim, allow_y=allow_y)
        return e, value
    raise ConfigError(f"cannot interpret {value!r} as a function")


def _source(src, what):
    if src is None:
        raise ConfigError(f"{what} was given as a Python callable and cannot be serialized")
    return src


class MetricSpec:
    """Base class for metric families; subclasses define ``F2``."""

    family = "abstract"
    dim: int

    def F2(self, x, y):
        raise NotImplementedError

    def F(self, x, y):
        return jets.sqrt(self.F2(x, y))

    def check_point(self, x):
        """Raise :class:`DomainError` if ``x`` is outside the family's domain."""

    def to_dict(self):
        raise NotImplementedError


@dataclass(eq=False)
class Euclidean(MetricSpec):
    dim: int
    family = "euclidean"

    def F2(self, x, y):
        return sum(y[i] * y[i] for i in range(self.dim))

    def to_dict(self):
        return {"family": self.family, "dim": self.dim}


@dataclass(eq=False)
class Riemannian(MetricSpec):
    """F² = A_ij(x) y^i y^j for a positive definite matrix function A."""

    dim: int
    A: list
    family = "riemannian"
    _fns: list = field(init=False, repr=False)
    _src: list = field(init=False, repr=False)

    def __post_init__(self):
        if callable(self.A):
            fn = self.A
            self._fns = [[(lambda i, j: (lambda x, y=None: fn(x)[i][j]))(i, j) for j in range(self.dim)]
                         for i in range(self.dim)]
            self._src = None
            return
        rows = list(self.A)
        if len(rows) != self.dim or any(len(r) != self.dim for r in rows):
            raise ConfigError(f"A must be {self.dim}x{self.dim}")
        parsed = [[_as_function(a, self.dim) for a in r] for r in rows]
        self._fns = [[f for f, _ in r] for r in parsed]
        self._src = [[s for _, s in r] for r in parsed]

    def matrix(self, x):
        return [[self._fns[i][j](x) for j in range(self.dim)] for i in range(self.dim)]

    def F2(self, x, y):
        A = self.matrix(x)
        n = self.dim
        return sum(A[i][j] * y[i] * y[j] for i in range(n) for j in range(n))

    def to_dict(self):
        if self._src is None:
            _source(None, "A")
        return {"family": self.family, "dim": self.dim,
                "A": [[_source(s, "A") for s in r] for r in self._src]}


@dataclass(eq=False)
class MinkowskiNorm(MetricSpec):
    """An x-independent norm given by an expression in y."""

    dim: int
    norm: object
    family = "minkowski"

    def __post_init__(self):
        if isinstance(self.norm, str):
            e = expr.parse(self.norm, self.dim, allow_y=True)
            if any(f"x{i + 1}" in self.norm for i in range(self.dim)):
                raise ConfigError("a Minkowski norm may not depend on x")
            self._fn, self._src = e, self.norm
        else:
            self._fn, self._src = _as_function(self.norm, self.dim, allow_y=True)

    def F(self, x, y):
        return self._fn(x, y)

    def F2(self, x, y):
        f = self._fn(x, y)
        return f * f

    def to_dict(self):
        return {"family": self.family, "dim": self.dim, "norm": _source(self._src, "norm")}


@dataclass(eq=False)
class Randers(MetricSpec):
    """F = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i."""

    dim: int
    alpha: list
    beta: list
    family = "randers"

    def __post_init__(self):
        n = self.dim
        if self.alpha is None:
            self.alpha = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
        if len(self.alpha) != n or any(len(r) != n for r in self.alpha) or len(self.beta) != n:
            raise ConfigError("alpha must be n x n and beta of length n")
        pa = [[_as_function(a, n) for a in r] for r in self.alpha]
        pb = [_as_function(b, n) for b in self.beta]
        self._a = [[f for f, _ in r] for r in pa]
        self._a_src = [[s for _, s in r] for r in pa]
        self._b = [f for f, _ in pb]
        self._b_src = [s for _, s in pb]

    def alpha_matrix(self, x):
        return [[self._a[i][j](x) for j in range(self.dim)] for i in range(self.dim)]

    def beta_vector(self, x):
        return [self._b[i](x) for i in range(self.dim)]

    def F(self, x, y):
        n = self.dim
        A, b = self.alpha_matrix(x), self.beta_vector(x)
        a2 = sum(A[i][j] * y[i] * y[j] for i in range(n) for j in range(n))
        return jets.sqrt(a2) + sum(b[i] * y[i] for i in range(n))

    def F2(self, x, y):
        f = self.F(x, y)
        return f * f

    def beta_norm(self, x):
        A = np.array(self.alpha_matrix(np.asarray(x, float)), dtype=float)
        b = np.array(self.beta_vector(np.asarray(x, float)), dtype=float)
        return float(np.sqrt(b @ np.linalg.solve(A, b)))

    def check_point(self, x):
        A = np.array(self.alpha_matrix(np.asarray(x, float)), dtype=float)
        if np.linalg.eigvalsh(0.5 * (A + A.T)).min() <= 0:
            raise DomainError(f"alpha is not positive definite at x={x}")
        nb = self.beta_norm(x)
        if nb >= 1:
            raise DomainError(f"Randers condition violated at x={x}: |beta|_alpha = {nb:.6g} >= 1")

    def to_dict(self):
        return {"family": self.family, "dim": self.dim,
                "alpha": [[_source(s, "alpha") for s in r] for r in self._a_src],
                "beta": [_source(s, "beta") for s in self._b_src]}


@dataclass(eq=False)
class ConformalScale(MetricSpec):
    """The conformally related metric u(x)^-1 F of a base metric F."""

    base: MetricSpec
    u: object
    family = "conformal"

    def __post_init__(self):
        self.dim = self.base.dim
        self._u, self._u_src = _as_function(self.u, self.dim)

    def scale(self, x):
        return self._u(x)

    def F(self, x, y):
        return self.base.F(x, y) / self._u(x)

    def F2(self, x, y):
        u = self._u(x)
        return self.base.F2(x, y) / (u * u)

    def check_point(self, x):
        self.base.check_point(x)
        u = float(self._u(np.asarray(x, float)))
        if not u > 0:
            raise DomainError(f"conformal scale u = {u:.6g} is not positive at x={x}")

    def to_dict(self):
        return {"family": self.family, "base": self.base.to_dict(), "u": _source(self._u_src, "u")}


FAMILIES = {cls.family: cls for cls in (Euclidean, Riemannian, MinkowskiNorm, Randers, ConformalScale)}


def metric_from_dict(d):
    d = dict(d)
    family = d.pop("family", None)
    if family not in FAMILIES:
        raise ConfigError(f"unknown metric family {family!r}")
    if family == "conformal":
        return ConformalScale(metric_from_dict(d["base"]), d["u"])
    dim = int(d.pop("dim"))
    if family == "euclidean":
        return Euclidean(dim)
    if family == "riemannian":
        return Riemannian(dim, d["A"])
    if family == "minkowski":
        return MinkowskiNorm(dim, d["norm"])
    return Randers(dim, d.get("alpha"), d["beta"])


def evaluate_F(spec, p):
    spec.check_point(p.x)
    val = float(jets.value(spec.F(p.x, p.y)))
    if not np.isfinite(val) or val <= 0:
        raise DomainError(f"F = {val} is not positive at {p}")
    return val


class MetricJets:
    """Taylor expansion of F² at a tangent point plus the tensors built from it.

    Attributes are jets; their remaining orders follow from the orders of F²
    requested at construction.  The total degree defaults to the larger of
    the two orders: every derived tensor here loses at least one total
    degree per derivative, so mixed terms beyond it are never read.
    """

    def __init__(self, spec, p, order_x, order_y, total=None):
        if p.dim != spec.dim:
            raise ValueError(f"point of dimension {p.dim} for a {spec.dim}-dimensional metric")
        spec.check_point(p.x)
        self.spec, self.p, self.n = spec, p, spec.dim
        total = max(order_x, order_y) if total is None else total
        self.cfg = JetConfig(spec.dim, order_x, order_y, total)
        b = self.cfg.basis()
        self.X, self.Y = jets.xy_variables(b, p.x, p.y)
        self.F2 = jets.as_jet(spec.F2(self.X, self.Y), b)
        if not self.F2.value > 0 or not np.isfinite(self.F2.value):
            raise DomainError(f"F^2 = {self.F2.value} is not positive at {p}")

    @cached_property
    def g(self):
        g = 0.5 * self.F2.dy().dy()
        g = 0.5 * (g + g.T)
        lam = np.linalg.eigvalsh(g.value)
        if lam[0] < EIG_FLOOR:
            raise ConvexityError(
                f"fundamental tensor not positive definite at x={self.p.x}, y={self.p.y}: "
                f"smallest eigenvalue {lam[0]:.3g}", eigenvalue=float(lam[0]))
        return g

    @cached_property
    def g_inv(self):
        gi = jets.inv(self.g)
        return 0.5 * (gi + gi.T)

    @cached_property
    def C(self):
        return 0.5 * self.g.dy()

    @cached_property
    def Cm(self):
        return einsum("kr,rij->kij", self.g_inv, self.C)

    @cached_property
    def I(self):
        return einsum("kik->i", self.Cm)

    @cached_property
    def y_flat(self):
        return einsum("ij,j->i", self.g, self.Y)

    def lower(self, v):
        return einsum("ij,j->i", self.g, v)

    def raise_(self, w):
        return einsum("ij,j->i", self.g_inv, w)


@dataclass(frozen=True)
class FundamentalTensors:
    g: np.ndarray
    g_inv: np.ndarray
    C: np.ndarray
    C_mixed: np.ndarray
    I: np.ndarray


def fundamental(spec, p):
    mj = MetricJets(spec, p, 0, 3)
    return FundamentalTensors(mj.g.value, mj.g_inv.value, mj.C.value, mj.Cm.value, mj.I.value)


def angular_quantities(spec, p):
    """Return (y_flat, unit) with y_flat_i = g_ir y^r and unit = y / F."""
    g = fundamental(spec, p).g
    F = evaluate_F(spec, p)
    return g @ p.y, p.y / F


def metric_inner(spec, p, u, v):
    g = fundamental(spec, p).g
    return float(np.asarray(u) @ g @ np.asarray(v))


def random_direction(rng, dim):
    while True:
        v = rng.standard_normal(dim)
        nv = np.linalg.norm(v)
        if nv > 1e-3:
            return v / nv


def sample_points(spec, rng, n_base, per_base, box=(-0.5, 0.5), normalize=True):
    """Tangent points on a grid of random base points and fiber directions.

    Base points falling outside the family domain are redrawn; fiber
    directions are F-normalized when ``normalize`` is set.
    """
    lo, hi = box
    out = []
    for _ in range(n_base):
        for _attempt in range(100):
            x = rng.uniform(lo, hi, spec.dim)
            try:
                spec.check_point(x)
                break
            except DomainError:
                continue
        else:
            raise DomainError(f"no admissible base point found in box {box}")
        for _ in range(per_base):
            y = random_direction(rng, spec.dim)
            if normalize:
                y = y / evaluate_F(spec, TangentPoint(x, y))
            out.append(TangentPoint(x, y))
    return out
