"""Truncated multivariate Taylor jets.

A :class:`Jet` holds the Taylor coefficients of a scalar- or tensor-valued
function around a point.  Coefficients sit on the last array axis, so a
tensor of jets is one ndarray of shape ``tensor_shape + (n_monomials,)`` and
tensor algebra stays vectorised.

The variables are split into groups (base coordinates x and fiber
coordinates y on the tangent bundle; a single group for curves).  A
:class:`Basis` keeps every monomial whose degree in each group is within
that group's cap and whose total degree is within a total cap.  Products
truncate to the common basis, derivatives lower the relevant caps by one, so
the order bookkeeping is automatic and exact: every retained coefficient is
the true Taylor coefficient up to rounding.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import ConditioningError, DomainError, JetOrderError

MAX_ORDER = 6
_RADIX = MAX_ORDER + 1
COND_LIMIT = 1e12


class Basis:
    """Monomial index set for a truncated expansion.

    Use :func:`basis` to obtain instances; they are cached and compared by
    identity.
    """

    def __init__(self, sizes, caps, total):
        self.sizes = tuple(int(s) for s in sizes)
        self.total = int(total)
        self.caps = tuple(min(int(c), self.total) for c in caps)
        self.nvars = sum(self.sizes)
        self.offsets = tuple(np.cumsum((0,) + self.sizes[:-1]))
        if self.nvars * math.log(_RADIX) > 43:
            raise ValueError(f"too many jet variables ({self.nvars})")

        per_group = []
        for n, cap in zip(self.sizes, self.caps):
            per_group.append([e for e in itertools.product(range(cap + 1), repeat=n)
                              if sum(e) <= cap])
        exps = [sum(parts, ()) for parts in itertools.product(*per_group)
                if sum(map(sum, parts)) <= self.total]
        exps = np.array(exps, dtype=np.int64).reshape(-1, self.nvars)
        deg = exps.sum(axis=1)
        # graded, and inside a degree the unit monomials come in variable order
        order = np.lexsort(tuple(-exps[:, v] for v in reversed(range(self.nvars))) + (deg,))
        self.exps = exps[order]
        self.N = len(self.exps)
        self.deg = self.exps.sum(axis=1)
        self.group_deg = np.stack(
            [self.exps[:, o:o + n].sum(axis=1) for o, n in zip(self.offsets, self.sizes)], axis=1)
        self._weights = _RADIX ** np.arange(self.nvars, dtype=np.int64)
        self.keys = self.exps @ self._weights
        self._key_order = np.argsort(self.keys)
        self._sorted_keys = self.keys[self._key_order]
        self.factorials = np.array(
            [math.prod(math.factorial(int(k)) for k in e) for e in self.exps], dtype=float)

    def __repr__(self):
        return f"Basis(sizes={self.sizes}, caps={self.caps}, total={self.total}, N={self.N})"

    def lookup(self, keys):
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, self.N - 1)
        found = self._sorted_keys[pos] == keys
        return self._key_order[pos], found

    def index(self, exponent):
        exponent = np.asarray(exponent, dtype=np.int64)
        if exponent.shape != (self.nvars,) or np.any(exponent < 0):
            raise JetOrderError(f"malformed multi-index {tuple(exponent)}")
        idx, found = self.lookup(exponent @ self._weights)
        if not found:
            raise JetOrderError(f"multi-index {tuple(int(e) for e in exponent)} is beyond {self!r}")
        return int(idx)

    def group_of(self, var):
        for g, (o, n) in enumerate(zip(self.offsets, self.sizes)):
            if o <= var < o + n:
                return g
        raise IndexError(var)

    @cached_property
    def table(self):
        """Sorted (i, j) pairs contributing to each product coefficient k."""
        ok = self.deg[:, None] + self.deg[None, :] <= self.total
        for g, cap in enumerate(self.caps):
            d = self.group_deg[:, g]
            ok &= d[:, None] + d[None, :] <= cap
        I, J = np.nonzero(ok)
        K, found = self.lookup(self.keys[I] + self.keys[J])
        assert found.all()
        order = np.argsort(K, kind="stable")
        I, J, K = I[order], J[order], K[order]
        starts = np.flatnonzero(np.r_[True, K[1:] != K[:-1]])
        assert len(starts) == self.N
        return _Table(I, J, starts)

    def lowered(self, group):
        caps = list(self.caps)
        if caps[group] == 0 or self.total == 0:
            raise JetOrderError(f"no derivative order left in group {group} of {self!r}")
        caps[group] -= 1
        return basis(self.sizes, caps, self.total - 1)

    @lru_cache(maxsize=None)
    def grad_map(self, group):
        """Gather indices and multipliers for the gradient in one group."""
        target = self.lowered(group)
        o, n = self.offsets[group], self.sizes[group]
        src = np.empty((n, target.N), dtype=np.int64)
        mult = np.empty((n, target.N))
        for a in range(n):
            v = o + a
            idx, found = self.lookup(target.keys + self._weights[v])
            assert found.all()
            src[a] = idx
            mult[a] = target.exps[:, v] + 1
        return target, src, mult

    @lru_cache(maxsize=None)
    def restriction(self, smaller):
        idx, found = self.lookup(smaller.keys)
        if not found.all():
            raise JetOrderError(f"{smaller!r} is not contained in {self!r}")
        return idx


@dataclass(frozen=True)
class _Table:
    I: np.ndarray
    J: np.ndarray
    starts: np.ndarray


@lru_cache(maxsize=None)
def _basis(sizes, caps, total):
    return Basis(sizes, caps, total)


def basis(sizes, caps, total):
    if total > MAX_ORDER or total < 0:
        raise JetOrderError(f"total order {total} outside 0..{MAX_ORDER}")
    total = int(total)
    return _basis(tuple(int(s) for s in sizes), tuple(min(int(c), total) for c in caps), total)


def common_basis(a, b):
    if a is b:
        return a
    if a.sizes != b.sizes:
        raise ValueError(f"jets over different variables: {a!r} vs {b!r}")
    return basis(a.sizes, [min(p, q) for p, q in zip(a.caps, b.caps)], min(a.total, b.total))


@dataclass(frozen=True)
class JetConfig:
    """Truncation orders for jets on the tangent bundle of an n-manifold.

    ``total`` caps the combined degree; it defaults to
    ``order_x + order_y`` and may not exceed :data:`MAX_ORDER`.
    """

    dim: int
    order_x: int
    order_y: int
    total: int | None = None

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.order_x < 0 or self.order_y < 0:
            raise ValueError("orders must be non-negative")
        total = self.order_x + self.order_y if self.total is None else self.total
        if total > MAX_ORDER:
            raise JetOrderError(f"total order {total} exceeds {MAX_ORDER}")
        object.__setattr__(self, "total", total)

    def basis(self):
        return basis((self.dim, self.dim), (self.order_x, self.order_y), self.total)


def xy_basis(dim, order_x, order_y, total=None):
    return JetConfig(dim, order_x, order_y, total).basis()


class Jet:
    """Truncated Taylor expansion of a tensor-valued function."""

    __slots__ = ("coeffs", "basis")
    __array_ufunc__ = None  # make ndarray defer to our reflected operators

    def __init__(self, coeffs, basis):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1:] != (basis.N,):
            raise ValueError(f"coefficient axis {coeffs.shape} does not match {basis!r}")
        self.coeffs = coeffs
        self.basis = basis

    # -- structure -------------------------------------------------------
    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    @property
    def ndim(self):
        return self.coeffs.ndim - 1

    @property
    def value(self):
        return self.coeffs[..., 0]

    def __repr__(self):
        return f"Jet(shape={self.shape}, value={self.value!r}, {self.basis!r})"

    def __len__(self):
        return self.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.coeffs[key + (slice(None),)], self.basis)

    def restrict(self, target):
        if target is self.basis:
            return self
        return Jet(self.coeffs[..., self.basis.restriction(target)], target)

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        axes = np.atleast_1d(axis)
        axes = tuple(int(a) + self.ndim if a < 0 else int(a) for a in axes)
        return Jet(self.coeffs.sum(axis=axes), self.basis)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Jet(self.coeffs.transpose(tuple(axes) + (self.ndim,)), self.basis)

    @property
    def T(self):
        return self.transpose()

    # -- arithmetic ------------------------------------------------------
    def __neg__(self):
        return Jet(-self.coeffs, self.basis)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            b = common_basis(self.basis, other.basis)
            return Jet(self.restrict(b).coeffs + other.restrict(b).coeffs, b)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.array(np.broadcast_to(self.coeffs, shape + (self.basis.N,)))
        c[..., 0] += other
        return Jet(c, self.basis)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            b = common_basis(self.basis, other.basis)
            return Jet(_mul(self.restrict(b).coeffs, other.restrict(b).coeffs, b), b)
        other = np.asarray(other, dtype=float)
        return Jet(self.coeffs * other[..., None], self.basis)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise DomainError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out, base, p = None, self, int(p)
            while p:
                if p & 1:
                    out = base if out is None else out * base
                p >>= 1
                if p:
                    base = base * base
            return out if out is not None else Jet(_unit_coeffs(self.shape, self.basis), self.basis)
        return power(self, p)

    # -- calculus --------------------------------------------------------
    def grad(self, group):
        """Gradient in one variable group, appended as the last tensor axis."""
        target, src, mult = self.basis.grad_map(group)
        return Jet(self.coeffs[..., src] * mult, target)

    def dx(self):
        return self.grad(0)

    def dy(self):
        return self.grad(1)

    def diff(self, var):
        g = self.basis.group_of(var)
        return self.grad(g)[..., var - self.basis.offsets[g]]

    def coefficient(self, exponent):
        return self.coeffs[..., self.basis.index(exponent)]

    def partial(self, idx):
        """Mixed partial derivative; ``idx`` lists variable numbers, repeats allowed.

        On the tangent bundle variables 0..n-1 are x and n..2n-1 are y.
        """
        exponent = np.zeros(self.basis.nvars, dtype=np.int64)
        for v in idx:
            if not 0 <= v < self.basis.nvars:
                raise JetOrderError(f"variable {v} out of range")
            exponent[v] += 1
        k = self.basis.index(exponent)
        return self.coeffs[..., k] * self.basis.factorials[k]


def _unit_coeffs(shape, basis):
    c = np.zeros(tuple(shape) + (basis.N,))
    c[..., 0] = 1.0
    return c


def _mul(a, b, basis):
    t = basis.table
    return np.add.reduceat(a[..., t.I] * b[..., t.J], t.starts, axis=-1)


def constant(value, basis):
    value = np.asarray(value, dtype=float)
    c = np.zeros(value.shape + (basis.N,))
    c[..., 0] = value
    return Jet(c, basis)


def as_jet(value, basis):
    return value.restrict(common_basis(value.basis, basis)) if isinstance(value, Jet) else constant(value, basis)


def variables(basis, point):
    """The coordinate functions expanded at ``point``, as one vector jet."""
    point = np.asarray(point, dtype=float)
    if point.shape != (basis.nvars,):
        raise ValueError(f"point of shape {point.shape} for {basis.nvars} variables")
    c = np.zeros((basis.nvars, basis.N))
    c[:, 0] = point
    idx, found = basis.lookup(basis._weights)
    rows = np.flatnonzero(found)
    c[rows, idx[rows]] = 1.0
    return Jet(c, basis)


def xy_variables(basis, x, y):
    n = basis.sizes[0]
    v = variables(basis, np.concatenate([np.asarray(x, float), np.asarray(y, float)]))
    return v[:n], v[n:]


def lift(f, p, cfg):
    """Expand ``f(x, y)`` around the tangent point ``p``.

    ``f`` must be written with this module's arithmetic (operators plus
    :func:`sqrt`, :func:`exp`, ...), so it accepts jets as arguments.
    """
    b = cfg.basis()
    X, Y = xy_variables(b, p.x, p.y)
    return as_jet(f(X, Y), b)


def partial(j, idx):
    return j.partial(idx)


def stack(items, axis=0):
    items = list(items)
    jets = [it for it in items if isinstance(it, Jet)]
    if not jets:
        return np.stack([np.asarray(it, float) for it in items], axis=axis)
    b = jets[0].basis
    for j in jets[1:]:
        b = common_basis(b, j.basis)
    coeffs = [as_jet(it, b).coeffs for it in items]
    shape = np.broadcast_shapes(*(c.shape for c in coeffs))
    coeffs = [np.broadcast_to(c, shape) for c in coeffs]
    if axis < 0:
        axis += len(shape)
    return Jet(np.stack(coeffs, axis=axis), b)


# -- elementary functions ---------------------------------------------------

def _compose(a, series):
    """Evaluate sum_m series[m] * (a - a0)**m by Horner's rule."""
    h = a.coeffs.copy()
    h[..., 0] = 0.0
    H = Jet(h, a.basis)
    out = constant(series[-1], a.basis)
    for c in reversed(series[:-1]):
        out = out * H + c
    return out


def _binomial_series(a0, p, order):
    series, coef = [], np.ones_like(a0)
    for m in range(order + 1):
        series.append(coef * a0 ** (p - m))
        coef = coef * (p - m) / (m + 1)
    return series


def power(a, p):
    if not isinstance(a, Jet):
        a = np.asarray(a, float)
        if np.any(a <= 0) and not float(p).is_integer():
            raise DomainError(f"non-integer power of a non-positive value {a}")
        return a ** p
    a0 = a.value
    if np.any(a0 <= 0):
        raise DomainError(f"power {p} of a non-positive value {a0}")
    return _compose(a, _binomial_series(a0, p, a.basis.total))


def sqrt(a):
    if not isinstance(a, Jet):
        a = np.asarray(a, float)
        if np.any(a <= 0):
            raise DomainError(f"square root of a non-positive value {a}")
        return np.sqrt(a)
    return power(a, 0.5)


def reciprocal(a):
    if not isinstance(a, Jet):
        a = np.asarray(a, float)
        if np.any(a == 0):
            raise DomainError("division by zero")
        return 1.0 / a
    a0 = a.value
    if np.any(a0 == 0):
        raise DomainError("division by a jet with zero value")
    return _compose(a, [(-1.0) ** m / a0 ** (m + 1) for m in range(a.basis.total + 1)])


def exp(a):
    if not isinstance(a, Jet):
        return np.exp(a)
    e0 = np.exp(a.value)
    return _compose(a, [e0 / math.factorial(m) for m in range(a.basis.total + 1)])


def log(a):
    if not isinstance(a, Jet):
        a = np.asarray(a, float)
        if np.any(a <= 0):
            raise DomainError(f"log of a non-positive value {a}")
        return np.log(a)
    a0 = a.value
    if np.any(a0 <= 0):
        raise DomainError(f"log of a non-positive value {a0}")
    series = [np.log(a0)] + [(-1.0) ** (m + 1) / (m * a0 ** m) for m in range(1, a.basis.total + 1)]
    return _compose(a, series)


def _trig_series(a0, shift, order):
    cycle = [np.sin(a0), np.cos(a0), -np.sin(a0), -np.cos(a0)]
    return [cycle[(m + shift) % 4] / math.factorial(m) for m in range(order + 1)]


def sin(a):
    if not isinstance(a, Jet):
        return np.sin(a)
    return _compose(a, _trig_series(a.value, 0, a.basis.total))


def cos(a):
    if not isinstance(a, Jet):
        return np.cos(a)
    return _compose(a, _trig_series(a.value, 1, a.basis.total))


# -- tensor algebra ----------------------------------------------------------

def _einsum2(sa, sb, so, a, b):
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if ja and jb:
        bas = common_basis(a.basis, b.basis)
        ca, cb = a.restrict(bas).coeffs, b.restrict(bas).coeffs
        t = bas.table
        prod = np.einsum(f"{sa}Z,{sb}Z->{so}Z", ca[..., t.I], cb[..., t.J])
        return Jet(np.add.reduceat(prod, t.starts, axis=-1), bas)
    if ja:
        return Jet(np.einsum(f"{sa}Z,{sb}->{so}Z", a.coeffs, np.asarray(b, float)), a.basis)
    if jb:
        return Jet(np.einsum(f"{sa},{sb}Z->{so}Z", np.asarray(a, float), b.coeffs), b.basis)
    return np.einsum(f"{sa},{sb}->{so}", np.asarray(a, float), np.asarray(b, float))


def einsum(subscripts, *operands):
    """``numpy.einsum`` for jets and arrays; explicit lowercase subscripts only."""
    inputs, output = subscripts.replace(" ", "").split("->")
    subs = inputs.split(",")
    if len(subs) != len(operands):
        raise ValueError("subscripts do not match the operands")
    if len(operands) == 1:
        (a,) = operands
        if isinstance(a, Jet):
            return Jet(np.einsum(f"{subs[0]}Z->{output}Z", a.coeffs), a.basis)
        return np.einsum(subscripts, a)
    cur, cur_sub = operands[0], subs[0]
    for k in range(1, len(operands)):
        if k == len(operands) - 1:
            target = output
        else:
            later = set("".join(subs[k + 1:]) + output)
            target = "".join(dict.fromkeys(ch for ch in cur_sub + subs[k] if ch in later))
        cur = _einsum2(cur_sub, subs[k], target, cur, operands[k])
        cur_sub = target
    return cur


def inv(A):
    """Inverse of a square matrix of jets (or of a plain matrix)."""
    A0 = A.value if isinstance(A, Jet) else np.asarray(A, float)
    cond = np.linalg.cond(A0)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConditioningError(f"matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    A0i = np.linalg.inv(A0)
    if not isinstance(A, Jet):
        return A0i
    # (A0 + H)^-1 = sum_m (-A0^-1 H)^m A0^-1, finite because H is nilpotent
    E = -einsum("ij,jk->ik", A0i, A - A0)
    eye = np.eye(len(A0))
    S = E + eye
    for _ in range(A.basis.total - 1):
        S = einsum("ij,jk->ik", E, S) + eye
    return einsum("ij,jk->ik", S, A0i)


def value(a):
    return a.value if isinstance(a, Jet) else np.asarray(a, float)
