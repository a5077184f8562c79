"""Spray, nonlinear connection, the three classical linear connections and
covariant derivatives built on them.

Index layout used everywhere: ``G[i]``, ``N[i, j] = dG^i/dy^j``,
``Gjk[i, j, k]``, ``gamma[k, i, j] = Gamma^k_ij`` (upper index first) and
``Cm[k, i, j] = C^k_ij``.  Derivative indices are appended as the last axis.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import jets
from .errors import DomainError
from .jets import einsum
from .metric import MetricJets, TangentPoint

KINDS = ("cartan", "berwald", "chern")
_LETTERS = string.ascii_lowercase


def _subs(ndim, skip=""):
    return "".join(ch for ch in _LETTERS if ch not in skip)[:ndim]


def check_variance(T, variance):
    if len(variance) != T.ndim or any(v not in "ul" for v in variance):
        raise ValueError(f"variance {variance!r} does not describe a rank-{T.ndim} tensor")


class ConnectionJets(MetricJets):
    """Jets of the spray and connection coefficients at one tangent point."""

    @cached_property
    def G(self):
        F2x = self.F2.dx()
        term = einsum("kl,k->l", F2x.dy(), self.Y) - F2x
        return 0.25 * einsum("il,l->i", self.g_inv, term)

    @cached_property
    def N(self):
        return self.G.dy()

    @cached_property
    def Gjk(self):
        B = self.N.dy()
        return 0.5 * (B + B.transpose(0, 2, 1))

    def delta(self, T):
        """Horizontal derivative d_k T - N^r_k dT/dy^r, appended as last axis."""
        s = _subs(T.ndim, "rk")
        return T.dx() - einsum(f"{s}r,rk->{s}k", T.dy(), self.N)

    @cached_property
    def gamma_star(self):
        """The common horizontal coefficients of the Cartan and Chern connections."""
        dg = self.delta(self.g)  # dg[a, b, c] = delta_c g_ab
        term = dg.transpose(2, 0, 1) + dg.transpose(0, 2, 1) - dg.transpose(0, 1, 2)
        # term[i, j, l] = delta_i g_jl + delta_j g_il - delta_l g_ij
        gam = 0.5 * einsum("kl,ijl->kij", self.g_inv, term)
        return 0.5 * (gam + gam.transpose(0, 2, 1))

    def gamma(self, kind):
        if kind == "berwald":
            return self.Gjk
        if kind in ("cartan", "chern"):
            return self.gamma_star
        raise ValueError(f"unknown connection kind {kind!r}")

    def vertical(self, kind):
        if kind == "cartan":
            return self.Cm
        if kind in ("berwald", "chern"):
            return None
        raise ValueError(f"unknown connection kind {kind!r}")

    def _coupling(self, T, variance, coeff):
        """Sum of the index-coupling terms of a covariant derivative."""
        out = 0
        s = _subs(T.ndim, "rkz")
        for pos, v in enumerate(variance):
            src = s[:pos] + "r" + s[pos + 1:]
            if v == "u":
                out = out + einsum(f"{src},{s[pos]}rk->{s}k", T, coeff)
            else:
                out = out - einsum(f"{src},r{s[pos]}k->{s}k", T, coeff)
        return out

    def h_derivative(self, T, variance, kind="cartan"):
        check_variance(T, variance)
        D = self.delta(T)
        return D + self._coupling(T, variance, self.gamma(kind)) if variance else D

    def v_derivative(self, T, variance, kind="cartan"):
        check_variance(T, variance)
        D = T.dy()
        V = self.vertical(kind)
        if V is None or not variance:
            return D
        return D + self._coupling(T, variance, V)

    def along_y(self, T):
        """Contract the last (derivative) axis with y, the ``|0`` operation."""
        s = _subs(T.ndim - 1, "r")
        return einsum(f"{s}r,r->{s}", T, self.Y)


@dataclass(frozen=True)
class SprayData:
    G: np.ndarray
    N: np.ndarray
    Gjk: np.ndarray


@dataclass(frozen=True)
class ConnectionCoeffs:
    kind: str
    gamma: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class YConnection:
    Y: object
    x: np.ndarray
    gamma_star: np.ndarray
    Yj: np.ndarray


def spray(spec, p):
    cj = ConnectionJets(spec, p, 1, 4)
    return SprayData(cj.G.value, cj.N.value, cj.Gjk.value)


def connection_coeffs(spec, p, kind="cartan"):
    cj = ConnectionJets(spec, p, 1, 4 if kind == "berwald" else 3)
    V = cj.vertical(kind)
    n = spec.dim
    return ConnectionCoeffs(kind, cj.gamma(kind).value,
                            V.value if V is not None else np.zeros((n, n, n)))


def lift_tensor(T, X, Y, basis):
    """Evaluate a tensor-valued function of (x, y) on jet variables."""
    return jets.as_jet(_nested_stack(T(X, Y)), basis)


def _nested_stack(obj):
    if isinstance(obj, (list, tuple)):
        return jets.stack([_nested_stack(o) for o in obj])
    return obj


def h_covariant(spec, p, T, variance, kind="cartan", orders=(1, 3)):
    """Horizontal covariant derivative of a tensor field given by ``T(x, y)``.

    ``T`` returns nested lists (or a jet) of components; ``variance`` is a
    string of 'u'/'l' marking upper and lower indices.  The result has the
    derivative index appended last.
    """
    cj = ConnectionJets(spec, p, *orders)
    Tj = lift_tensor(T, cj.X, cj.Y, cj.cfg.basis())
    return cj.h_derivative(Tj, variance, kind).value


def v_covariant(spec, p, T, variance, kind="cartan", orders=(1, 3)):
    cj = ConnectionJets(spec, p, *orders)
    Tj = lift_tensor(T, cj.X, cj.Y, cj.cfg.basis())
    return cj.v_derivative(Tj, variance, kind).value


def field_jacobian(Y, x, order=1):
    """Value and x-derivatives of a vector field ``Y(x)`` via x-only jets.

    Returns the value and, for order >= 1, the Jacobian ``J[i, k] = d_k Y^i``.
    """
    x = np.asarray(x, dtype=float)
    b = jets.basis((len(x),), (order,), order)
    Yj = jets.as_jet(_nested_stack(Y(jets.variables(b, x))), b)
    if Yj.shape != (len(x),):
        raise ValueError(f"vector field returned shape {Yj.shape}, expected ({len(x)},)")
    return Yj


def y_connection(spec, Y, x):
    x = np.asarray(x, dtype=float)
    Yjet = field_jacobian(Y, x, 1)
    Yx = Yjet.value
    if not np.any(Yx):
        raise DomainError(f"Y vanishes at x={x}; the Y-connection is undefined there")
    dY = Yjet.grad(0).value  # dY[r, k] = d_k Y^r
    cj = ConnectionJets(spec, TangentPoint(x, Yx), 1, 3)
    Yj = dY + cj.N.value
    gstar = cj.gamma_star.value + np.einsum("ijr,rk->ijk", cj.Cm.value, Yj)
    return YConnection(Y, x, gstar, Yj)


def covariant_along_curve(spec, gamma, gamma1, gamma2, W=None, dW=None):
    """Covariant derivative D*_{gamma'} W along a curve.

    With ``W`` omitted the curve's own velocity is differentiated and the
    result is gamma'' + 2G.  Otherwise ``dW`` is the parameter derivative of
    W; the Y-connection enters only through Y^r_k gamma'^k = gamma'' + 2G.
    """
    p = TangentPoint(gamma, gamma1)
    cj = ConnectionJets(spec, p, 1, 3)
    G, N, Cm = cj.G.value, cj.N.value, cj.Cm.value
    Xacc = np.asarray(gamma2, float) + 2 * G
    if W is None:
        return Xacc
    W = np.asarray(W, dtype=float)
    return np.asarray(dW, float) + np.einsum("j,ij->i", W, N + np.einsum("ijr,r->ij", Cm, Xacc))


def _couple_values(T, variance, coeff):
    """Value-level index coupling, coeff[a, r, k] acting on each index of T."""
    out = np.zeros(T.shape + (coeff.shape[-1],))
    for pos, v in enumerate(variance):
        moved = np.moveaxis(T, pos, -1)                     # [..., r]
        if v == "u":
            term = np.einsum("...r,ark->...ak", moved, coeff)
        else:
            term = -np.einsum("...r,rak->...ak", moved, coeff)
        out = out + np.moveaxis(term, -2, pos)
    return out


def y_covariant(spec, T, variance, Y, x):
    """T*_{/j} for T*(x) := T(x, Y(x)), differentiating T* directly.

    ``T(x, y)`` returns components of a spray tensor; the derivative index
    is appended last.
    """
    x = np.asarray(x, dtype=float)
    yc = y_connection(spec, Y, x)
    b = jets.basis((len(x),), (1,), 1)
    X = jets.variables(b, x)
    Yv = jets.as_jet(_nested_stack(Y(X)), b)
    Tj = jets.as_jet(_nested_stack(T(X, Yv)), b)
    check_variance(Tj, variance)
    dT = Tj.grad(0).value
    if not variance:
        return dT
    return dT + _couple_values(Tj.value, variance, yc.gamma_star)


def y_transfer(spec, T, variance, Y, x, orders=(1, 3)):
    """Right side of the transfer rule: (T_{|j} + T|_r Y^r_j) at y = Y(x)."""
    x = np.asarray(x, dtype=float)
    yc = y_connection(spec, Y, x)
    cj = ConnectionJets(spec, TangentPoint(x, field_jacobian(Y, x, 0).value), *orders)
    Tj = lift_tensor(T, cj.X, cj.Y, cj.cfg.basis())
    h = cj.h_derivative(Tj, variance).value
    v = cj.v_derivative(Tj, variance).value
    return h + np.einsum("...r,rj->...j", v, yc.Yj)
