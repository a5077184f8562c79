"""Geodesic circles: the third-order circle ODE, its RK4 integration,
invariant monitoring, reparametrization and the parameter-free tangency test.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicHermiteSpline

from . import jets
from .connection import ConnectionJets
from .errors import DomainError, IntegrationError
from .metric import TangentPoint
from .report import ResidualReport

DRIFT_ABORT = 1e-4
ADMISSIBLE_TOL = 1e-10


@dataclass(frozen=True)
class CircleState:
    s: float
    gamma: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray


@dataclass(frozen=True)
class CircleInit:
    """Initial point, unit velocity and covariant acceleration of a circle."""

    x0: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("x0", "u", "v"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))

    def admissibility(self, spec):
        q = local_quantities(spec, self.x0, self.u)
        F = np.sqrt(q.F2)
        return abs(F - 1.0), abs(self.u @ q.g @ self.v)

    def is_admissible(self, spec, tol=ADMISSIBLE_TOL):
        a, b = self.admissibility(spec)
        return a <= tol and b <= tol


@dataclass(frozen=True)
class LocalQuantities:
    """Spray data and metric at one tangent point, as plain arrays."""

    F2: float
    g: np.ndarray
    G: np.ndarray
    dG: np.ndarray     # dG[i, j] = d_j G^i
    N: np.ndarray
    Cm: np.ndarray


def local_quantities(spec, x, y):
    cj = ConnectionJets(spec, TangentPoint(x, y), 2, 3)
    if not np.any(y):
        raise DomainError("zero velocity")
    return LocalQuantities(float(cj.F2.value), cj.g.value, cj.G.value, cj.G.dx().value,
                           cj.N.value, cj.Cm.value)


def covariant_acceleration(q, gamma2):
    """D*_{gamma'} gamma' = gamma'' + 2G for any parameter."""
    return np.asarray(gamma2, float) + 2 * q.G


def second_covariant(q, gamma1, gamma2, gamma3):
    """D*_{gamma'} D*_{gamma'} gamma' for any parameter."""
    X = covariant_acceleration(q, gamma2)
    return (gamma3 + 2 * q.dG @ gamma1 + 2 * q.N @ gamma2
            + q.N @ X + np.einsum("kir,i,r->k", q.Cm, X, X))


def _third_derivative(q, gamma1, gamma2):
    X = covariant_acceleration(q, gamma2)
    tau = X @ q.g @ X
    g3 = (-2 * q.dG @ gamma1 + 4 * q.N @ q.G - 3 * q.N @ X
          - np.einsum("kir,i,r->k", q.Cm, X, X) - tau * gamma1)
    return g3, X, tau


def rhs(spec, state):
    """gamma''' making the arc-length circle equation hold at ``state``."""
    q = local_quantities(spec, state.gamma, state.gamma1)
    return _third_derivative(q, state.gamma1, state.gamma2)[0]


@dataclass
class Trajectory:
    s: np.ndarray
    gamma: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray
    F_residual: np.ndarray
    knorm: np.ndarray
    admissible: bool = True
    meta: dict = field(default_factory=dict)

    def states(self):
        return [CircleState(float(s), g, g1, g2)
                for s, g, g1, g2 in zip(self.s, self.gamma, self.gamma1, self.gamma2)]

    def __len__(self):
        return len(self.s)

    @property
    def knorm_residual(self):
        tau0 = self.knorm[0]
        dev = np.abs(self.knorm - tau0)
        return dev / abs(tau0) if abs(tau0) > 1e-12 else dev

    def to_csv(self, path):
        n = self.gamma.shape[1]
        header = (["s"] + [f"gamma{i + 1}" for i in range(n)] + [f"dgamma{i + 1}" for i in range(n)]
                  + ["F_residual", "knorm_residual"])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(len(self)):
                w.writerow([repr(float(v)) for v in
                            [self.s[k], *self.gamma[k], *self.gamma1[k],
                             self.F_residual[k], self.knorm_residual[k]]])


def integrate(spec, init, s_max, step=1e-3, strict=True, require_admissible=True):
    """Fixed-step RK4 for the circle ODE in (gamma, gamma', gamma'').

    No projection onto F(gamma') = 1 is applied; the invariants are recorded
    at every step.  With ``strict`` the run aborts once either invariant
    drifts by more than ``DRIFT_ABORT``.
    """
    n = spec.dim
    adm = init.is_admissible(spec)
    if require_admissible and not adm:
        a, b = init.admissibility(spec)
        raise DomainError(f"inadmissible initial data: |F(u)-1| = {a:.3g}, |g_u(u,v)| = {b:.3g}")
    q0 = local_quantities(spec, init.x0, init.u)
    z = np.concatenate([init.x0, init.u, init.v - 2 * q0.G])
    if not (s_max > 0 and step > 0):
        raise ValueError("s_max and step must be positive")
    nfull = int(np.floor(s_max / step + 1e-9))
    grid = list(np.arange(nfull + 1) * step)
    if s_max - grid[-1] > 1e-9 * step:
        grid.append(s_max)  # one shorter closing step
    grid = np.array(grid)

    def f(z):
        q = local_quantities(spec, z[:n], z[n:2 * n])
        g3, X, tau = _third_derivative(q, z[n:2 * n], z[2 * n:])
        return np.concatenate([z[n:2 * n], z[2 * n:], g3]), q, tau

    out_z, out_g3, out_F, out_tau = [], [], [], []
    tau0 = None
    for k in range(len(grid)):
        k1, q, tau = f(z)
        Fres = abs(np.sqrt(q.F2) - 1.0)
        tau0 = tau if tau0 is None else tau0
        out_z.append(z)
        out_g3.append(k1[2 * n:])
        out_F.append(Fres)
        out_tau.append(tau)
        if strict:
            drift = abs(tau - tau0) / max(abs(tau0), 1.0)
            if Fres > DRIFT_ABORT or drift > DRIFT_ABORT:
                raise IntegrationError(
                    f"invariant drift at s = {grid[k]:.6g}: |F-1| = {Fres:.3g}, "
                    f"knorm drift = {drift:.3g}; reduce the step or check convexity")
        if k == len(grid) - 1:
            break
        h = grid[k + 1] - grid[k]
        k2 = f(z + 0.5 * h * k1)[0]
        k3 = f(z + 0.5 * h * k2)[0]
        k4 = f(z + h * k3)[0]
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise IntegrationError(f"non-finite state at s = {grid[k + 1]:.6g}")
    Z = np.array(out_z)
    return Trajectory(grid, Z[:, :n], Z[:, n:2 * n], Z[:, 2 * n:],
                      np.array(out_g3), np.array(out_F), np.array(out_tau), adm,
                      {"step": step, "s_max": s_max})


def circle_invariants(spec, traj):
    tau0 = float(traj.knorm[0])
    rep = ResidualReport("circle_invariants")
    rep.add("F_unit_speed", float(traj.F_residual.max()), 1e-7, tag="arc-length preservation")
    rep.add("knorm_drift", float(traj.knorm_residual.max()), 1e-7, tag="constant covariant acceleration")
    radius = 1 / np.sqrt(tau0) if tau0 > 0 else float("inf")
    rep.meta["radius"] = float(radius) if np.isfinite(radius) else None
    rep.meta["curvature"] = float(np.sqrt(max(tau0, 0.0)))
    rep.meta["admissible"] = bool(traj.admissible)
    rep.meta["samples"] = len(traj)
    return rep


# -- closed forms -------------------------------------------------------------

def euclidean_circle(x0, u, v):
    """Coefficients (a, b, c, k) of gamma = a cos ks + b sin ks + c.

    Requires |u| = 1 and <u, v> = 0; v = 0 gives a line (k = 0).
    """
    x0, u, v = (np.asarray(w, float) for w in (x0, u, v))
    k = float(np.linalg.norm(v))
    if k == 0:
        return None, u, x0, 0.0
    return -v / k ** 2, u / k, x0 + v / k ** 2, k


def euclidean_circle_samples(x0, u, v, s):
    """gamma and its first three derivatives of the Euclidean circle."""
    a, b, c, k = euclidean_circle(x0, u, v)
    s = np.asarray(s, float)[:, None]
    if k == 0:
        z = np.zeros((len(s), len(c)))
        return c + b * s, np.broadcast_to(b, z.shape).copy(), z, z.copy()
    cs, sn = np.cos(k * s), np.sin(k * s)
    g0 = a * cs + b * sn + c
    g1 = k * (-a * sn + b * cs)
    g2 = -k ** 2 * (a * cs + b * sn)
    g3 = k ** 3 * (a * sn - b * cs)
    return g0, g1, g2, g3


# -- general parameters ---------------------------------------------------------

@dataclass
class CurveSamples:
    """gamma and three parameter derivatives at the sample parameters t."""

    t: np.ndarray
    gamma: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    @classmethod
    def from_trajectory(cls, traj):
        return cls(traj.s.copy(), traj.gamma, traj.gamma1, traj.gamma2, traj.gamma3)

    def subsample(self, every):
        sl = slice(None, None, every)
        return CurveSamples(self.t[sl], self.gamma[sl], self.d1[sl], self.d2[sl], self.d3[sl])


def speed_jet(spec, gamma, d1, d2, d3):
    """F(c(t), c'(t)) and its first two t-derivatives at one sample."""
    b = jets.basis((1,), (2,), 2)
    h = jets.variables(b, [0.0])[0]
    c = [gamma[i] + d1[i] * h + 0.5 * d2[i] * h * h for i in range(len(gamma))]
    c1 = [d1[i] + d2[i] * h + 0.5 * d3[i] * h * h for i in range(len(gamma))]
    Fj = jets.as_jet(spec.F(c, c1), b)
    return Fj.partial([]), Fj.partial([0]), Fj.partial([0, 0])


def reparametrize(spec, curve, resample=None):
    """Re-express a curve in the arc-length parameter of ``spec``.

    Derivatives are transformed pointwise by the chain rule; the new
    parameter values come from cumulative quadrature of the speed.  With
    ``resample`` (a count) the result is interpolated onto a uniform grid
    of the arc-length parameter by cubic Hermite splines.
    """
    n = curve.gamma.shape[1]
    m = len(curve.t)
    out = [np.empty((m, n)) for _ in range(3)]
    speed, dspeed = np.empty(m), np.empty(m)
    for k in range(m):
        sp, sp1, sp2 = speed_jet(spec, curve.gamma[k], curve.d1[k], curve.d2[k], curve.d3[k])
        if sp <= 0:
            raise DomainError("zero velocity along the curve")
        g1 = curve.d1[k] / sp
        g2 = (curve.d2[k] - g1 * sp1) / sp ** 2
        g3 = (curve.d3[k] - 3 * g2 * sp * sp1 - g1 * sp2) / sp ** 3
        out[0][k], out[1][k], out[2][k] = g1, g2, g3
        speed[k], dspeed[k] = sp, sp1
    s = cumulative_trapezoid(speed, curve.t, initial=0.0) if m > 1 else np.zeros(1)
    # Simpson correction with the known speed derivative keeps the quadrature O(h^4)
    if m > 1:
        dt = np.diff(curve.t)
        s = s - np.concatenate([[0.0], np.cumsum(dt ** 2 / 12 * np.diff(dspeed))])
    res = CurveSamples(s, curve.gamma.copy(), *out)
    if resample:
        grid = np.linspace(s[0], s[-1], int(resample))
        levels = [res.gamma, res.d1, res.d2, res.d3]
        interp = [CubicHermiteSpline(s, levels[i], levels[i + 1], axis=0)(grid) for i in range(3)]
        third = CubicHermiteSpline(s, res.d3, np.gradient(res.d3, s, axis=0), axis=0)(grid)
        res = CurveSamples(grid, *interp, third)
    return res


def tangency_vector(q, d1, d2, d3):
    X = covariant_acceleration(q, d2)
    DD = second_covariant(q, d1, d2, d3)
    return DD - 3 * (d1 @ q.g @ X) / q.F2 * X


def tangency_residuals(spec, curve):
    res = np.empty(len(curve.t))
    for k in range(len(curve.t)):
        q = local_quantities(spec, curve.gamma[k], curve.d1[k])
        U = tangency_vector(q, curve.d1[k], curve.d2[k], curve.d3[k])
        y = curve.d1[k]
        U_perp = U - (y @ q.g @ U) / q.F2 * y
        nU = np.sqrt(max(U @ q.g @ U, 0.0))
        res[k] = np.sqrt(max(U_perp @ q.g @ U_perp, 0.0)) / (nU + 1)
    return res


def tangency_test(spec, curve, tol=1e-6):
    """Parameter-free circle test: U must be parallel to the velocity."""
    r = tangency_residuals(spec, curve)
    rep = ResidualReport("tangency_test")
    rep.add("tangency", float(r.max()), tol, tag="tangency of the circle deviation vector")
    rep.meta["samples"] = len(r)
    return rep
