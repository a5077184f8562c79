"""Vector fields: complete lifts, Lie derivatives along V^c, the flow-based
oracle for them, and the conformal / projective / concircular tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr, jets
from .connection import ConnectionJets, _nested_stack, _subs
from .errors import ConfigError, DomainError, InsufficientSamples
from .jets import einsum
from .metric import TangentPoint, fundamental, random_direction, sample_points
from .report import ResidualReport

LIE_ORDERS = (2, 4)
CONCIRCULAR_ORDERS = (3, 4)


class NotConformalError(ValueError):
    """A test that presupposes a conformal field was given a non-conformal one."""


@dataclass(eq=False)
class VectorFieldSpec:
    """A vector field V = V^i(x) d/dx^i given by expressions or callables."""

    dim: int
    components: list

    def __post_init__(self):
        if callable(self.components):
            self._fn, self._src = self.components, None
            return
        comps = list(self.components)
        if len(comps) != self.dim:
            raise ConfigError(f"vector field needs {self.dim} components, got {len(comps)}")
        parsed = []
        for c in comps:
            if isinstance(c, (int, float)):
                parsed.append((lambda v: (lambda x: v))(float(c)))
            elif isinstance(c, str):
                parsed.append(expr.parse_x(c, self.dim))
            else:
                parsed.append(c)
        self._parts = parsed
        self._src = [c if isinstance(c, str) else repr(float(c)) if isinstance(c, (int, float)) else None
                     for c in comps]
        self._fn = lambda x: [f(x) for f in self._parts]

    def __call__(self, x):
        return self._fn(x)

    def value(self, x):
        return np.array([float(jets.value(c)) for c in self._fn(np.asarray(x, float))])

    def to_dict(self):
        if self._src is None or any(s is None for s in self._src):
            raise ConfigError("vector field given by callables cannot be serialized")
        return {"components": list(self._src)}


def _vector_jet(V, X, basis):
    return jets.as_jet(_nested_stack(V(X)), basis)


class LieJets:
    """Lie derivatives along the complete lift of V, as jets at one point."""

    def __init__(self, cj, V):
        self.cj, self.V = cj, V
        b = cj.cfg.basis()
        self.Vj = _vector_jet(V, cj.X, b)
        if self.Vj.shape != (cj.n,):
            raise ValueError(f"vector field returned shape {self.Vj.shape}")

    @cached_property
    def dV(self):
        return self.Vj.dx()                      # dV[i, r] = d_r V^i

    @cached_property
    def W(self):
        return einsum("rs,s->r", self.dV, self.cj.Y)   # fiber part of V^c

    def Vc(self, T):
        s = _subs(T.ndim, "r")
        return einsum(f"{s}r,r->{s}", T.dx(), self.Vj) + einsum(f"{s}r,r->{s}", T.dy(), self.W)

    def lie(self, T, variance):
        out = self.Vc(T)
        s = _subs(T.ndim, "rz")
        for pos, v in enumerate(variance):
            src = s[:pos] + "r" + s[pos + 1:]
            a = s[pos]
            if v == "u":
                out = out - einsum(f"{src},{a}r->{s}", T, self.dV)
            else:
                out = out + einsum(f"{src},r{a}->{s}", T, self.dV)
        return out

    @cached_property
    def lie_g(self):
        return self.lie(self.cj.g, "ll")

    @cached_property
    def Ly(self):
        """L y_i := (L g_ir) y^r."""
        return einsum("ir,r->i", self.lie_g, self.cj.Y)

    @cached_property
    def VcF2(self):
        return self.Vc(self.cj.F2)

    @cached_property
    def lie_2G(self):
        cj = self.cj
        G2 = 2 * cj.G
        ddV = self.dV.dx()                       # ddV[i, r, j] = d_j d_r V^i
        return (self.Vc(G2) - einsum("r,ir->i", G2, self.dV)
                + einsum("irj,r,j->i", ddV, cj.Y, cj.Y))

    @property
    def A00(self):
        return self.lie_2G

    @cached_property
    def Aj0(self):
        return 0.5 * self.A00.dy()               # Aj0[k, j] = A^k_{j0}

    @cached_property
    def lie_C(self):
        return self.lie(self.cj.Cm, "ull")

    @cached_property
    def lie_I(self):
        return self.lie(self.cj.I, "l")


@dataclass(frozen=True)
class LieData:
    lie_g: np.ndarray
    lie_2G: np.ndarray
    A00: np.ndarray
    Aj0: np.ndarray
    lie_C: np.ndarray
    lie_I: np.ndarray
    lie_y: np.ndarray = None
    VcF2: float = None


def lie_derivatives(spec, V, p):
    cj = ConnectionJets(spec, p, *LIE_ORDERS)
    lj = LieJets(cj, V)
    A00 = lj.A00.value
    return LieData(lj.lie_g.value, A00, A00, lj.Aj0.value, lj.lie_C.value, lj.lie_I.value,
                   np.zeros(spec.dim), float(lj.VcF2.value))


def lie_cross_check(spec, V, p):
    """The same Lie derivatives by covariant-derivative identities.

    Returns (L g, L 2G) from V_{i|j} + V_{j|i} + 2 V^r_{|0} C_rij and
    V^i_{|0|0} + V^r R^i_r, for comparison with :func:`lie_derivatives`.
    """
    from .curvature import riemann_jet

    cj = ConnectionJets(spec, p, *LIE_ORDERS)
    Vj = _vector_jet(V, cj.X, cj.cfg.basis())
    DV = cj.h_derivative(Vj, "u")                        # V^i_{|j}
    V_low = einsum("ir,rj->ij", cj.g, DV)                # V_{i|j}
    V0 = cj.along_y(DV)                                  # V^r_{|0}
    lg = V_low + V_low.T + 2 * einsum("r,rij->ij", V0, cj.C)
    DDV = cj.h_derivative(V0, "u")
    l2G = cj.along_y(DDV) + einsum("r,ir->i", Vj, riemann_jet(cj))
    return lg.value, l2G.value


def flow_jet(V, x, eps, steps=8, order=2):
    """Flow map of x' = V(x) after time eps as an x-only jet (value, Jacobian, Hessian)."""
    x = np.asarray(x, float)
    b = jets.basis((len(x),), (order,), order)
    X = jets.variables(b, x)
    if eps == 0:
        return X
    h = eps / steps

    def f(Z):
        return jets.as_jet(_nested_stack(V(Z)), b)

    for _ in range(steps):
        k1 = f(X)
        k2 = f(X + 0.5 * h * k1)
        k3 = f(X + 0.5 * h * k2)
        k4 = f(X + h * k3)
        X = X + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return X


def lifted_flow(V, x, y, eps, steps=8):
    """Flow of the complete lift on TM, integrated directly in (x, y)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = len(x)
    if eps == 0:
        return x, y
    h = eps / steps

    def f(z):
        J = jets.as_jet(_nested_stack(V(jets.variables(jets.basis((n,), (1,), 1), z[:n]))),
                        jets.basis((n,), (1,), 1))
        return np.concatenate([J.value, J.grad(0).value @ z[n:]])

    z = np.concatenate([x, y])
    for _ in range(steps):
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return z[:n], z[n:]


_STENCIL = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))


def lie_flow_oracle(spec, V, p, eps=1e-3, steps=8, box=None):
    """Lie derivatives of g, 2G and y from their definition along the flow.

    The bracket of the definition is evaluated at eps * {-2, -1, 1, 2} and
    differentiated with a fourth-order central stencil.
    """
    from .connection import spray

    n = spec.dim

    def bracket(e):
        fj = flow_jet(V, p.x, e, steps)
        xt = fj.value
        if box is not None and (np.any(xt < box[0]) or np.any(xt > box[1])):
            raise DomainError(f"flow left the chart at eps={e}")
        J = fj.grad(0).value                       # J[i, k] = d x~^i / d x^k
        H = fj.grad(0).grad(0).value               # H[i, k, l]
        yt = J @ p.y
        Jinv = np.linalg.inv(J)
        pt = TangentPoint(xt, yt)
        g_new = fundamental(spec, pt).g
        g_old = fundamental(spec, p).g
        bg = g_new - Jinv.T @ g_old @ Jinv
        G_new = 2 * spray(spec, pt).G
        G_old = 2 * spray(spec, p).G
        b2G = G_new - J @ G_old + np.einsum("irj,r,j->i", H, p.y, p.y)
        _, y_direct = lifted_flow(V, p.x, p.y, e, steps)
        by = y_direct - yt
        return bg, b2G, by

    acc = [np.zeros((n, n)), np.zeros(n), np.zeros(n)]
    for k, w in _STENCIL:
        vals = bracket(k * eps)
        for a in range(3):
            acc[a] = acc[a] + w * vals[a]
    lg, l2G, ly = (a / eps for a in acc)
    return LieData(lg, l2G, l2G, None, None, None, ly, None)


# -- classification ------------------------------------------------------------

def _group_by_base(sample):
    groups = {}
    for idx, p in enumerate(sample):
        groups.setdefault(tuple(np.round(p.x, 12)), []).append(idx)
    return groups


def _check_sample(sample, min_points=10, min_bases=3, min_dirs=3):
    groups = _group_by_base(sample)
    if len(sample) < min_points or len(groups) < min_bases or min(len(v) for v in groups.values()) < min_dirs:
        raise InsufficientSamples(
            f"need >= {min_points} points over >= {min_bases} base points with >= {min_dirs} "
            f"directions each; got {len(sample)} points over {len(groups)} base points")
    return groups


@dataclass(frozen=True)
class ConformalVerdict:
    conformal: bool
    homothetic: bool
    killing: bool
    rho: list
    report: ResidualReport

    @property
    def kind(self):
        if not self.conformal:
            return "none"
        if self.killing:
            return "killing"
        return "homothetic" if self.homothetic else "conformal"


def classify_conformal(spec, V, sample, tol=1e-8):
    sample = list(sample)
    groups = _check_sample(sample)
    rho, res = np.empty(len(sample)), np.empty(len(sample))
    n = spec.dim
    for k, p in enumerate(sample):
        cj = ConnectionJets(spec, p, 1, 3)
        lj = LieJets(cj, V)
        Lg, g = lj.lie_g.value, cj.g.value
        rho[k] = np.trace(np.linalg.solve(g, Lg)) / (2 * n)
        res[k] = np.abs(Lg - 2 * rho[k] * g).max()
    spread_y = max(np.ptp(rho[idx]) for idx in groups.values())
    spread = float(np.ptp(rho))
    rep = ResidualReport("classify_conformal")
    rep.add("conformal_residual", res.max(), tol, tag="L g = 2 rho g")
    rep.add("rho_fiber_spread", spread_y, tol, tag="rho depends on x only")
    conformal = rep.passed
    homothetic = conformal and spread <= tol
    killing = conformal and np.abs(rho).max() <= tol
    rep.meta.update({"rho_spread": spread, "rho_max_abs": float(np.abs(rho).max())})
    per_base = [[list(map(float, key)), float(np.mean(rho[idx]))] for key, idx in groups.items()]
    return ConformalVerdict(bool(conformal), bool(homothetic), bool(killing), per_base, rep)


@dataclass(frozen=True)
class ProjectiveVerdict:
    projective: bool
    affine: bool
    P: list
    report: ResidualReport


def classify_projective(spec, V, sample, tol=1e-8):
    sample = list(sample)
    _check_sample(sample)
    res, Pn = np.empty(len(sample)), np.empty(len(sample))
    for k, p in enumerate(sample):
        cj = ConnectionJets(spec, p, 2, 4)
        A = LieJets(cj, V).A00.value
        F2 = cj.F2.value
        P = A @ cj.y_flat.value / F2
        res[k] = np.abs(A - P * p.y).max() / F2
        Pn[k] = P / np.sqrt(F2)
    rep = ResidualReport("classify_projective")
    rep.add("projective_residual", res.max(), tol, tag="L 2G = P y")
    projective = rep.passed
    affine = projective and np.abs(Pn).max() <= tol
    rep.meta["P_max_abs"] = float(np.abs(Pn).max())
    return ProjectiveVerdict(bool(projective), bool(affine), [float(v) for v in Pn], rep)


# -- concircular PDE system ----------------------------------------------------

@dataclass(frozen=True)
class ConcircularResiduals:
    T: np.ndarray
    theta: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    lambda_vec: np.ndarray
    eq1_residual: float
    eq2_residual: float
    eq3_residual: float
    contraction_gap: float = 0.0

    @property
    def max_residual(self):
        return max(self.eq1_residual, self.eq2_residual, self.eq3_residual)


def concircular_tensors(cj, lj):
    """The five spray tensors of the concircular PDE system, as values."""
    n = cj.n
    F2 = cj.F2.value
    y = cj.p.y
    yl = cj.y_flat.value
    d = np.eye(n)
    Ly = lj.Ly.value
    VcF2 = lj.VcF2.value
    Cm = cj.Cm.value
    A00 = lj.A00.value

    D1 = cj.h_derivative(lj.VcF2, "")                # [V^c F^2]_{|i}
    D10 = cj.along_y(D1)                            # [V^c F^2]_{|0}
    D100 = np.einsum("ij,i,j->", cj.h_derivative(D1, "l").value, y, y)
    A00_0 = cj.along_y(cj.h_derivative(lj.A00, "u")).value
    Ly_0 = cj.along_y(cj.h_derivative(lj.Ly, "l")).value
    D1, D10 = D1.value, float(D10.value)

    T = (3 * (np.einsum("i,kj->kij", Ly, d) + np.einsum("j,ki->kij", Ly, d))
         - 2 * F2 * lj.lie_C.value - 2 * np.einsum("r,rij,k->kij", Ly, Cm, y))
    theta = 3 * np.outer(y, F2 * Ly - VcF2 * yl) + 3 * F2 * VcF2 * d
    S = -D100 * y + 2 * F2 * A00_0
    Z = (np.outer(y, 4 * cj.g.value @ A00 - D1 - 4 * Ly_0) - 3 * D10 * d
         + 2 * F2 * (3 * lj.Aj0.value + 2 * np.einsum("r,kir->ki", A00, Cm)))
    lam = 4 * (A00 @ yl - 2 * D10) * y + 6 * F2 * A00
    return T, theta, S, Z, lam


def concircular_residuals(spec, V, p):
    cj = ConnectionJets(spec, p, *CONCIRCULAR_ORDERS)
    lj = LieJets(cj, V)
    return _residuals_from(cj, lj)


def _residuals_from(cj, lj):
    T, theta, S, Z, lam = concircular_tensors(cj, lj)
    F2 = cj.F2.value
    yl = cj.y_flat.value
    F5 = F2 ** 2.5
    E1 = F2 ** 2 * T - np.einsum("i,kj->kij", yl, theta) - np.einsum("j,ki->kij", yl, theta)
    E3 = F2 * Z - np.outer(lam, yl)
    # the j = k trace of E1 is an algebraic combination of L y, V^c(F^2) and L I
    n = cj.n
    Ly, VcF2, LI = lj.Ly.value, lj.VcF2.value, lj.lie_I.value
    trace = np.einsum("kik->i", E1)
    predicted = 3 * n * F2 ** 2 * (Ly - VcF2 / F2 * yl - 2 / (3 * n) * F2 * LI)
    gap = float(np.linalg.norm(trace - predicted) / F5)
    return ConcircularResiduals(T, theta, S, Z, lam, float(np.linalg.norm(E1) / F5),
                                float(np.linalg.norm(S) / F5), float(np.linalg.norm(E3) / F5), gap)


def mean_torsion_identity_residual(spec, V, p):
    """Residual of L y_i = F^-2 V^c(F^2) y_i + (2/3n) F^2 L I_i, 0-homogeneous."""
    cj = ConnectionJets(spec, p, *LIE_ORDERS)
    lj = LieJets(cj, V)
    F2, n = cj.F2.value, cj.n
    r = lj.Ly.value - lj.VcF2.value / F2 * cj.y_flat.value - 2 / (3 * n) * F2 * lj.lie_I.value
    return float(np.linalg.norm(r) / np.sqrt(F2))


def theorem1_check(spec, V, sample, tol=1e-8):
    """Concircular fields: conformal exactly when L I vanishes."""
    sample = list(sample)
    rep = ResidualReport("theorem1_check")
    eqs, LI, gaps, ident = [], [], [], []
    for p in sample:
        cj = ConnectionJets(spec, p, *CONCIRCULAR_ORDERS)
        lj = LieJets(cj, V)
        r = _residuals_from(cj, lj)
        eqs.append(r.max_residual)
        gaps.append(r.contraction_gap)
        F2 = cj.F2.value
        LI.append(float(np.linalg.norm(lj.lie_I.value) * np.sqrt(F2)))
        ident.append(float(np.linalg.norm(lj.Ly.value - lj.VcF2.value / F2 * cj.y_flat.value
                                          - 2 / (3 * cj.n) * F2 * lj.lie_I.value) / np.sqrt(F2)))
    concircular = max(eqs) <= tol
    if not concircular:
        rep.notice(f"precondition failed: concircular PDE residual {max(eqs):.3e} exceeds {tol:g}")
    conf = classify_conformal(spec, V, sample, tol)
    lie_I_vanishes = max(LI) <= tol
    rep.add("lie_mean_torsion", max(LI), tol, tag="Lie derivative of the mean Cartan torsion")
    rep.add("conformal_residual", conf.report["conformal_residual"].value, tol, tag="L g = 2 rho g")
    rep.add("trace_identity", max(gaps), tol, tag="trace of the first concircular equation")
    if concircular:
        rep.add("mean_torsion_identity", max(ident), tol, tag="L y = F^-2 V^c(F^2) y + (2/3n) F^2 L I")
        rep.add("conformal_iff_lie_I_zero", float(conf.conformal != lie_I_vanishes), 0.5,
                tag="conformal iff L I = 0 for concircular fields")
    rep.meta.update({"concircular": bool(concircular), "conformal": conf.conformal,
                     "lie_I_vanishes": bool(lie_I_vanishes), "max_pde_residual": max(eqs)})
    if concircular and not conf.conformal and not lie_I_vanishes:
        rep.meta["witness"] = "concircular field with L I != 0"
    return rep


def random_polynomial_field(rng, dim, degree=2, scale=0.3):
    """A random polynomial vector field, returned with its expression strings."""
    monos = [()]
    for d in range(1, degree + 1):
        monos += [m for m in _monomials(dim, d)]
    comps = []
    for _ in range(dim):
        terms = []
        for m in monos:
            c = float(np.round(rng.uniform(-scale, scale), 6))
            body = "*".join(f"x{i + 1}" for i in m) if m else "1"
            terms.append(f"({c!r})*{body}")
        comps.append(" + ".join(terms))
    return VectorFieldSpec(dim, comps)


def _monomials(dim, d, start=0):
    if d == 0:
        yield ()
        return
    for i in range(start, dim):
        for rest in _monomials(dim, d - 1, i):
            yield (i,) + rest


def search_theorem1_witness(spec, rng, trials=200, tol=1e-8, degree=2, points=3):
    """Randomized search for a concircular field with non-vanishing L I.

    Returns (field, report) for the first hit or ``None``; failing to find
    one is the expected outcome and not an error.
    """
    for _ in range(trials):
        V = random_polynomial_field(rng, spec.dim, degree)
        pts = sample_points(spec, rng, 1, points)
        ok = True
        for p in pts:
            if concircular_residuals(spec, V, p).max_residual > tol:
                ok = False
                break
        if not ok:
            continue
        sample = sample_points(spec, rng, 4, 3)
        rep = theorem1_check(spec, V, sample, tol)
        if "witness" in rep.meta:
            return V, rep
    return None


def _rho_jets(cj, lj, rho_expr=None):
    if rho_expr is not None:
        return jets.as_jet(rho_expr(cj.X), cj.cfg.basis())
    return lj.VcF2 / (2 * cj.F2)


def theorem2_check(spec, V, sample, tol=1e-8, rho=None, strict=True):
    """Conformal fields: concircular exactly when the factor rho is concircular.

    ``rho`` optionally supplies the conformal factor in closed form (a
    function of x); by default it is the jet of V^c(F^2) / (2 F^2), which
    equals rho for a conformal field and is differentiated exactly.
    """
    sample = list(sample)
    conf = classify_conformal(spec, V, sample, tol)
    rep = ResidualReport("theorem2_check")
    rep.add("conformal_residual", conf.report["conformal_residual"].value, tol, tag="L g = 2 rho g")
    residuals = [concircular_residuals(spec, V, p).max_residual for p in sample]
    pde_verdict = max(residuals) <= tol
    rep.meta["pde_verdict"] = bool(pde_verdict)
    rep.meta["max_pde_residual"] = float(max(residuals))
    if not conf.conformal:
        msg = "field is not conformal; the factor test does not apply"
        if strict:
            raise NotConformalError(msg)
        rep.notice(msg)
        rep.meta["verdict"] = False
        rep.meta["applicable"] = False
        return rep
    hess, tors, lams = [], [], []
    groups = _group_by_base(sample)
    for p in sample:
        cj = ConnectionJets(spec, p, *CONCIRCULAR_ORDERS)
        lj = LieJets(cj, V)
        r = _rho_jets(cj, lj, rho)
        ri = r.dx()
        rij = cj.h_derivative(ri, "l").value
        g, gi = cj.g.value, cj.g_inv.value
        lam = float(np.einsum("ij,ij->", rij, gi) / cj.n)
        hess.append(float(np.abs(rij - lam * g).max()))
        rho_up = gi @ ri.value
        tors.append(float(np.abs(np.einsum("r,kri->ki", rho_up, cj.Cm.value)).max() * np.sqrt(cj.F2.value)))
        lams.append(lam)
    lams = np.array(lams)
    lam_spread = max(np.ptp(lams[idx]) for idx in groups.values())
    rep.add("rho_hessian", max(hess), tol, tag="rho_{i|j} = lambda g_ij")
    rep.add("rho_torsion", max(tors), tol, tag="rho^r C^k_ri = 0")
    rep.add("lambda_fiber_spread", lam_spread, tol, tag="lambda depends on x only")
    verdict = max(hess) <= tol and max(tors) <= tol and lam_spread <= tol
    rep.add("verdicts_agree", float(verdict != pde_verdict), 0.5,
            tag="factor test agrees with the concircular PDE system")
    rep.meta["verdict"] = bool(verdict)
    rep.meta["applicable"] = True
    rep.meta["lambda"] = [float(v) for v in lams]
    return rep
