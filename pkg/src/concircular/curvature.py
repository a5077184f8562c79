"""Riemann curvature of a spray, flag curvature and curvature classification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets
from .connection import ConnectionJets, lift_tensor
from .errors import DomainError, InsufficientSamples
from .jets import einsum
from .metric import TangentPoint, evaluate_F, fundamental

RIEMANN_ORDERS = (2, 4)


def riemann_jet(cj):
    """R^i_k from the spray jets of ``cj``; needs orders (2, 4) of F²."""
    G, N = cj.G, cj.N
    dG = G.dx()                       # dG[i, k] = d_k G^i
    ydN = cj.along_y(N.dx())          # y^j d_j N^i_k
    return (2 * dG - ydN + 2 * einsum("j,ijk->ik", G, cj.Gjk)
            - einsum("ij,jk->ik", N, N))


def riemann_of_spray(G, dG, N, dN, Gjk, y):
    """Value-level assembly: dG[i, k] = d_k G^i, dN[i, k, j] = d_j N^i_k."""
    return (2 * dG - np.einsum("ikj,j->ik", dN, y) + 2 * np.einsum("j,ijk->ik", G, Gjk)
            - N @ N)


def flag_curvature(R, g, y, v):
    """Sectional value of the flag spanned by y and v."""
    num = np.einsum("ij,ik,k,j->", g, R, v, v)
    den = (y @ g @ y) * (v @ g @ v) - (y @ g @ v) ** 2
    if den <= 1e-14 * (y @ g @ y) * (v @ g @ v):
        raise DomainError("degenerate flag: v is parallel to y")
    return float(num / den)


def flag_directions(g, y, rng, count):
    """Directions g_y-orthogonal to y, resampling degenerate draws."""
    out = []
    yy = y @ g @ y
    while len(out) < count:
        v = rng.standard_normal(len(y))
        v = v - (y @ g @ v) / yy * y
        nv = np.sqrt(v @ g @ v)
        if nv < 1e-8:
            continue
        out.append(v / nv)
    return out


@dataclass(frozen=True)
class RiemannData:
    R: np.ndarray
    ric: float
    flag_samples: list = field(default_factory=list)


def riemann(spec, p, n_flags=0, rng=None):
    cj = ConnectionJets(spec, p, *RIEMANN_ORDERS)
    R = riemann_jet(cj).value
    samples = []
    if n_flags:
        rng = rng if rng is not None else np.random.default_rng(0)
        g = cj.g.value
        for v in flag_directions(g, p.y, rng, n_flags):
            samples.append((v, flag_curvature(R, g, p.y, v)))
    return RiemannData(R, float(np.trace(R)), samples)


def scalar_flag_residual(R, g, y, F2):
    """Distance of R from K (F² delta - y y_flat), with K from the Ricci scalar.

    Computed at the F-normalized direction so the residual is 0-homogeneous.
    """
    n = len(y)
    K = np.trace(R) / ((n - 1) * F2)
    Rn = R / F2
    yh = y / np.sqrt(F2)
    model = K * (np.eye(n) - np.outer(yh, g @ yh))
    return float(K), float(np.abs(Rn - model).max() / (np.abs(Rn).max() + 1))


@dataclass(frozen=True)
class CurvatureClassification:
    kind: str
    K_estimate: object
    residual: float
    flags: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)


def classify(spec, sample, tol=1e-6):
    sample = list(sample)
    bases = {tuple(np.round(p.x, 12)) for p in sample}
    if len(sample) < 20 or len(bases) < 3:
        raise InsufficientSamples(
            f"classification needs >= 20 points over >= 3 base points, got {len(sample)} over {len(bases)}")
    rows = []
    for p in sample:
        cj = ConnectionJets(spec, p, *RIEMANN_ORDERS)
        R = riemann_jet(cj).value
        F2 = cj.F2.value
        K, res = scalar_flag_residual(R, cj.g.value, p.y, F2)
        rows.append((tuple(np.round(p.x, 12)), K, res))
    scalar_res = max(r[2] for r in rows)
    Ks = np.array([r[1] for r in rows])
    scale = 1 + np.abs(Ks).max()
    groups = {}
    for key, K, _ in rows:
        groups.setdefault(key, []).append(K)
    y_spread = max(max(v) - min(v) for v in groups.values()) / scale
    x_spread = float(Ks.max() - Ks.min()) / scale
    flags = {
        "scalar_flag": scalar_res <= tol,
        "isotropic_flag": scalar_res <= tol and y_spread <= tol,
        "constant_flag": scalar_res <= tol and y_spread <= tol and x_spread <= tol,
        "einstein": y_spread <= tol,
    }
    flags = {k: bool(v) for k, v in flags.items()}
    if flags["constant_flag"]:
        kind, K_est, residual = "constant_flag", float(np.mean(Ks)), max(scalar_res, x_spread)
    elif flags["isotropic_flag"]:
        kind, K_est, residual = "isotropic_flag", {k: float(np.mean(v)) for k, v in sorted(groups.items())}, max(scalar_res, y_spread)
    elif flags["scalar_flag"]:
        kind, K_est, residual = "scalar_flag", [float(k) for k in Ks], scalar_res
    elif flags["einstein"]:
        kind, K_est, residual = "einstein", {k: float(np.mean(v)) for k, v in sorted(groups.items())}, y_spread
    else:
        kind, K_est, residual = "none", [float(k) for k in Ks], scalar_res
    return CurvatureClassification(kind, K_est, float(residual), flags,
                                   [(list(map(float, k)), float(K), float(r)) for k, K, r in rows])


# -- perturbation of a spray ---------------------------------------------------

def _perturbation_jet(H, cj):
    if hasattr(H, "jet"):
        return H.jet(cj)
    return lift_tensor(H, cj.X, cj.Y, cj.cfg.basis())


def perturbed_riemann(spec, H, p, homogeneity_tol=1e-8):
    """Riemann curvature of the spray G + H computed from the base spray.

    ``H`` is either a function ``H(x, y)`` returning components or an object
    with a ``jet(cj)`` method building the components from the base jets.
    The horizontal derivative ``;`` is that of the base Berwald connection.
    """
    cj = ConnectionJets(spec, p, *RIEMANN_ORDERS)
    Hj = _perturbation_jet(H, cj)
    Hy = Hj.dy()                      # H^i_{.m}
    euler = einsum("im,m->i", Hy, cj.Y) - 2 * Hj
    scale = np.abs(Hj.value).max() + np.abs(Hy.value).max() * np.abs(p.y).max() + 1e-300
    if np.abs(euler.value).max() > homogeneity_tol * max(scale, 1.0):
        raise DomainError("spray perturbation is not 2-homogeneous in y")
    H_k = cj.h_derivative(Hj, "u", "berwald")        # H^i_{;k}
    # y^m H^i_{;m} expanded without the Berwald coefficients, so it can be
    # differentiated in y once more at the same truncation order
    H_0 = (einsum("im,m->i", Hj.dx(), cj.Y) - 2 * einsum("ir,r->i", Hy, cj.G)
           + einsum("r,ir->i", Hj, cj.N))
    yH_mk = H_0.dy() - H_k                            # y^m H^i_{;m.k}
    Hyy = Hy.dy()
    Rt = (riemann_jet(cj) + 2 * H_k - yH_mk + 2 * einsum("m,imk->ik", Hj, Hyy)
          - einsum("im,mk->ik", Hy, Hy))
    return Rt.value
