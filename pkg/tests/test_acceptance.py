"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import filecmp
import tempfile
from pathlib import Path

import numpy as np
import pytest

import conftest
from _families import (EUCLID2, EUCLID3, FAMILIES, QUARTIC, RANDERS2, admissible_init, random_tangent_points,
                       richardson_gradient)
from concircular import circles, conformal, config, fields, jets
from concircular.connection import ConnectionJets, y_connection, y_transfer
from concircular.curvature import (RIEMANN_ORDERS, classify, flag_curvature, flag_directions, perturbed_riemann,
                                   riemann_jet)
from concircular.experiments import run_config
from concircular.metric import ConformalScale, Euclidean, MinkowskiNorm, Randers, sample_points


def record(number, passed, detail):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


# 1 -------------------------------------------------------------------------------

def test_criterion_01_euclidean_closed_form():
    init = circles.CircleInit([0.0, 0.0], [1.0, 0.0], [0.0, 2.0])

    def error(step):
        traj = circles.integrate(EUCLID2, init, np.pi, step)
        s = traj.s
        ref = np.stack([0.5 * np.sin(2 * s), 0.5 - 0.5 * np.cos(2 * s)], axis=1)
        return np.abs(traj.gamma - ref).max()

    e1, e2 = error(1e-3), error(5e-4)
    ratio = e1 / e2
    ok = e1 <= 1e-8 and 14.0 <= ratio <= 18.0
    record(1, ok, f"max error {e1:.3e} at step 1e-3, halving ratio {ratio:.2f}")
    assert e1 <= 1e-8
    assert 14.0 <= ratio <= 18.0


# 2 -------------------------------------------------------------------------------

def test_criterion_02_circle_invariants():
    cases = [
        (EUCLID2, [0.1, -0.2], [1.0, 0.3], [0.2, 1.0], 1.5),
        (EUCLID2, [0.0, 0.3], [-0.4, 1.0], [1.0, 0.0], 0.7),
        (RANDERS2, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], 1.0),
        (RANDERS2, [0.1, 0.1], [0.3, 1.0], [1.0, -0.2], 2.0),
        (QUARTIC, [0.0, 0.0], [1.0, 0.5], [0.0, 1.0], 1.0),
        (QUARTIC, [0.2, -0.1], [-1.0, 0.2], [0.3, 1.0], 2.5),
    ]
    worst_F, worst_k = 0.0, 0.0
    for spec, x0, w1, w2, kappa in cases:
        init = admissible_init(spec, x0, w1, w2, kappa)
        traj = circles.integrate(spec, init, 5.0, 2e-3)
        worst_F = max(worst_F, traj.F_residual.max())
        worst_k = max(worst_k, traj.knorm_residual.max())
    ok = worst_F <= 1e-7 and worst_k <= 1e-7
    record(2, ok, f"max |F-1| {worst_F:.3e}, max relative knorm drift {worst_k:.3e} over 6 circles")
    assert worst_F <= 1e-7
    assert worst_k <= 1e-7


# 3 -------------------------------------------------------------------------------

def _test_tensor(coeffs):
    a, b, c, d = coeffs

    def T(x, y):
        r2 = y[0] * y[0] + y[1] * y[1]
        return [[a * x[0] * y[0] * y[1] / r2 + jets.sin(x[1]), b * y[1] * y[1] / r2],
                [c * x[1] * y[0] / jets.sqrt(r2) + x[0] * x[1], d + x[0] * y[0] * y[0] / r2]]

    return T


def _field(coeffs):
    a, b, c = coeffs
    return lambda x: [1.0 + a * x[1] + c * x[0] * x[1], 0.5 + b * x[0] * x[0]]


def test_criterion_03_metric_compatibility_and_transfer():
    rng = np.random.default_rng(3)
    worst_g, worst_t = 0.0, 0.0
    for name, spec in FAMILIES.items():
        for p in random_tangent_points(spec, rng, 100):
            cj = ConnectionJets(spec, p, 1, 3)
            worst_g = max(worst_g, np.abs(cj.h_derivative(cj.g, "ll").value).max())
        for _ in range(100):
            T = _test_tensor(rng.uniform(-1, 1, 4))
            Y = _field(rng.uniform(-0.5, 0.5, 3))
            x = rng.uniform(-0.5, 0.5, 2)
            yc = y_connection(spec, Y, x)

            def T_star(z):
                y = np.array(Y(z), float)
                return np.array([[float(jets.value(c)) for c in row] for row in T(z, y)])

            direct = richardson_gradient(T_star, x)
            Tv = T_star(x)
            # T is of type (1, 1): T^a_b
            direct = (direct + np.einsum("rb,ark->abk", Tv, yc.gamma_star)
                      - np.einsum("ar,rbk->abk", Tv, yc.gamma_star))
            rhs = y_transfer(spec, T, "ul", Y, x)
            worst_t = max(worst_t, np.abs(direct - rhs).max() / (np.abs(rhs).max() + 1))
    ok = worst_g <= 1e-8 and worst_t <= 1e-6
    record(3, ok, f"max |g_ij|k| {worst_g:.3e}, transfer rule residual {worst_t:.3e} (5 families x 100 points)")
    assert worst_g <= 1e-8
    assert worst_t <= 1e-6


# 4 -------------------------------------------------------------------------------

def test_criterion_04_lie_derivative_oracle():
    rng = np.random.default_rng(4)
    names = list(FAMILIES)
    worst, worst_y = 0.0, 0.0
    for k in range(50):
        spec = FAMILIES[names[k % len(names)]]
        V = fields.random_polynomial_field(rng, 2, degree=2, scale=0.5)
        p = random_tangent_points(spec, rng, 1, box=(-0.3, 0.3))[0]
        formula = fields.lie_derivatives(spec, V, p)
        oracle = fields.lie_flow_oracle(spec, V, p)
        scale = 1 + max(np.abs(formula.lie_g).max(), np.abs(formula.lie_2G).max())
        worst = max(worst, np.abs(formula.lie_g - oracle.lie_g).max() / scale,
                    np.abs(formula.lie_2G - oracle.lie_2G).max() / scale)
        worst_y = max(worst_y, np.abs(oracle.lie_y).max())
    ok = worst <= 1e-5 and worst_y <= 1e-6
    record(4, ok, f"formula vs flow oracle {worst:.3e}, L y oracle {worst_y:.3e} (50 triples)")
    assert worst <= 1e-5
    assert worst_y <= 1e-6


# 5 -------------------------------------------------------------------------------

def test_criterion_05_concircular_consistency():
    rng = np.random.default_rng(5)
    good = {"x": ["x1", "x2"], "const": ["1.0", "-0.5"]}
    worst = 0.0
    failures = []
    for spec in (EUCLID2, QUARTIC):
        for name, comps in good.items():
            V = fields.VectorFieldSpec(2, comps)
            for p in random_tangent_points(spec, rng, 10):
                worst = max(worst, fields.concircular_residuals(spec, V, p).max_residual)
    sq = fields.VectorFieldSpec(2, ["x1**2", "0"])
    p = random_tangent_points(EUCLID2, rng, 1, box=(0.2, 0.5))[0]
    r = fields.concircular_residuals(EUCLID2, sq, p)
    bad = max(r.eq1_residual, r.eq2_residual, r.eq3_residual)
    tested = [(EUCLID2, good["x"]), (EUCLID2, good["const"]), (QUARTIC, good["x"]), (QUARTIC, good["const"]),
              (EUCLID2, ["x1**2", "0"]), (EUCLID2, ["-x2", "x1"]),
              (EUCLID2, ["2*x1**2 - (x1**2 + x2**2)", "2*x1*x2"]),
              (EUCLID2, ["x1**3 - 3*x1*x2**2", "3*x1**2*x2 - x2**3"]),
              (QUARTIC, ["-x2", "x1"])]
    for spec, comps in tested:
        V = fields.VectorFieldSpec(2, comps)
        sample = sample_points(spec, rng, 3, 4)
        rep = fields.theorem2_check(spec, V, sample, 1e-8, strict=False)
        if rep.meta["verdict"] != rep.meta["pde_verdict"]:
            failures.append(comps)
    ok = worst <= 1e-8 and bad >= 1e-2 and not failures
    record(5, ok, f"max residual for x/const {worst:.3e}, x1^2 residual {bad:.3e}, "
                  f"verdict disagreements {len(failures)} of {len(tested)}")
    assert worst <= 1e-8
    assert bad >= 1e-2
    assert not failures


# 6 -------------------------------------------------------------------------------

def _random_conformal_field(rng, dim):
    """Translation + dilation + rotation in the (x1, x2) plane + special conformal part."""
    t = rng.uniform(-1, 1, dim).tolist()
    lam, w = rng.uniform(-1, 1, 2).tolist()
    b = rng.uniform(-1, 1, dim).tolist()
    sq = " + ".join(f"x{i + 1}**2" for i in range(dim))
    bx = " + ".join(f"({b[i]!r})*x{i + 1}" for i in range(dim))
    comps = [f"({t[i]!r}) + ({lam!r})*x{i + 1} + 2*({bx})*x{i + 1} - ({b[i]!r})*({sq})" for i in range(dim)]
    comps[0] += f" - ({w!r})*x2"
    comps[1] += f" + ({w!r})*x1"
    return fields.VectorFieldSpec(dim, comps)


def test_criterion_06_mean_torsion_identity():
    rng = np.random.default_rng(6)
    worst_id, worst_gap, nonconf = 0.0, 0.0, 0
    cases = []
    for _ in range(6):
        cases.append((EUCLID2, _random_conformal_field(rng, 2)))
        cases.append((EUCLID3, _random_conformal_field(rng, 3)))
        t, lam = rng.uniform(-1, 1, 2).tolist(), float(rng.uniform(-1, 1))
        cases.append((QUARTIC, fields.VectorFieldSpec(2, [f"({t[0]!r}) + ({lam!r})*x1",
                                                          f"({t[1]!r}) + ({lam!r})*x2"])))
    for spec, V in cases:
        sample = sample_points(spec, rng, 3, 4)
        if not fields.classify_conformal(spec, V, sample, 1e-8).conformal:
            nonconf += 1
        for p in sample[:4]:
            worst_id = max(worst_id, fields.mean_torsion_identity_residual(spec, V, p))
            worst_gap = max(worst_gap, fields.concircular_residuals(spec, V, p).contraction_gap)
    ok = worst_id <= 1e-8 and worst_gap <= 1e-8 and nonconf == 0
    record(6, ok, f"identity residual {worst_id:.3e}, trace of first equation {worst_gap:.3e}, "
                  f"{len(cases)} conformal fields")
    assert nonconf == 0
    assert worst_id <= 1e-8
    assert worst_gap <= 1e-8


# 7 -------------------------------------------------------------------------------

def test_criterion_07_circles_to_circles():
    rng = np.random.default_rng(7)
    fam = conformal.Remark61Family(1.0, (0.0, 0.0), 1.0)
    u = fam.scale()
    worst = 0.0
    for k in range(4):
        w1 = rng.standard_normal(2)
        kappa = 0.0 if k == 0 else rng.uniform(0.5, 3.0)
        init = admissible_init(EUCLID2, rng.uniform(-0.3, 0.3, 2), w1, rng.standard_normal(2), kappa)
        traj = circles.integrate(EUCLID2, init, 1.0, 2e-3)
        rep = conformal.circle_mapping_test(EUCLID2, u, traj, every=10)
        worst = max(worst, rep["tilde_tangency"].value)
    agree = 0
    for k in range(20):
        xi = rng.standard_normal(2)
        xi /= np.linalg.norm(xi)
        tau = rng.uniform(-0.4, 0.4) * xi if k % 2 == 0 else rng.uniform(-0.4, 0.4, 2)
        init = circles.CircleInit(tau, xi, [0.0, 0.0])
        traj = circles.integrate(EUCLID2, init, 0.5, 1e-2)
        rep = conformal.circle_mapping_test(EUCLID2, u, traj)
        worst = max(worst, rep["tilde_tangency"].value)
        num = conformal.tilde_acceleration_norm(fam, circles.CurveSamples.from_trajectory(traj))
        numeric = "geodesic" if num.max() <= 1e-7 else "circle"
        agree += conformal.remark61_predicates(fam, ("line", xi, tau), 1e-9).kind == numeric
    ok = worst <= 1e-5 and agree == 20
    record(7, ok, f"max rescaled tangency residual {worst:.3e}, line predicate agreement {agree}/20")
    assert worst <= 1e-5
    assert agree == 20


# 8 -------------------------------------------------------------------------------

def test_criterion_08_curvature_transfer():
    rng = np.random.default_rng(8)
    fam = conformal.Remark61Family(1.0, (0.0, 0.0), 1.0)
    tilde = fam.metric()
    K = fam.curvature()
    sample = sample_points(tilde, rng, 5, 5)
    worst = 0.0
    count = 0
    for p in sample:
        cj = ConnectionJets(tilde, p, *RIEMANN_ORDERS)
        R = riemann_jet(cj).value
        for v in flag_directions(cj.g.value, p.y, rng, 2):
            worst = max(worst, abs(flag_curvature(R, cj.g.value, p.y, v) - K) / abs(K))
            count += 1
    kind = classify(tilde, sample).kind
    kappa = 2.0
    homo = ConformalScale(tilde, repr(1 / kappa))
    hom_err = 0.0
    for p in sample[:10]:
        cj = ConnectionJets(homo, p, *RIEMANN_ORDERS)
        R = riemann_jet(cj).value
        for v in flag_directions(cj.g.value, p.y, rng, 1):
            hom_err = max(hom_err, abs(flag_curvature(R, cj.g.value, p.y, v) - K * (1 / kappa) ** 2))
    homo_up = ConformalScale(tilde, repr(kappa))
    for p in sample[:10]:
        cj = ConnectionJets(homo_up, p, *RIEMANN_ORDERS)
        R = riemann_jet(cj).value
        for v in flag_directions(cj.g.value, p.y, rng, 1):
            hom_err = max(hom_err, abs(flag_curvature(R, cj.g.value, p.y, v) - K * kappa ** 2))
    ok = count == 50 and worst <= 1e-5 and kind == "constant_flag" and hom_err <= 1e-9
    record(8, ok, f"{count} flags, max relative deviation from K = {K:g}: {worst:.3e}; kind {kind}; "
                  f"homothety error {hom_err:.3e}")
    assert count == 50
    assert worst <= 1e-5
    assert kind == "constant_flag"
    assert hom_err <= 1e-9


# 9 -------------------------------------------------------------------------------

def test_criterion_09_two_path_curvature():
    rng = np.random.default_rng(9)
    cases = [(EUCLID2, "exp(x1)"), (EUCLID2, "1 + 0.3*x1**2 + 0.2*sin(x2)"),
             (RANDERS2, "1 + 0.3*x1 + 0.2*x2**2"), (QUARTIC, "exp(0.4*x1*x2) + 0.2*x1"),
             (conformal.Remark61Family(1.0, (0.0, 0.0), 1.0).metric(), "1 + 0.2*cos(x1)")]
    worst = 0.0
    for k in range(100):
        spec, u = cases[k % len(cases)]
        p = random_tangent_points(spec, rng, 1)[0]
        direct, via = conformal.perturbation_two_path(spec, u, p)
        worst = max(worst, np.abs(direct - via).max() / (np.abs(direct).max() + 1))
    ok = worst <= 1e-7
    record(9, ok, f"perturbed vs direct Riemann curvature {worst:.3e} at 100 points")
    assert worst <= 1e-7


# 10 ------------------------------------------------------------------------------

def _random_curve(rng, spec):
    c = rng.uniform(-0.4, 0.4, (3, spec.dim))
    x0 = rng.uniform(-0.2, 0.2, spec.dim)
    t = np.linspace(0.0, 0.6, 31)[:, None]
    g = x0 + c[0] * t + c[1] * t ** 2 + c[2] * t ** 3
    d1 = c[0] + 2 * c[1] * t + 3 * c[2] * t ** 2
    d2 = 2 * c[1] + 6 * c[2] * t
    d3 = np.broadcast_to(6 * c[2], g.shape).copy()
    return circles.reparametrize(spec, circles.CurveSamples(t[:, 0], g, d1, d2, d3))


def test_criterion_10_deviation_identity():
    rng = np.random.default_rng(10)
    scales = ["exp(x1)", "1 + 0.3*x1**2 + 0.2*sin(x2)", "1.5 + x1*x2 + 0.1*x2**3"]
    worst = 0.0
    for spec in (EUCLID2, RANDERS2):
        for u in scales:
            for _ in range(3):
                curve = _random_curve(rng, spec)
                worst = max(worst, max(r[0] for r in conformal.deviation_identity(spec, u, curve)))
    ok = worst <= 1e-6
    record(10, ok, f"deviation identity residual {worst:.3e} on 18 arc-length curves")
    assert worst <= 1e-6


# 11 ------------------------------------------------------------------------------

def test_criterion_11_determinism():
    diffs = []
    paths = config.bundled_configs()
    with tempfile.TemporaryDirectory() as tmp:
        for path in paths:
            cfg = config.load(path)
            a, b = Path(tmp) / f"{path.stem}_a", Path(tmp) / f"{path.stem}_b"
            run_config(cfg, a)
            run_config(cfg, b)
            names = sorted(p.name for p in a.glob("*.json"))
            assert names == sorted(p.name for p in b.glob("*.json"))
            _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
            diffs.extend(f"{path.stem}/{m}" for m in mismatch + errors)
    ok = not diffs and len(paths) > 0
    record(11, ok, f"{len(paths)} bundled configs run twice, differing reports: {diffs or 'none'}")
    assert paths
    assert not diffs
