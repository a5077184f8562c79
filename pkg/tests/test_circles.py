import csv
import json

import numpy as np
import pytest

from _families import EUCLID2, RANDERS2, RIEM2, admissible_init
from concircular.circles import (CircleInit, CurveSamples, circle_invariants, euclidean_circle,
                                 euclidean_circle_samples, integrate, reparametrize, speed_jet, tangency_test)
from concircular.errors import DomainError, IntegrationError
from concircular.metric import Riemannian
from concircular.report import ResidualReport


def test_admissibility():
    assert CircleInit([0, 0], [1, 0], [0, 2]).is_admissible(EUCLID2)
    assert not CircleInit([0, 0], [2, 0], [0, 2]).is_admissible(EUCLID2)
    assert not CircleInit([0, 0], [1, 0], [1, 2]).is_admissible(EUCLID2)
    init = admissible_init(RANDERS2, [0.1, 0.2], [1, 0.3], [0.2, 1], 1.5)
    a, b = init.admissibility(RANDERS2)
    assert a < 1e-14 and b < 1e-14


def test_inadmissible_initial_data_rejected():
    with pytest.raises(DomainError):
        integrate(EUCLID2, CircleInit([0, 0], [1, 0], [1, 1]), 1.0)
    traj = integrate(EUCLID2, CircleInit([0, 0], [1, 0], [1, 1]), 0.1, 1e-2, strict=False,
                     require_admissible=False)
    assert not traj.admissible


def test_bad_step_rejected():
    with pytest.raises(ValueError):
        integrate(EUCLID2, CircleInit([0, 0], [1, 0], [0, 1]), 1.0, step=0.0)


def test_euclidean_closed_form():
    a, b, c, k = euclidean_circle([1, 2], [0, 1], [-3, 0])
    assert k == 3
    assert np.allclose(a + c, [1, 2]) and np.allclose(c, [1 - 1 / 3, 2])
    s = np.linspace(0, 2, 7)
    g0, g1, g2, g3 = euclidean_circle_samples([1, 2], [0, 1], [-3, 0], s)
    assert np.allclose(np.linalg.norm(g0 - c, axis=1), 1 / 3)
    assert np.allclose(np.linalg.norm(g1, axis=1), 1)
    assert np.allclose(np.linalg.norm(g2, axis=1), 3)
    assert np.allclose(g3, -9 * g1)
    line = euclidean_circle_samples([0, 0], [0.6, 0.8], [0, 0], s)
    assert np.allclose(line[0], np.outer(s, [0.6, 0.8])) and not np.any(line[2])


def test_integration_matches_closed_form_and_order():
    x0, u, v = [0.2, -0.1], [0.6, 0.8], [-1.6, 1.2]
    errs = []
    for h in (0.02, 0.01):
        traj = integrate(EUCLID2, CircleInit(x0, u, v), 1.0, h)
        exact = euclidean_circle_samples(x0, u, v, traj.s)[0]
        errs.append(np.abs(traj.gamma - exact).max())
    assert errs[1] < 1e-8
    assert np.log2(errs[0] / errs[1]) > 3.5


def test_final_step_lands_on_s_max():
    traj = integrate(EUCLID2, CircleInit([0, 0], [1, 0], [0, 1]), 0.105, 0.01)
    assert traj.s[-1] == pytest.approx(0.105)
    assert len(traj) == 12


def test_invariants_on_curved_metric():
    init = admissible_init(RIEM2, [0.1, 0.1], [1, 0], [0, 1], 0.8)
    rep = circle_invariants(RIEM2, integrate(RIEM2, init, 2.0, 5e-3))
    assert isinstance(rep, ResidualReport) and rep.passed
    assert rep.meta["curvature"] == pytest.approx(0.8)
    assert rep.meta["radius"] == pytest.approx(1.25)


def test_geodesic_has_no_radius():
    init = admissible_init(RANDERS2, [0, 0], [1, 0], [0, 1], 0.0)
    rep = circle_invariants(RANDERS2, integrate(RANDERS2, init, 1.0, 1e-2))
    assert rep.passed and rep.meta["radius"] is None


def test_drift_aborts_strict_run():
    # far too coarse a step on a strongly curved circle
    with pytest.raises(IntegrationError):
        integrate(EUCLID2, CircleInit([0, 0], [1, 0], [0, 40]), 2.0, 0.2)


def test_leaving_the_convex_region_is_reported():
    spec = Riemannian(2, [["1 - x1", "0"], ["0", "1"]])
    with pytest.raises((DomainError, IntegrationError)):
        integrate(spec, CircleInit([0, 0], [1, 0], [0, 0]), 3.0, 1e-2)


def test_csv_output(tmp_path):
    traj = integrate(EUCLID2, CircleInit([0, 0], [1, 0], [0, 1]), 0.05, 0.01)
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["s", "gamma1", "gamma2", "dgamma1", "dgamma2", "F_residual", "knorm_residual"]
    assert len(rows) == 7
    assert float(rows[-1][0]) == pytest.approx(0.05)


def test_speed_jet_of_a_scaled_circle():
    s = np.array([0.3])
    g = [w[0] for w in euclidean_circle_samples([0, 0], [1, 0], [0, 2], s)]
    F, F1, F2 = speed_jet(EUCLID2, g[0], 3 * g[1], 9 * g[2], 27 * g[3])
    assert (F, F1, F2) == pytest.approx((3.0, 0.0, 0.0), abs=1e-12)


def test_reparametrize_recovers_arc_length():
    # gamma(s(t)) with s = t + t^2/2 for t in [0, 1]
    k = 2.0
    t = np.linspace(0, 1, 201)
    s = t + t ** 2 / 2
    g0, g1, g2, g3 = euclidean_circle_samples([0, 0], [1, 0], [0, k], s)
    sp, sp2 = 1 + t, np.ones_like(t)
    d1 = g1 * sp[:, None]
    d2 = g2 * sp[:, None] ** 2 + g1 * sp2[:, None]
    d3 = g3 * sp[:, None] ** 3 + 3 * g2 * (sp * sp2)[:, None]
    res = reparametrize(EUCLID2, CurveSamples(t, g0, d1, d2, d3))
    assert np.abs(res.t - s).max() < 1e-12
    assert np.allclose(res.d1, g1) and np.allclose(res.d2, g2) and np.allclose(res.d3, g3)
    uni = reparametrize(EUCLID2, CurveSamples(t, g0, d1, d2, d3), resample=50)
    exact = euclidean_circle_samples([0, 0], [1, 0], [0, k], uni.t)
    assert np.abs(uni.gamma - exact[0]).max() < 1e-8


def test_tangency_test_separates_circles_from_other_curves():
    s = np.linspace(0, 2, 41)
    circle = CurveSamples(s, *euclidean_circle_samples([0, 0], [1, 0], [0, 1.5], s))
    assert tangency_test(EUCLID2, circle).passed
    # a non-arc-length parametrization of the same circle also passes
    t = s / 2
    g = euclidean_circle_samples([0, 0], [1, 0], [0, 1.5], 2 * t)
    scaled = CurveSamples(t, g[0], 2 * g[1], 4 * g[2], 8 * g[3])
    assert tangency_test(EUCLID2, scaled).passed
    # a parabola is not a circle
    par = CurveSamples(s, np.stack([s, s ** 2], 1), np.stack([np.ones_like(s), 2 * s], 1),
                       np.stack([0 * s, 2 + 0 * s], 1), np.zeros((len(s), 2)))
    rep = tangency_test(EUCLID2, par)
    assert not rep.passed and rep["tangency"].value > 1e-2
    json.loads(rep.to_json())


def test_tangency_on_integrated_randers_circle():
    init = admissible_init(RANDERS2, [0.1, -0.1], [1, 0.2], [0, 1], 1.2)
    traj = integrate(RANDERS2, init, 1.5, 5e-3)
    assert tangency_test(RANDERS2, CurveSamples.from_trajectory(traj).subsample(10), tol=1e-8).passed
