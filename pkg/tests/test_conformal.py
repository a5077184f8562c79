import numpy as np
import pytest

from _families import CONFORMAL2, EUCLID2, EUCLID3, MINK3, QUARTIC, RANDERS2, RIEM2, admissible_init, random_tangent_points
from concircular import circles
from concircular.conformal import (Remark61Family, ScaleFunction, circle_mapping_test, circle_samples,
                                   concircularity_condition, conformal_curvature_relation, curvature_transfer,
                                   deviation_identity_check, line_samples, perturbation_two_path,
                                   remark61_predicates, tilde_acceleration_norm, transformed_spray,
                                   transformed_spray_jet)
from concircular.connection import spray
from concircular.errors import ConfigError, DomainError, InsufficientSamples
from concircular.metric import ConformalScale, TangentPoint, evaluate_F, sample_points

U2 = "1 + 0.2*x1**2 + 0.1*x2"


def test_scale_function():
    u = ScaleFunction(2, "1 + x1**2 + 2*x2")
    assert u.value([1.0, 0.5]) == 3.0
    assert np.allclose(u.gradient([1.0, 0.5]), [2.0, 2.0])
    assert np.allclose(u.hessian([1.0, 0.5]), [[2.0, 0.0], [0.0, 0.0]])
    assert u.reciprocal().value([1.0, 0.5]) == pytest.approx(1 / 3)
    assert u.to_dict() == {"u": "1 + x1**2 + 2*x2"}
    with pytest.raises(DomainError):
        u.value([0.0, -1.0])
    with pytest.raises(ConfigError):
        ScaleFunction(2, lambda x: 1 + x[0] ** 2).to_dict()


def test_rescaling_by_reciprocal_restores_metric():
    u = ScaleFunction(2, U2)
    back = ConformalScale(ConformalScale(RANDERS2, U2), u.reciprocal().source)
    for p in random_tangent_points(RANDERS2, np.random.default_rng(40), 5):
        assert evaluate_F(back, p) == pytest.approx(evaluate_F(RANDERS2, p), rel=1e-14)


def test_transformed_spray_by_unit_scale():
    for p in random_tangent_points(RANDERS2, np.random.default_rng(41), 3):
        Gt, Nt = transformed_spray(RANDERS2, "1", p)
        sd = spray(RANDERS2, p)
        assert np.allclose(Gt, sd.G, atol=1e-15) and np.allclose(Nt, sd.N, atol=1e-15)


@pytest.mark.parametrize("base", [RANDERS2, RIEM2, QUARTIC])
def test_transformed_spray_two_routes(base):
    tilde = ConformalScale(base, U2)
    for p in random_tangent_points(base, np.random.default_rng(42), 5):
        Gt, Nt = transformed_spray(base, U2, p)
        direct = spray(tilde, p)
        assert np.allclose(Gt, direct.G, atol=1e-12)
        assert np.allclose(Nt, direct.N, atol=1e-12)
        jet = transformed_spray_jet(base, U2, p)
        assert np.allclose(jet.value, Gt, atol=1e-13)
        assert np.allclose(jet.dy().value, Nt, atol=1e-12)


def _sample(spec, seed=43):
    return sample_points(spec, np.random.default_rng(seed), 4, 4, box=(-0.4, 0.4))


def test_concircularity_examples():
    v = concircularity_condition(EUCLID2, "1 + x1**2 + x2**2", _sample(EUCLID2))
    assert v.holds and v.lam == pytest.approx(2.0)
    assert not concircularity_condition(EUCLID2, "exp(x1)", _sample(EUCLID2)).holds
    v = concircularity_condition(MINK3, "1 + 0.3*x1", _sample(MINK3))
    assert v.holds and v.lam == pytest.approx(0.0, abs=1e-12)
    # a linear scale on a Randers base fails the torsion condition
    rep = concircularity_condition(RANDERS2, "1 + 0.3*x1", _sample(RANDERS2)).report
    assert rep["torsion_residual"].value > 1e-3


def test_concircularity_needs_fiber_directions():
    with pytest.raises(InsufficientSamples):
        concircularity_condition(EUCLID2, "1", sample_points(EUCLID2, np.random.default_rng(0), 12, 1))


def test_line_and_circle_predicates_examples():
    fam = Remark61Family(1.0, (0.0, 0.0), 1.0)
    # lines through the center of symmetry stay geodesics
    assert remark61_predicates(fam, ("line", (0.6, 0.8), (0.0, 0.0))).kind == "geodesic"
    assert remark61_predicates(fam, ("line", (1.0, 0.0), (0.0, 0.5))).kind == "circle"
    with pytest.raises(ValueError):
        remark61_predicates(fam, ("line", (1.0, 1.0), (0.0, 0.0)))
    with pytest.raises(ValueError):
        remark61_predicates(fam, ("circle", (1.0, 0.0), (0.0, 0.5), (0.0, 0.0)))


@pytest.mark.parametrize("b", [(0.0, 0.0), (0.3, -0.2)])
def test_predicate_norms_match_measurements(b):
    fam = Remark61Family(0.5, b, 1.2)
    s = np.linspace(0, 1.5, 151)
    line = ("line", (0.6, -0.8), (0.1, 0.2))
    cls = remark61_predicates(fam, line)
    measured = tilde_acceleration_norm(fam, line_samples(line[1], line[2], s))
    assert np.abs(measured - cls.curvature_norm).max() < 1e-9 * (1 + cls.curvature_norm)
    k = 2.0
    circ = ("circle", (0.5, 0.0), (0.0, 0.5), (0.2, -0.1))
    cls = remark61_predicates(fam, circ)
    measured = tilde_acceleration_norm(fam, circle_samples(*circ[1:], k, s))
    assert np.abs(measured - cls.curvature_norm).max() < 1e-8 * (1 + cls.curvature_norm)


def test_circles_map_to_circles_for_concircular_scale():
    fam = Remark61Family(0.5, (0.3, -0.2), 1.2)
    s = np.linspace(0, 2, 81)
    curve = circles.CurveSamples(s, *circles.euclidean_circle_samples([0.1, 0.2], [0.6, 0.8], [-1.2, 0.9], s))
    rep = circle_mapping_test(EUCLID2, fam.scale(), curve)
    assert rep.passed
    rep = circle_mapping_test(EUCLID2, "exp(x1)", curve)
    assert not rep["tilde_tangency"].passed and rep["deviation_identity"].passed


def test_swapped_roles_with_reciprocal_scale():
    # circles of F~ = F/u are circles of F~ / (1/u) = F, as F~ is Euclidean times 1/u
    fam = Remark61Family(0.5, (0.3, -0.2), 1.2)
    tilde = fam.metric()
    init = admissible_init(tilde, [0.1, 0.0], [1, 0.2], [0.1, 1], 0.7)
    traj = circles.integrate(tilde, init, 1.0, 5e-3)
    rep = circle_mapping_test(tilde, fam.scale().reciprocal(), traj, every=4)
    assert rep.passed
    assert tilde_acceleration_norm(fam, circles.CurveSamples.from_trajectory(traj)).std() < 1e-6


def test_deviation_identity_holds_for_any_scale():
    init = admissible_init(RANDERS2, [0.0, 0.1], [1, 0], [0, 1], 1.0)
    traj = circles.integrate(RANDERS2, init, 1.0, 1e-2)
    curve = circles.CurveSamples.from_trajectory(traj).subsample(5)
    for u in (U2, "exp(0.3*x1)"):
        assert deviation_identity_check(RANDERS2, u, curve).passed


def test_circle_mapping_rejects_nonpositive_scale():
    s = np.linspace(0, 1, 5)
    with pytest.raises(DomainError):
        circle_mapping_test(EUCLID2, "x1", line_samples((1.0, 0.0), (-0.5, 0.0), s))


def test_curvature_relation_branches():
    p = TangentPoint([0.1, -0.2], [0.6, 0.8])
    fam = Remark61Family(1.0, (0.3, -0.2), 1.2)
    rep = conformal_curvature_relation(EUCLID2, fam.scale(), p)
    assert rep.passed and rep.meta["branch"] == "concircular"
    assert rep.meta["K_tilde_predicted"] == pytest.approx(fam.curvature(), rel=1e-10)
    assert rep.meta["K_tilde_measured"] == pytest.approx(fam.curvature(), rel=1e-8)
    rep = conformal_curvature_relation(EUCLID2, "exp(x1)", p)
    assert rep.passed and rep.meta["branch"] == "general" and rep.notices
    assert "concircular_riemann" not in rep
    rep = conformal_curvature_relation(RANDERS2, U2, random_tangent_points(RANDERS2, np.random.default_rng(1), 1)[0])
    assert rep["general_riemann"].passed and rep["general_ricci"].passed


def test_constant_scale_is_a_homothety():
    p = random_tangent_points(RIEM2, np.random.default_rng(44), 1)[0]
    rep = conformal_curvature_relation(RIEM2, "2", p)
    assert rep.meta["branch"] == "concircular"
    assert rep.meta["K_tilde_measured"] == pytest.approx(
        4 * conformal_curvature_relation(RIEM2, "1", p).meta["K_tilde_measured"], rel=1e-9)


def test_curvature_transfer_examples():
    fam = Remark61Family(0.5, (0.3, -0.2), 1.2)
    sample = sample_points(EUCLID2, np.random.default_rng(45), 4, 5, box=(-0.4, 0.4))
    rep = curvature_transfer(EUCLID2, fam.scale(), sample)
    assert rep.passed
    assert rep.meta["tilde_kind"] == "constant_flag"
    assert rep.meta["K_tilde"] == pytest.approx(fam.curvature(), rel=1e-8)
    # on Riemannian surfaces 2 lambda u = u Lap(u), so the formula holds for every scale
    rep = curvature_transfer(EUCLID2, "exp(x1)", sample)
    assert rep.notices and not rep["precondition_hessian_residual"].passed
    assert rep["transfer_formula"].passed
    sample3 = sample_points(EUCLID3, np.random.default_rng(47), 4, 5, box=(-0.4, 0.4))
    rep = curvature_transfer(EUCLID3, "exp(x1)", sample3)
    assert rep.notices and not rep["transfer_formula"].passed


def test_perturbation_two_path():
    for p in random_tangent_points(RANDERS2, np.random.default_rng(46), 3):
        direct, via = perturbation_two_path(RANDERS2, U2, p)
        assert np.allclose(direct, via, atol=1e-10)
    direct, via = perturbation_two_path(CONFORMAL2, "exp(0.2*x2)", TangentPoint([0.1, 0.1], [1.0, 0.2]))
    assert np.allclose(direct, via, atol=1e-10)
