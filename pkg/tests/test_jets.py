import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _families import richardson_gradient
from concircular import jets
from concircular.errors import ConditioningError, JetOrderError
from concircular.jets import JetConfig
from concircular.metric import TangentPoint

CFG2 = JetConfig(2, 2, 2)


def test_quadratic_form_second_fiber_partial():
    j = jets.lift(lambda x, y: y[0] * y[0] + y[1] * y[1], TangentPoint([0, 0], [1, 0]), CFG2)
    assert j.partial([2, 2]) == 2.0
    assert j.partial([2, 3]) == 0.0


def test_bilinear_mixed_partial():
    j = jets.lift(lambda x, y: x[0] * y[1], TangentPoint([3, 0], [0, 5]), CFG2)
    assert j.partial([0, 3]) == 1.0
    assert j.value == 15.0


def test_randers_fiber_derivative_matches_richardson():
    f = lambda x, y: jets.sqrt(y[0] * y[0] + y[1] * y[1]) + 0.3 * y[0]
    j = jets.lift(f, TangentPoint([0, 0], [1, 0]), CFG2)
    oracle = richardson_gradient(lambda y: float(f(None, y)), [1.0, 0.0])
    assert oracle[0] == pytest.approx(1.3, abs=1e-9)
    assert j.partial([2]) == pytest.approx(1.3, abs=1e-15)
    assert j.partial([3]) == pytest.approx(oracle[1], abs=1e-9)


def test_constant_jet_has_no_derivatives():
    b = CFG2.basis()
    c = jets.constant(4.2, b)
    assert c.partial([0]) == 0.0
    assert c.partial([1, 3]) == 0.0


def test_square_first_partial():
    j = jets.lift(lambda x, y: y[0] * y[0], TangentPoint([0, 0], [2, 1]), CFG2)
    assert j.partial([2]) == 4.0


def test_euclidean_F2_hessian_is_twice_identity():
    j = jets.lift(lambda x, y: y[0] ** 2 + y[1] ** 2, TangentPoint([0.3, 0.1], [0.2, -1.0]), CFG2)
    H = np.array([[j.partial([2 + a, 2 + b]) for b in range(2)] for a in range(2)])
    assert np.array_equal(H, 2 * np.eye(2))


def test_partial_beyond_truncation_raises():
    j = jets.lift(lambda x, y: y[0] ** 3, TangentPoint([0, 0], [1, 1]), CFG2)
    with pytest.raises(JetOrderError):
        j.partial([2, 2, 2])
    with pytest.raises(JetOrderError):
        j.partial([0, 0, 0])
    with pytest.raises(JetOrderError):
        j.partial([9])


def test_grad_exhausts_the_order():
    j = jets.lift(lambda x, y: x[0] * y[0], TangentPoint([0, 0], [1, 1]), JetConfig(2, 1, 1))
    with pytest.raises(JetOrderError):
        j.dx().dx()


def test_config_limits():
    with pytest.raises(JetOrderError):
        JetConfig(2, 4, 3)
    with pytest.raises(ValueError):
        JetConfig(1, 1, 1)
    assert JetConfig(3, 3, 4, 4).total == 4


def _smooth(x, y):
    return jets.exp(0.3 * x[0] * y[1]) * jets.sqrt(1 + y[0] * y[0]) + jets.sin(x[1]) * jets.log(2 + y[1])


def test_first_and_second_partials_match_finite_differences():
    p = TangentPoint([0.2, -0.4], [0.7, 0.5])
    j = jets.lift(_smooth, p, CFG2)
    z0 = np.concatenate([p.x, p.y])
    f = lambda z: float(_smooth(z[:2], z[2:]))
    grad = richardson_gradient(f, z0)
    hess = richardson_gradient(lambda z: richardson_gradient(f, z, 1e-3), z0, 1e-3)
    for a in range(4):
        assert j.partial([a]) == pytest.approx(grad[a], rel=1e-6, abs=1e-9)
        for b in range(a + 1):
            assert j.partial([a, b]) == pytest.approx(hess[a, b], rel=1e-6, abs=1e-7)


def test_elementary_functions_invert_each_other():
    b = jets.basis((2,), (5,), 5)
    X = jets.variables(b, [0.3, 0.7])
    f = X[0] * X[1] + 1.5
    assert np.allclose(jets.log(jets.exp(f)).coeffs, f.coeffs, atol=1e-14)
    assert np.allclose((jets.sqrt(f) * jets.sqrt(f)).coeffs, f.coeffs, atol=1e-14)
    assert np.allclose((f * jets.reciprocal(f)).coeffs, jets.constant(1.0, b).coeffs, atol=1e-14)
    s, c = jets.sin(f), jets.cos(f)
    assert np.allclose((s * s + c * c).coeffs, jets.constant(1.0, b).coeffs, atol=1e-14)


def test_power_matches_repeated_product():
    b = jets.basis((2,), (4,), 4)
    X = jets.variables(b, [0.5, -0.2])
    f = 1 + X[0] - 2 * X[1]
    assert np.allclose((f ** 3).coeffs, (f * f * f).coeffs, atol=1e-14)
    assert np.allclose((f ** 0.5).coeffs, jets.sqrt(f).coeffs, atol=1e-14)


def test_matrix_inverse():
    b = jets.basis((2,), (3,), 3)
    X = jets.variables(b, [0.1, 0.2])
    A = jets.stack([jets.stack([2 + X[0], X[1]]), jets.stack([X[1], 1 + X[0] * X[1]])])
    Ai = jets.inv(A)
    eye = jets.einsum("ij,jk->ik", A, Ai)
    assert np.allclose(eye.coeffs[..., 0], np.eye(2), atol=1e-15)
    assert np.allclose(eye.coeffs[..., 1:], 0, atol=1e-14)


def test_inverse_rejects_ill_conditioned():
    with pytest.raises(ConditioningError):
        jets.inv(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]]))


def test_chain_rule_against_symbolic_composition():
    sympy = pytest.importorskip("sympy")
    t, s = sympy.symbols("t s")
    outer = 1 + t + 3 * t ** 2 - t ** 3
    inner = 0.5 * s + s ** 2
    comp = sympy.expand(outer.subs(t, inner))
    b = jets.basis((1,), (4,), 4)
    S = jets.variables(b, [0.0])[0]
    inner_j = 0.5 * S + S * S
    j = 1 + inner_j + 3 * inner_j ** 2 - inner_j ** 3
    for k in range(5):
        expected = float(comp.coeff(s, k)) if k else float(comp.subs(s, 0))
        assert j.coeffs[k] == pytest.approx(expected, rel=1e-12, abs=1e-14)


coef = st.floats(-2, 2, allow_nan=False)


@given(st.lists(coef, min_size=6, max_size=6), coef, coef)
def test_lift_is_linear(c, a, bb):
    p = TangentPoint([0.1, 0.2], [0.3, -0.4])
    f = lambda x, y: c[0] * x[0] * y[1] + c[1] * y[0] ** 2 + c[2]
    g = lambda x, y: c[3] * jets.sin(x[1]) + c[4] * x[0] * x[1] * y[0] + c[5] * y[1] ** 3
    lhs = jets.lift(lambda x, y: a * f(x, y) + bb * g(x, y), p, CFG2)
    rhs = a * jets.lift(f, p, CFG2) + bb * jets.lift(g, p, CFG2)
    assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)


@given(st.lists(coef, min_size=4, max_size=4), st.lists(coef, min_size=4, max_size=4))
def test_product_rule(cf, cg):
    b = jets.basis((2,), (3,), 3)
    X = jets.variables(b, [0.4, -0.3])
    f = cf[0] + cf[1] * X[0] + cf[2] * X[1] * X[1] + cf[3] * X[0] * X[1]
    g = cg[0] + cg[1] * X[1] + cg[2] * X[0] * X[0] + cg[3] * X[0] ** 3
    lhs = (f * g).grad(0)
    rhs = f.grad(0) * g + f * g.grad(0)
    assert np.allclose(lhs.coeffs, rhs.restrict(lhs.basis).coeffs, atol=1e-12)
    assert np.allclose((f * g).coeffs, (g * f).coeffs, atol=1e-14)


def test_einsum_matches_numpy_on_values():
    b = jets.basis((2,), (2,), 2)
    X = jets.variables(b, [0.2, 0.1])
    A = jets.stack([jets.stack([X[0], 1 + X[1]]), jets.stack([X[0] * X[1], 2.0 + 0 * X[0]])])
    v = jets.stack([X[1], 3.0 + 0 * X[0]])
    out = jets.einsum("ij,j->i", A, v)
    assert np.allclose(out.value, A.value @ v.value)
    assert math.isclose(float(jets.einsum("i,i->", v, v).value), float(v.value @ v.value))
