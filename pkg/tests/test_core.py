import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aspal.core import (AffineConstraint, LinearMap, NumericalError, ProblemInstance,
                        SetConstraint, SmoothFunction, Tolerances, aug_lagrangian_smooth,
                        dual_update, eval_aug_lagrangian, eval_aug_lagrangian_generalized,
                        stationarity_residuals, zero_function)

from oracles import quadratic


def zero_f(n):
    return SmoothFunction(value=lambda z: 0.0, grad=lambda z: np.zeros(n), m_f=0.0, L_f=0.0)


def scalar_problem(constraint=None, f=None):
    con = constraint or AffineConstraint(LinearMap.identity(1), np.zeros(1))
    return ProblemInstance(f=f or zero_f(1), h=zero_function(), constraint=con, z0=np.zeros(1))


def test_al_zero_at_feasible_point():
    assert eval_aug_lagrangian(np.zeros(1), np.array([7.0]), 4.0, scalar_problem()) == 0.0


def test_al_hand_value():
    # 0 + 3*2 + (4/2)*2^2
    assert eval_aug_lagrangian(np.array([2.0]), np.array([3.0]), 4.0, scalar_problem()) == 14.0


def test_al_independent_of_penalty_when_feasible(rng):
    A = rng.standard_normal((2, 4))
    z = rng.standard_normal(4)
    Q = np.eye(4)
    prob = ProblemInstance(f=quadratic(Q, np.ones(4)), h=zero_function(),
                           constraint=AffineConstraint(LinearMap.from_matrix(A), A @ z),
                           z0=np.zeros(4))
    p = rng.standard_normal(2)
    vals = [eval_aug_lagrangian(z, p, c, prob) for c in (0.1, 1.0, 50.0)]
    assert vals == pytest.approx([prob.f(z)] * 3, rel=1e-12)


def test_al_rejects_nonpositive_penalty():
    with pytest.raises(ValueError):
        eval_aug_lagrangian(np.zeros(1), np.zeros(1), 0.0, scalar_problem())


def test_al_nonfinite_raises():
    f = SmoothFunction(value=lambda z: np.nan, grad=lambda z: np.zeros(1))
    prob = scalar_problem(f=f)
    with pytest.raises(NumericalError):
        eval_aug_lagrangian(np.zeros(1), np.zeros(1), 1.0, prob)


def test_generalized_al_whole_space():
    con = SetConstraint(LinearMap.identity(1), lambda y: y)
    prob = scalar_problem(con)
    got = eval_aug_lagrangian_generalized(np.array([5.0]), np.array([3.0]), 2.0, prob)
    assert got == pytest.approx(-9.0 / 4.0)


def test_generalized_al_nonnegative_ray():
    con = SetConstraint(LinearMap.identity(1), lambda y: np.maximum(y, 0.0))
    prob = scalar_problem(con)
    got = eval_aug_lagrangian_generalized(np.array([-1.0]), np.zeros(1), 2.0, prob)
    assert got == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_singleton_set_matches_affine(seed, c):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 5))
    b = rng.standard_normal(3)
    z = rng.standard_normal(5)
    p = rng.standard_normal(3)
    f = quadratic(np.eye(5), rng.standard_normal(5))
    lin = LinearMap.from_matrix(A)
    aff = ProblemInstance(f=f, h=zero_function(), constraint=AffineConstraint(lin, b),
                          z0=np.zeros(5))
    sing = ProblemInstance(f=f, h=zero_function(),
                           constraint=SetConstraint(lin, lambda y: b.copy()), z0=np.zeros(5))
    a = eval_aug_lagrangian(z, p, c, aff)
    g = eval_aug_lagrangian_generalized(z, p, c, sing)
    assert g == pytest.approx(a, rel=1e-9, abs=1e-9)
    # the smooth oracles agree too, value and gradient
    va, ga = aug_lagrangian_smooth(z, p, c, aff)
    vs, gs = aug_lagrangian_smooth(z, p, c, sing)
    assert vs == pytest.approx(va, rel=1e-9, abs=1e-9)
    np.testing.assert_allclose(gs, ga, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(dual_update(z, p, c, sing), dual_update(z, p, c, aff),
                               rtol=1e-9, atol=1e-9)


def test_smooth_al_gradient_by_finite_differences(rng):
    A = rng.standard_normal((2, 4))
    Q = rng.standard_normal((4, 4))
    Q = Q + Q.T
    prob = ProblemInstance(f=quadratic(Q, rng.standard_normal(4)), h=zero_function(),
                           constraint=AffineConstraint(LinearMap.from_matrix(A),
                                                       rng.standard_normal(2)),
                           z0=np.zeros(4))
    z, p = rng.standard_normal(4), rng.standard_normal(2)
    _, g = aug_lagrangian_smooth(z, p, 3.0, prob)
    eps = 1e-6
    fd = [(aug_lagrangian_smooth(z + eps * e, p, 3.0, prob)[0]
           - aug_lagrangian_smooth(z - eps * e, p, 3.0, prob)[0]) / (2 * eps)
          for e in np.eye(4)]
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)


def test_dual_update_affine():
    prob = scalar_problem()
    np.testing.assert_allclose(dual_update(np.array([2.0]), np.array([1.0]), 3.0, prob), [7.0])


def test_stationarity_residuals_exact_kkt():
    prob = scalar_problem()
    assert stationarity_residuals(np.zeros(1), (np.zeros(1), np.zeros(1), np.zeros(1)),
                                  prob) == (0.0, 0.0)


def test_stationarity_residuals_hand_values():
    # |grad f(z0)| = 1, |A z0 - b| = 2, |w| = 0.02, |A z - b| = 0.03
    f = SmoothFunction(value=lambda z: float(z[0]), grad=lambda z: np.array([1.0]))
    prob = ProblemInstance(f=f, h=zero_function(),
                           constraint=AffineConstraint(LinearMap.identity(1), np.zeros(1)),
                           z0=np.array([2.0]))
    rho, eta = stationarity_residuals(prob.z0, (np.array([0.03]), None, np.array([0.02])), prob)
    assert rho == pytest.approx(0.01)
    assert eta == pytest.approx(0.01)


def test_stationarity_residual_scaled_gradient(rng):
    Q = np.eye(3)
    q = rng.standard_normal(3)
    prob = ProblemInstance(f=quadratic(Q, q), h=zero_function(),
                           constraint=AffineConstraint(LinearMap.identity(3), np.zeros(3)),
                           z0=rng.standard_normal(3))
    g = prob.f.grad(prob.z0)
    rho, _ = stationarity_residuals(prob.z0, (prob.z0, None, 0.3 * g), prob)
    gn = np.linalg.norm(g)
    assert rho == pytest.approx(0.3 * gn / (1 + gn))


def test_linear_map_adjoint_consistency(rng):
    M = rng.standard_normal((3, 6))
    A = LinearMap.from_matrix(M)
    for _ in range(10):
        z, p = rng.standard_normal(6), rng.standard_normal(3)
        assert A(z) @ p == pytest.approx(z @ A.adjoint(p), rel=1e-12)


def test_curvature_hints_validated():
    with pytest.raises(ValueError):
        SmoothFunction(value=lambda z: 0.0, grad=lambda z: z, m_f=2.0, L_f=1.0)


def test_tolerances_positive():
    with pytest.raises(ValueError):
        Tolerances(0.0, 1e-4)


def test_initial_point_in_domain():
    from aspal import prox
    with pytest.raises(ValueError):
        ProblemInstance(f=zero_f(2), h=prox.simplex_indicator(2),
                        constraint=AffineConstraint(LinearMap.identity(2), np.zeros(2)),
                        z0=np.array([3.0, 3.0]))
