import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from herosgan.autodiff import Node, grad_check
from herosgan.ot import (
    DegenerateFeatureError,
    SinkhornWarning,
    TransportPlan,
    barycentric_map,
    cost_matrix,
    ots_loss,
    sinkhorn,
)

E2 = math.exp(2.0)


def test_cost_identical_antipodal_orthogonal():
    F = np.array([[1.0, 0.0], [0.0, 1.0]])
    C = cost_matrix(F, np.array([[2.0, 0.0], [-3.0, 0.0]]))
    assert C[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert C[0, 1] == pytest.approx(E2, rel=1e-14)
    assert C[1, 0] == pytest.approx(math.e, rel=1e-14)


def test_cost_rejects_zero_row():
    with pytest.raises(DegenerateFeatureError):
        cost_matrix(np.zeros((2, 3)), np.ones((2, 3)))


def test_constant_cost_gives_uniform_plan():
    plan = sinkhorn(np.full((2, 2), 3.7), eps=0.05)
    np.testing.assert_allclose(plan.gamma, 0.25, atol=1e-9, rtol=0)
    assert plan.converged


def test_two_by_two_diagonal_at_small_eps():
    plan = sinkhorn(np.array([[1.0, E2], [E2, 1.0]]), eps=0.01)
    assert np.trace(plan.gamma) >= 0.99
    np.testing.assert_allclose(plan.gamma, np.diag([0.5, 0.5]), atol=1e-6)
    assert plan.residual < 1e-6


def test_unique_permutation_gets_the_mass():
    C = np.array([[E2, 1.0], [1.0, E2]])
    plan = sinkhorn(C, eps=0.01)
    assert plan.gamma[0, 1] + plan.gamma[1, 0] > 0.99


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 24), st.integers(0, 10_000), st.sampled_from([0.05, 0.1, 0.5]))
def test_converged_plans_hit_the_marginals(n, seed, eps):
    rng = np.random.default_rng(seed)
    C = cost_matrix(rng.normal(size=(n, 5)), rng.normal(size=(n, 5)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SinkhornWarning)
        plan = sinkhorn(C, eps=eps, max_iter=2000, tol=1e-9)
    err = max(np.abs(plan.gamma.sum(1) - 1 / n).max(), np.abs(plan.gamma.sum(0) - 1 / n).max())
    assert err == pytest.approx(plan.residual, abs=1e-15)
    if plan.converged:
        assert err < 1e-6
    assert np.all(plan.gamma >= 0)


def test_plan_invariant_to_cost_shift(rng):
    C = cost_matrix(rng.normal(size=(6, 4)), rng.normal(size=(6, 4)))
    a = sinkhorn(C, eps=0.1, tol=1e-12, max_iter=5000)
    b = sinkhorn(C + 5.0, eps=0.1, tol=1e-12, max_iter=5000)
    np.testing.assert_allclose(a.gamma, b.gamma, atol=1e-12)


def test_small_eps_stays_finite(rng):
    C = cost_matrix(rng.normal(size=(32, 8)), rng.normal(size=(32, 8)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SinkhornWarning)
        plan = sinkhorn(C, eps=1e-3, max_iter=200)
    assert np.all(np.isfinite(plan.gamma))


def test_nonconvergence_warns():
    C = cost_matrix(np.random.default_rng(0).normal(size=(20, 4)), np.random.default_rng(1).normal(size=(20, 4)))
    with pytest.warns(SinkhornWarning):
        plan = sinkhorn(C, eps=0.01, max_iter=2)
    assert not plan.converged and plan.iterations == 2


def test_sinkhorn_rejects_bad_eps():
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 2)), eps=0.0)


def _plan(gamma):
    n = gamma.shape[0]
    return TransportPlan(gamma, np.full(n, 1 / n), np.full(n, 1 / n), 0, 0.0, True)


def test_barycentric_identity_plan(rng):
    F = rng.normal(size=(4, 3))
    np.testing.assert_allclose(barycentric_map(_plan(np.eye(4) / 4), F), F, rtol=1e-14)


def test_barycentric_uniform_plan(rng):
    F = rng.normal(size=(4, 3))
    out = barycentric_map(_plan(np.full((4, 4), 1 / 16)), F)
    np.testing.assert_allclose(out, np.tile(F.mean(0), (4, 1)), rtol=1e-13)


def test_barycentric_near_diagonal(rng):
    plan = sinkhorn(np.array([[1.0, E2], [E2, 1.0]]), eps=0.01)
    F = rng.normal(size=(2, 3))
    np.testing.assert_allclose(barycentric_map(plan, F), F, atol=1e-4)


def test_barycentric_inverse_uses_transpose(rng):
    g = rng.uniform(size=(3, 3))
    F = rng.normal(size=(3, 2))
    np.testing.assert_allclose(barycentric_map(g, F, "inverse"), (g.T @ F) / g.T.sum(1, keepdims=True))
    with pytest.raises(ValueError):
        barycentric_map(g, F, "sideways")


def test_ots_zero_at_perfect_alignment(rng):
    F_L, F_H = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    plan = sinkhorn(cost_matrix(F_L, F_H))
    loss, _ = ots_loss(barycentric_map(plan, F_H), barycentric_map(plan, F_L, "inverse"), F_L, F_H, plan=plan)
    assert float(loss.data) == pytest.approx(0.0, abs=1e-24)


def test_ots_constant_offset(rng):
    F_L, F_H = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    plan = sinkhorn(cost_matrix(F_L, F_H))
    delta = rng.normal(size=8)
    loss, _ = ots_loss(
        barycentric_map(plan, F_H) + delta, barycentric_map(plan, F_L, "inverse"), F_L, F_H, plan=plan
    )
    assert float(loss.data) == pytest.approx(float(delta @ delta), rel=1e-12)


def test_ots_gradient_matches_finite_differences(rng):
    F_L, F_H = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    F_GH = rng.normal(size=(4, 8))
    F_GL = rng.normal(size=(4, 8))
    assert grad_check(lambda x: ots_loss(x, F_GH, F_L, F_H)[0], F_GL) < 1e-4
    assert grad_check(lambda x: ots_loss(F_GL, x, F_L, F_H)[0], F_GH) < 1e-4


def test_ots_shape_mismatch(rng):
    with pytest.raises(ValueError):
        ots_loss(Node(np.ones((3, 8))), np.ones((4, 8)), np.ones((4, 8)), np.ones((4, 8)))
