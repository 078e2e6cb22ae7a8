import numpy as np
import pytest

from shockflow import (BranchSet, F_of_a, HamiltonianModel, SecondOrderData, estimate_admissible_acceleration,
                       second_order_index_set, smallest_bregman_ball)
from shockflow.errors import SupportUnstable
from shockflow.perturbation import _richardson

H1 = HamiltonianModel.quadratic(dim=1)
H2 = HamiltonianModel.quadratic(dim=2)


def symmetric_data():
    return SecondOrderData.build(BranchSet.from_model(H1, [[1.0], [-1.0]]), np.zeros((2, 1)))


def test_F_single_branch_is_constant():
    sd = SecondOrderData.build(BranchSet.from_model(H2, [[0.3, -0.4]]), [[1.0, 2.0]])
    vals = [F_of_a(sd, a) for a in ([0.0, 0.0], [1.0, -3.0], [10.0, 4.0])]
    np.testing.assert_allclose(vals, vals[0], atol=1e-12)
    assert second_order_index_set(sd, [5.0, 5.0]) == (0,)


@pytest.mark.parametrize("a", [-2.0, -0.5, 0.0, 0.7, 3.0])
def test_F_symmetric_pair(a):
    assert F_of_a(symmetric_data(), [a]) == pytest.approx(-abs(a))


def test_second_order_index_set_symmetric_pair():
    sd = symmetric_data()
    assert second_order_index_set(sd, [0.0]) == (0, 1)
    assert second_order_index_set(sd, [1.0]) == (1,)
    assert second_order_index_set(sd, [-1.0]) == (0,)


def random_data(rng, n=3):
    B = BranchSet.from_model(HamiltonianModel.quad_quartic(1.0, 2), rng.normal(size=(n, 2)))
    return SecondOrderData.build(B, rng.normal(size=(n, 2)))


def test_F_midpoint_concavity():
    rng = np.random.default_rng(30)
    sd = random_data(rng)
    for _ in range(1000):
        a, b = rng.normal(scale=3, size=(2, 2))
        lam = rng.uniform()
        lhs = F_of_a(sd, lam * a + (1 - lam) * b)
        assert lhs >= lam * F_of_a(sd, a) + (1 - lam) * F_of_a(sd, b) - 1e-12


def test_index_sets_are_nested():
    rng = np.random.default_rng(31)
    for _ in range(30):
        sd = random_data(rng, n=int(rng.integers(2, 5)))
        for a in rng.normal(size=(10, 2)):
            assert set(second_order_index_set(sd, a)) <= set(sd.first_order)


def test_rates_must_match_branches():
    with pytest.raises(ValueError):
        SecondOrderData.build(BranchSet.from_model(H1, [[1.0], [-1.0]]), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        SecondOrderData.build(BranchSet.from_model(H1, [[1.0], [-1.0]]), [[np.nan], [0.0]])


def test_time_dependent_brackets():
    # H = (1 + t) p^2 / 2: the bracket [H]_i is p_i^2 / 2, and [L] = -p*^2 / 2
    H = HamiltonianModel.custom(1, lambda t, x, p: 0.5 * (1 + t) * float(p @ p),
                                lambda t, x, p: (1 + t) * p, lambda t, x, p: (1 + t) * np.eye(1),
                                time_dependent=True)
    B = BranchSet.from_model(H, [[1.0], [-0.5]], t=0.0, x=[0.0])
    sd = SecondOrderData.build(B, np.zeros((2, 1)))
    np.testing.assert_allclose(sd.bH, [0.5, 0.125], atol=1e-8)
    np.testing.assert_allclose(sd.bL, -0.5 * sd.p_star[0] ** 2, atol=1e-8)


def test_acceleration_examples():
    L = H2
    const = [lambda t: [1.0, 0.0], lambda t: [-0.5, 0.7], lambda t: [0.0, -1.0]]
    est = estimate_admissible_acceleration(const, L, 0.0)
    np.testing.assert_allclose(est.acceleration, [0.0, 0.0], atol=1e-9)
    sym = [lambda t: [t, 0.0], lambda t: [-t, 0.0]]
    est = estimate_admissible_acceleration(sym, L, 1.0)
    np.testing.assert_allclose(est.acceleration, [0.0, 0.0], atol=1e-9)
    drift = [lambda t: [1.0 + t, 0.0], lambda t: [-1.0, 0.0]]
    est = estimate_admissible_acceleration(drift, L, 0.0)
    np.testing.assert_allclose(est.acceleration, [0.5, 0.0], atol=1e-6)
    # finite differences of the closed-form center t/2 agree
    c = lambda t: smallest_bregman_ball(L, [f(t) for f in drift])[0]
    np.testing.assert_allclose((c(1e-4) - c(0.0)) / 1e-4, [0.5, 0.0], atol=1e-6)
    assert est.stable_support == (0, 1)
    assert est.to_dict()["numerical_stand_in"] is True


@pytest.mark.parametrize("W, expected", [
    # right triangle on the unit circle, apex moving inward: the diameter decides
    ([[0.0, 0.0], [0.0, 0.0], [0.0, -1.0]], (0, 1)),
    # apex moving outward takes over together with both ends
    ([[0.0, 0.0], [0.0, 0.0], [0.0, 1.0]], (0, 1, 2)),
    # one end sliding along a tangent keeps all three on the circle
    ([[0.3, 0.1], [0.0, 0.0], [-0.2, 0.4]], (0, 1, 2)),
])
def test_second_order_set_matches_ball_support(W, expected):
    V0 = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    W = np.array(W)
    est = estimate_admissible_acceleration(lambda t: V0 + t * W, H2, 0.0)
    assert est.stable_support == expected
    # quadratic L: momenta equal velocities, so the momentum rates are W
    sd = SecondOrderData.build(BranchSet.from_model(H2, V0), W)
    assert second_order_index_set(sd, est.acceleration, tol=1e-6) == expected


def test_unstable_support_raises():
    curves = [lambda t: [-1.0], lambda t: [1.0], lambda t: [1.0 + 0.3 * (t - 0.004)]]
    with pytest.raises(SupportUnstable):
        estimate_admissible_acceleration(curves, H1, 0.0)


def test_richardson_removes_polynomial_error():
    h = np.array([1e-2, 5e-3, 2.5e-3])
    D = (2.0 + 3.0 * h + 7.0 * h ** 2)[:, None]
    np.testing.assert_allclose(_richardson(h, D), [2.0], atol=1e-10)
