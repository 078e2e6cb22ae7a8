import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shockflow import (BranchSet, HamiltonianModel, LagrangianView, admissible, classify_restraining,
                       hat_L, hull_membership, smallest_bregman_ball, surplus_rate_check)
from shockflow.oracles import bregman_center_1d, welzl
from shockflow.weak_noise import TETRA_MOMENTA

KINDS = {
    "quadratic": lambda d: HamiltonianModel.quadratic(np.eye(d) + 0.3 * np.diag(np.arange(d))),
    "relativistic": lambda d: HamiltonianModel.relativistic(d),
    "power": lambda d: HamiltonianModel.power(3.0, d),
    "quad_quartic": lambda d: HamiltonianModel.quad_quartic(0.7, d),
}


def random_branchset(rng, H, n):
    return BranchSet.from_model(H, rng.normal(scale=1.5, size=(n, H.dim)))


def test_hat_L_examples():
    H2 = HamiltonianModel.quadratic(dim=2)
    B = BranchSet.from_model(H2, [[1.0, 0.0]])
    for v in ([0.0, 0.0], [2.0, -1.0], [0.3, 0.4]):
        v = np.array(v)
        assert hat_L(B, v) == pytest.approx(0.5 * v @ v + 0.5 - v[0])
    assert hat_L(B, [1.0, 0.0]) == pytest.approx(0.0)
    burgers = BranchSet.from_model(HamiltonianModel.quadratic(dim=1), [[1.0], [-1.0]])
    assert hat_L(burgers, [0.0]) == pytest.approx(0.5)
    tetra = BranchSet(TETRA_MOMENTA, np.ones(4), x=np.zeros(3), model=HamiltonianModel.quadratic(dim=3))
    assert hat_L(tetra, np.zeros(3)) == pytest.approx(1.0)


def test_admissible_examples():
    burgers = BranchSet.from_model(HamiltonianModel.quadratic(dim=1), [[1.0], [-1.0]])
    assert admissible(burgers).v_star == pytest.approx([0.0], abs=1e-12)
    obtuse = BranchSet.from_model(HamiltonianModel.quadratic(dim=2), [[0.0, 0.0], [2.0, 0.0], [1.0, 0.5]])
    res = admissible(obtuse)
    np.testing.assert_allclose(res.v_star, [1.0, 0.0], atol=1e-10)
    assert res.active_set == (0, 1)
    c, r, support = welzl(obtuse.velocities)
    np.testing.assert_allclose(res.v_star, c, atol=1e-10)
    for name, make in KINDS.items():
        H = make(2)
        single = BranchSet.from_model(H, [[0.7, -0.4]])
        res = admissible(single)
        np.testing.assert_allclose(res.v_star, H.grad(np.array([0.7, -0.4])), atol=1e-9, err_msg=name)
        assert res.objective == pytest.approx(0.0, abs=1e-10)


def test_bregman_ball_examples():
    Hq = HamiltonianModel.quadratic(dim=2)
    c, r, s = smallest_bregman_ball(Hq, [[0.4, -0.1]])
    np.testing.assert_allclose(c, [0.4, -0.1])
    assert r == 0.0 and s == (0,)
    c, r, s = smallest_bregman_ball(Hq, [[0.0, 0.0], [2.0, 0.0], [1.0, 0.5]])
    np.testing.assert_allclose(c, [1.0, 0.0], atol=1e-10)
    assert r == pytest.approx(0.5)
    assert s == (0, 1)


def test_power_bregman_center_against_golden_section():
    H = HamiltonianModel.power(4.0, 1)
    L = LagrangianView(H)
    c, r, s = smallest_bregman_ball(L, [[-1.0], [2.0]])
    ref = bregman_center_1d(lambda v: float(L.value([v])), lambda v: float(L.grad([v])[0]), [-1.0, 2.0])
    assert c[0] == pytest.approx(ref, abs=1e-8)
    assert c[0] == pytest.approx(0.16813, abs=1e-5)
    assert s == (0, 1)


def test_surplus_rate_examples():
    H = HamiltonianModel.quadratic(dim=1)
    smooth = BranchSet.from_model(H, [[1.0]], t=1.0, x=[0.3])
    rates = surplus_rate_check(smooth, lambda t, x: float(x[0] - t / 2), [1.0], [1e-1, 1e-2, 1e-3])
    np.testing.assert_allclose(rates, 0.0, atol=1e-12)
    shock = BranchSet.from_model(H, [[1.0], [-1.0]], t=1.0, x=[0.0])
    phi = lambda t, x: float(min(x[0], -x[0]) - t / 2)
    dts = [1e-1, 1e-2, 1e-3]
    np.testing.assert_allclose(surplus_rate_check(shock, phi, [0.0], dts), 0.5, atol=1e-12)
    np.testing.assert_allclose(surplus_rate_check(shock, phi, [1.0], dts), 2.0, atol=1e-12)
    assert hat_L(shock, [0.0]) == pytest.approx(0.5)
    assert hat_L(shock, [1.0]) == pytest.approx(2.0)


def test_classify_restraining_examples():
    H = HamiltonianModel.quadratic(dim=2)
    ang = np.pi / 2 + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    equilateral = BranchSet.from_model(H, np.column_stack([np.cos(ang), np.sin(ang)]))
    assert classify_restraining(equilateral) == "restraining"
    obtuse = BranchSet.from_model(H, [[0.0, 0.0], [2.0, 0.0], [1.0, 0.5]])
    assert classify_restraining(obtuse) == "nonrestraining"
    for make in KINDS.values():
        assert classify_restraining(BranchSet.from_model(make(2), [[1.0, 0.0], [0.0, 1.0]])) == "restraining"


# -- invariants ---------------------------------------------------------------

@pytest.mark.parametrize("kind", sorted(KINDS))
def test_uniqueness_from_distinct_starts(kind):
    rng = np.random.default_rng(10)
    for _ in range(200):
        d = int(rng.integers(1, 4))
        H = KINDS[kind](d)
        B = random_branchset(rng, H, int(rng.integers(2, 6)))
        a = admissible(B)
        start = B.velocities[int(rng.integers(len(B)))]
        b = admissible(B, start=start)
        assert np.max(np.abs(a.v_star - b.v_star)) <= 1e-8


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_certificate_and_strict_increase(kind):
    rng = np.random.default_rng(11)
    for _ in range(25):
        H = KINDS[kind](2)
        B = random_branchset(rng, H, int(rng.integers(2, 6)))
        res = admissible(B)
        cert = hull_membership(res.p_star, B.momenta[list(res.active_set)], tol=1e-6)
        assert cert.inside and cert.residual <= 1e-6
        # p* is the gradient of L at v*, reconstructed from the hull weights
        np.testing.assert_allclose(res.hull_weights @ B.momenta[list(res.active_set)], res.p_star, atol=1e-6)
        np.testing.assert_allclose(H.grad(res.hull_weights @ B.momenta[list(res.active_set)]), res.v_star,
                                   atol=1e-5)
        base = hat_L(B, res.v_star)
        assert base >= 0
        for _ in range(8):
            u = rng.normal(size=2)
            v = res.v_star + 1e-3 * u / np.linalg.norm(u)
            if H.kind == "relativistic" and np.linalg.norm(v) >= 1:
                continue
            assert hat_L(B, v) > base


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_admissible_equals_bregman_ball_center(kind):
    rng = np.random.default_rng(12)
    for _ in range(20):
        H = KINDS[kind](2)
        B = random_branchset(rng, H, int(rng.integers(2, 6)))
        c, r, support = smallest_bregman_ball(H, B.velocities)
        res = admissible(B)
        np.testing.assert_allclose(res.v_star, c, atol=1e-7)
        assert res.objective == pytest.approx(r, abs=1e-8)
        assert set(support) <= set(res.active_set) | set(support)


def test_quadratic_matches_welzl():
    rng = np.random.default_rng(13)
    H = {2: HamiltonianModel.quadratic(dim=2), 3: HamiltonianModel.quadratic(dim=3)}
    for _ in range(100):
        d = int(rng.integers(2, 4))
        B = random_branchset(rng, H[d], int(rng.integers(2, 7)))
        c, _, _ = welzl(B.velocities)
        assert np.max(np.abs(admissible(B).v_star - c)) <= 1e-7


def test_no_hull_after_the_nonlinear_map():
    # for a non-quadratic model v* is grad H of a hull point of momenta,
    # which in general differs from the velocity hull point with the same weights
    H = HamiltonianModel.quad_quartic(1.0, 2)
    B = BranchSet.from_model(H, [[1.0, 0.0], [0.0, 1.5], [-1.0, -0.5]])
    res = admissible(B)
    lam = res.hull_weights
    act = list(res.active_set)
    np.testing.assert_allclose(H.grad(lam @ B.momenta[act]), res.v_star, atol=1e-7)
    assert np.linalg.norm(lam @ B.velocities[act] - res.v_star) > 1e-3


def test_relativistic_fast_branches_stay_inside_domain():
    H = HamiltonianModel.relativistic(2)
    B = BranchSet.from_model(H, [[30.0, 0.0], [-30.0, 1.0], [0.0, -40.0]])
    res = admissible(B)
    assert np.linalg.norm(res.v_star) < 1.0


@given(arrays(float, (3, 2), elements=st.floats(-2, 2)))
def test_objective_nonnegative_and_zero_only_when_single(P):
    H = HamiltonianModel.quad_quartic(1.0, 2)
    B = BranchSet.from_model(H, P)
    res = admissible(B)
    assert res.objective >= -1e-12
    if len(B) > 1 and np.max(np.ptp(B.velocities, axis=0)) > 1e-3:
        assert res.objective > 0
