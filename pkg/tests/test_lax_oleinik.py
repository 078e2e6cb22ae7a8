import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from shockflow import (HamiltonianModel, InitialData, LagrangianView, SearchSpec, branchset_at,
                       classify_point, hopf_lax_value)
from shockflow.errors import PreshockError, SchemaError, WindowTooSmall
from shockflow.weak_noise import TETRA_MOMENTA

H1 = HamiltonianModel.quadratic(dim=1)
V_SHAPE = InitialData.pwlinear([[1.0], [-1.0]], [0.0, 0.0])           # -|y|
BOWL = InitialData.min_quadratic([([[1.0]], [0.0], 0.0)])              # y^2/2
CAP = InitialData.min_quadratic([([[-1.0]], [0.0], 0.0)])              # -y^2/2
WAVE = InitialData.callback(1, lambda y: float(np.cos(y[0])), lambda y: np.array([-np.sin(y[0])]))


def test_v_shape_shock():
    vr = hopf_lax_value(H1, V_SHAPE, 1.0, [0.0])
    assert vr.value == pytest.approx(-0.5)
    ys = sorted(float(y[0]) for y in vr.minimizer_points)
    np.testing.assert_allclose(ys, [-1.0, 1.0], atol=1e-12)
    moms = {float(p[0]) for p in vr.momenta}
    assert moms == {1.0, -1.0}
    assert str(classify_point(vr)) == "shock(2)"
    B = branchset_at(H1, V_SHAPE, 1.0, [0.0])
    assert sorted(B.momenta[:, 0]) == [-1.0, 1.0]
    np.testing.assert_allclose(B.H_values, 0.5)


def test_dense_scan_oracle_for_v_shape():
    y = np.linspace(-3, 3, 600_001)
    obj = -np.abs(y) + y ** 2 / 2
    assert obj.min() == pytest.approx(hopf_lax_value(H1, V_SHAPE, 1.0, [0.0]).value, abs=1e-10)


@pytest.mark.parametrize("t, x", [(0.5, 0.3), (1.0, -1.2), (2.0, 2.5)])
def test_bowl_closed_form(t, x):
    vr = hopf_lax_value(H1, BOWL, t, [x])
    assert vr.value == pytest.approx(x * x / (2 * (1 + t)), abs=1e-10)
    assert len(vr.minimizer_points) == 1
    assert vr.minimizer_points[0][0] == pytest.approx(x / (1 + t), abs=1e-7)
    assert str(classify_point(vr)) == "regular"
    B = branchset_at(H1, BOWL, t, [x])
    assert len(B) == 1
    assert B.momenta[0, 0] == pytest.approx(x / (1 + t), abs=1e-6)


def test_initial_condition_recovered_as_t_vanishes():
    for x in (-0.7, 0.2, 1.3):
        errs = [abs(hopf_lax_value(H1, WAVE, t, [x]).value - np.cos(x)) for t in (1e-1, 1e-2, 1e-3)]
        assert errs[-1] < 2e-3
        assert errs[0] > errs[1] > errs[2]


def test_tetrahedral_data_four_way_tie():
    H3 = HamiltonianModel.quadratic(dim=3)
    phi0 = InitialData.pwlinear(TETRA_MOMENTA, np.zeros(4))
    for t in (1e-3, 0.1):
        vr = hopf_lax_value(H3, phi0, t, np.zeros(3))
        assert vr.value == pytest.approx(-t)
        assert len(vr.minimizer_points) == 4
    B = branchset_at(H3, phi0, 0.1, np.zeros(3))
    got = sorted(map(tuple, B.momenta))
    assert got == sorted(map(tuple, TETRA_MOMENTA))


def test_cap_focuses_into_a_preshock():
    vr = hopf_lax_value(H1, CAP, 1.0, [0.0])
    assert str(classify_point(vr)) == "preshock"
    with pytest.raises(PreshockError):
        branchset_at(H1, CAP, 1.0, [0.0])


def test_fixed_window_too_small():
    with pytest.raises(WindowTooSmall):
        hopf_lax_value(H1, WAVE, 1.0, [0.5], SearchSpec(radius=0.05))


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        hopf_lax_value(H1, BOWL, 0.0, [0.0])
    with pytest.raises(SchemaError):
        InitialData.from_dict({"kind": "pwlinear"})
    with pytest.raises(SchemaError):
        InitialData.from_dict({"kind": "spline"})


# -- invariants ---------------------------------------------------------------

@pytest.mark.parametrize("x", [-0.6, 0.1, 0.9])
def test_dynamic_programming_consistency(x):
    s, t = 0.25, 0.5
    L = LagrangianView(H1)
    direct = hopf_lax_value(H1, WAVE, t, [x])
    assert str(classify_point(direct)) == "regular"

    def staged(z):
        return hopf_lax_value(H1, WAVE, s, [z]).value + (t - s) * float(L.value([(x - z) / (t - s)]))

    z0 = float(direct.minimizer_points[0][0]) + (s / t) * (x - float(direct.minimizer_points[0][0]))
    res = minimize_scalar(staged, bounds=(z0 - 0.05, z0 + 0.05), method="bounded", options={"xatol": 1e-10})
    assert res.fun == pytest.approx(direct.value, abs=2e-8)


def test_branch_count_along_shock_curves_never_grows():
    # moving shock between slopes 1.5 and -0.5 travels at speed 1/2
    phi0 = InitialData.pwlinear([[1.5], [-0.5]], [0.0, 0.0])
    counts = [len(hopf_lax_value(H1, phi0, t, [0.5 * t]).minimizer_points) for t in np.linspace(0.2, 3.0, 15)]
    assert counts == [2] * 15
    # two shocks that merge: x = t/2 - 1 until t = 2, then x = 0
    phi0 = InitialData.pwlinear([[1.0], [0.0], [-1.0]], [1.0, 0.0, 1.0])
    times = np.linspace(0.3, 4.0, 24)
    curve = [(t, t / 2 - 1.0 if t < 2 else 0.0) for t in times]
    counts = [len(hopf_lax_value(H1, phi0, t, [x]).minimizer_points) for t, x in curve]
    assert all(b <= a for a, b in zip(counts, counts[1:])) and counts[-1] == 2
    assert len(hopf_lax_value(H1, phi0, 2.0, [0.0]).minimizer_points) == 3


def test_lipschitz_bound():
    rng = np.random.default_rng(5)
    for phi0, lip in ((V_SHAPE, 1.0), (WAVE, 1.0)):
        for _ in range(15):
            t = float(rng.uniform(0.2, 2.0))
            x, xp = rng.uniform(-2, 2, size=2)
            a = hopf_lax_value(H1, phi0, t, [x]).value
            b = hopf_lax_value(H1, phi0, t, [xp]).value
            assert abs(a - b) <= lip * abs(x - xp) + 1e-9


def test_two_dimensional_smooth_data():
    H2 = HamiltonianModel.quadratic(dim=2)
    bowl = InitialData.min_quadratic([(np.eye(2), [0.0, 0.0], 0.0)])
    x = np.array([0.4, -0.8])
    vr = hopf_lax_value(H2, bowl, 1.0, x)
    assert vr.value == pytest.approx(x @ x / 4, abs=1e-9)
