import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shockflow import BranchSet, HamiltonianModel, hull_membership, relevant_indices, superdifferential_of
from shockflow.errors import SchemaError
from shockflow.oracles import lp_in_hull
from shockflow.weak_noise import TETRA_MOMENTA

TETRA_H1 = BranchSet(TETRA_MOMENTA, np.ones(4), x=np.zeros(3))


def test_relevant_indices_examples():
    assert relevant_indices(TETRA_H1, [-0.5, 0.0, 0.0]) == (0, 1)
    single = BranchSet([[0.3, 0.1]], [0.2])
    assert relevant_indices(single, [5.0, -2.0]) == (0,)
    burgers = BranchSet([[1.0], [-1.0]], [0.5, 0.5])
    assert relevant_indices(burgers, [0.0]) == (0, 1)


def test_duplicate_momenta_merge_keeps_smaller_H():
    B = BranchSet([[1.0, 0.0], [1.0, 0.0 + 1e-13], [0.0, 1.0]], [2.0, 1.0, 0.5])
    assert len(B) == 2
    np.testing.assert_allclose(B.H_values, [1.0, 0.5])
    assert B.labels == (2, 3)


def test_branchset_json_roundtrip():
    H = HamiltonianModel.quadratic(dim=2)
    B = BranchSet.from_dict({"t": 0.5, "x": [1.0, 2.0], "branches": [{"p": [1.0, 0.0]}, {"p": [0.0, 2.0], "H": 2.0}]}, H)
    assert B.consistency_error() <= 1e-10
    C = BranchSet.from_dict(B.to_dict(), H)
    np.testing.assert_array_equal(B.momenta, C.momenta)
    assert C.t == 0.5
    with pytest.raises(SchemaError):
        BranchSet.from_dict({"branches": [{"q": [1.0]}]})


def test_hull_membership_examples():
    pts = np.array([[0.0, 0.0], [2.0, 2.0]])
    inside, lam = hull_membership([1.0, 1.0], pts)
    assert inside
    np.testing.assert_allclose(lam, [0.5, 0.5], atol=1e-9)
    inside, lam = hull_membership([2.0, 2.0], pts)
    assert inside
    np.testing.assert_allclose(lam, [0.0, 1.0], atol=1e-9)
    q = np.array([0.0, 0.0, 0.9])
    assert not lp_in_hull(q, TETRA_MOMENTA)
    inside, h = hull_membership(q, TETRA_MOMENTA)
    assert not inside
    assert np.all((q - TETRA_MOMENTA) @ h < 0)


def test_superdifferential_examples():
    assert superdifferential_of(BranchSet([[1.0]], [0.5])).dimension == 0
    sd = superdifferential_of(TETRA_H1)
    assert sd.vertices.shape == (4, 4)
    assert sd.dimension == 3
    assert not sd.redundant.any()
    col = superdifferential_of(BranchSet([[-1.0], [0.0], [1.0]], [0.0, 0.0, 0.0]))
    np.testing.assert_array_equal(col.momentum_redundant, [False, True, False])


# -- invariants ---------------------------------------------------------------

coords = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@given(arrays(float, (4, 2), elements=coords), arrays(float, 4, elements=coords),
       arrays(float, 2, elements=coords), coords)
def test_relevant_indices_shift_invariance(P, Hv, v, c):
    B = BranchSet(P, Hv)
    base = relevant_indices(B, v)
    vals = B.linear_values(v)
    gaps = vals - vals.min()
    # a common constant added to every H_i moves all branch values together
    shifted = BranchSet(B.momenta, B.H_values + c, labels=B.labels)
    if np.all((gaps <= 1e-12) | (gaps > 1e-6)):
        assert relevant_indices(shifted, v) == base
    assert np.ptp(vals[list(base)]) <= 2 * 1e-9 * (1 + np.max(np.abs(vals)))


@given(arrays(float, (4, 2), elements=coords), arrays(float, 2, elements=coords),
       arrays(float, 2, elements=coords))
def test_relevant_indices_affine_tilt(P, v, w):
    # H_i -> H_i + w.p_i is undone by v -> v + w
    B = BranchSet(P, np.zeros(4))
    tilted = BranchSet(B.momenta, B.momenta @ w, labels=B.labels)
    vals = B.linear_values(v)
    gaps = vals - vals.min()
    if np.all((gaps == 0) | (gaps > 1e-6)):
        assert relevant_indices(tilted, v + w) == relevant_indices(B, v)


@given(arrays(float, (5, 3), elements=coords), arrays(float, 3, elements=coords))
def test_hull_certificate_is_self_consistent(P, q):
    cert = hull_membership(q, P)
    if cert.inside:
        assert cert.weights.min() >= 0
        assert abs(cert.weights.sum() - 1) <= 1e-12
        assert np.linalg.norm(cert.weights @ P - q) <= max(cert.residual, 1e-9) + 1e-12
    else:
        assert np.all((q - P) @ cert.separator < 0)
    assert cert.inside == lp_in_hull(q, P, tol=1e-7) or cert.residual <= 1e-6
