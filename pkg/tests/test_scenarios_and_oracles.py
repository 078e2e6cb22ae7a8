from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

from shockflow.errors import SchemaError
from shockflow.oracles import (bregman_center_1d, brute_force_self_consistent, golden_section, hull_distance,
                               lp_in_hull, welzl)
from shockflow.scenario import load_scenario, parse_scenario
from shockflow.weak_noise import TETRA_MOMENTA, TETRA_VELOCITIES

SCEN = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.mark.parametrize("path", sorted(SCEN.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    spec, sha = load_scenario(path)
    assert len(sha) == 64
    H = spec.model()
    assert H.dim == spec.inferred_dim()
    if spec.branches is not None or spec.probe is not None:
        assert len(spec.branchset()) >= 1


def test_parse_errors_carry_location():
    with pytest.raises(SchemaError, match="line 2 column"):
        parse_scenario(b'{"name": "x",\n "hamiltonian": }')
    with pytest.raises(SchemaError, match="noise.seed"):
        parse_scenario(b'{"name": "x", "hamiltonian": {"kind": "quadratic"}, '
                       b'"noise": {"eps": 0.1, "y0": [0.0]}}')
    with pytest.raises(SchemaError):
        parse_scenario(b'\xff\xfe')


# -- the oracles themselves ---------------------------------------------------

def test_welzl_against_direct_minimization():
    rng = np.random.default_rng(40)
    for _ in range(30):
        P = rng.normal(size=(int(rng.integers(2, 8)), int(rng.integers(2, 4))))
        c, r, support = welzl(P)
        res = minimize(lambda z: np.max(np.sum((P - z) ** 2, axis=1)), P.mean(0), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        assert r == pytest.approx(np.sqrt(res.fun), abs=1e-5)
        assert np.all(np.linalg.norm(P - c, axis=1) <= r + 1e-9)


def test_golden_section_and_bregman_center():
    assert golden_section(lambda x: (x - 0.3) ** 2, -1.0, 2.0) == pytest.approx(0.3, abs=1e-9)
    # quadratic L: the 1-D Bregman ball is the midpoint
    c = bregman_center_1d(lambda v: 0.5 * v * v, lambda v: v, [-1.0, 2.0, 0.3])
    assert c == pytest.approx(0.5, abs=1e-9)


def test_hull_distance_against_lp():
    rng = np.random.default_rng(41)
    V = rng.normal(size=(4, 3))
    X = rng.normal(size=(200, 3))
    dist = hull_distance(X, V)
    for x, d in zip(X, dist):
        assert (d <= 1e-12) == lp_in_hull(x, V, tol=1e-9)
    # compare outside distances with a direct simplex-constrained projection
    for x, d in zip(X[:20], dist[:20]):
        res = minimize(lambda lam: np.sum((lam @ V - x) ** 2), np.full(4, 0.25), method="SLSQP",
                       bounds=[(0, 1)] * 4, constraints=[{"type": "eq", "fun": lambda lam: lam.sum() - 1}],
                       options={"ftol": 1e-14})
        assert d == pytest.approx(np.sqrt(max(res.fun, 0.0)), abs=1e-6)


def test_brute_force_recovers_tetrahedral_witnesses():
    hits = brute_force_self_consistent(TETRA_MOMENTA, np.ones(4), TETRA_VELOCITIES)
    expected = np.array([[-0.5, 0, 0], [0.5, 0, 0], [0, 0, 0]])
    d = np.min(np.linalg.norm(hits[:, None] - expected[None], axis=-1), axis=1)
    assert d.max() <= 2e-3
    for e in expected:
        assert np.min(np.linalg.norm(hits - e, axis=1)) <= 2e-3
