"""Weak additive noise: stochastic particle flow and self-consistent velocities.

A particle moving in a field made of finitely many smooth branches follows
``d gamma = grad_p H(grad phi) dt + eps dW``.  As ``eps -> 0`` it spends a
fraction ``pi_j`` of its time in the cell of branch ``j``; the resulting
effective velocity ``sum_j pi_j v_j`` must keep all branches with positive
weight tied.  Such velocities are enumerated exactly with one small linear
program per subset of branches.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from .convex_core import HamiltonianModel
from .errors import LeftDomain, ValidationError
from .shock_local import BranchSet, argmin_within, hull_membership
from .viscous import ScalarField, Trajectory

logger = logging.getLogger(__name__)

WITNESS_TOL = 1e-9
CHUNK = 1000


def worker_count() -> int:
    """Thread cap from ``SHOCKFLOW_THREADS`` (defaults to the CPU count)."""
    cpus = os.cpu_count() or 1
    env = os.environ.get("SHOCKFLOW_THREADS")
    if env:
        try:
            return max(1, min(cpus, int(env)))
        except ValueError:
            logger.warning("ignoring non-integer SHOCKFLOW_THREADS=%r", env)
    return cpus


# ---------------------------------------------------------------------------
# branch-form fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BranchField:
    """``phi(t, x) = min_i [c_i + p_i.(x - x0) - (t - t0) H_i]`` with velocity ``v_i`` on cell ``i``."""

    momenta: np.ndarray
    H_values: np.ndarray
    velocities: np.ndarray
    offsets: np.ndarray
    x0: np.ndarray
    t0: float = 0.0

    @classmethod
    def from_branchset(cls, B: BranchSet) -> "BranchField":
        return cls(B.momenta, B.H_values, np.asarray(B.velocities, dtype=float),
                   np.zeros(len(B)), B.x, B.t)

    @classmethod
    def from_pieces(cls, H: HamiltonianModel, momenta, offsets) -> "BranchField":
        P = np.atleast_2d(np.asarray(momenta, dtype=float))
        return cls(P, np.asarray(H.value(P), dtype=float), np.asarray(H.grad(P), dtype=float),
                   np.asarray(offsets, dtype=float), np.zeros(P.shape[1]), 0.0)

    @property
    def dim(self) -> int:
        return self.momenta.shape[1]

    def values(self, t: float, x) -> np.ndarray:
        """Branch values, shape ``(..., n_branches)``."""
        x = np.asarray(x, dtype=float)
        return self.offsets + (x - self.x0) @ self.momenta.T - (t - self.t0) * self.H_values

    def cell(self, t: float, x) -> np.ndarray:
        # np.argmin returns the first minimum, i.e. the lowest index on ties
        return np.argmin(self.values(t, x), axis=-1)

    def velocity(self, t: float, x) -> np.ndarray:
        return self.velocities[self.cell(t, x)]


@dataclass(frozen=True)
class NoiseFlowSpec:
    eps: float
    T: float
    seed: int = 0
    dt: float | None = None
    window: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else min(1e-3, self.eps ** 2)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.step - 1e-9))


def _drift(fld, H: HamiltonianModel | None):
    if isinstance(fld, BranchField):
        return fld.velocity, fld.cell
    if isinstance(fld, ScalarField):
        if H is None:
            raise ValueError("a grid field needs the Hamiltonian")

        def vel(t, X):
            X = np.atleast_2d(X)
            return np.array([H.grad(fld.gradient(t, x)) for x in X])
        return vel, None
    raise TypeError("field must be a BranchField or a ScalarField")


def _check_window(spec: NoiseFlowSpec, X: np.ndarray, t: float):
    if spec.window is None:
        return
    lo, hi = (np.asarray(w, dtype=float) for w in spec.window)
    if np.any(X < lo) or np.any(X > hi):
        raise LeftDomain(f"a path left the window at t={t:.4g}")


def _simulate(spec: NoiseFlowSpec, fld, H, y0, rng, n_paths: int, t0: float,
              keep_path: bool = False):
    vel, cell = _drift(fld, H)
    h = spec.T / spec.n_steps
    sq = math.sqrt(h)
    X = np.tile(np.atleast_1d(np.asarray(y0, dtype=float)), (n_paths, 1))
    d = X.shape[1]
    n_cells = fld.momenta.shape[0] if cell is not None else 0
    counts = np.zeros((n_paths, n_cells))
    path = [X[0].copy()] if keep_path else None
    t = t0
    rows = np.arange(n_paths)
    for _ in range(spec.n_steps):
        if cell is not None:
            k = cell(t, X)
            counts[rows, k] += 1
            V = fld.velocities[k]
        else:
            V = vel(t, X)
        X = X + V * h + spec.eps * sq * rng.standard_normal((n_paths, d))
        t += h
        _check_window(spec, X, t)
        if keep_path:
            path.append(X[0].copy())
    return X, counts / spec.n_steps, path


def sde_flow(spec: NoiseFlowSpec, H: HamiltonianModel | None, fld, y0, t0: float = 0.0) -> Trajectory:
    """One Euler-Maruyama path, reproducible from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    _, _, path = _simulate(spec, fld, H, y0, rng, 1, t0, keep_path=True)
    times = t0 + np.linspace(0.0, spec.T, spec.n_steps + 1)
    return Trajectory(times, np.array(path))


@dataclass(frozen=True)
class OccupationReport:
    pi: np.ndarray
    pi_se: np.ndarray
    mean_velocity: np.ndarray
    velocity_se: np.ndarray
    predicted_velocity: np.ndarray
    hull_distance: float
    in_hull: bool
    n_paths: int
    seed: int
    dt: float
    T: float

    def to_dict(self) -> dict:
        return {
            "pi": self.pi.tolist(), "pi_se": self.pi_se.tolist(),
            "mean_velocity": self.mean_velocity.tolist(),
            "velocity_se": self.velocity_se.tolist(),
            "predicted_velocity": self.predicted_velocity.tolist(),
            "hull_distance": self.hull_distance, "in_hull": self.in_hull,
            "n_paths": self.n_paths, "seed": self.seed, "dt": self.dt, "T": self.T,
        }


def occupation_probabilities(spec: NoiseFlowSpec, fld: BranchField, y0, n_paths: int,
                             t0: float = 0.0) -> OccupationReport:
    """Time fractions spent in each branch cell, averaged over independent paths.

    Paths are simulated in chunks of 1000, each chunk seeded from its own
    child of ``SeedSequence(spec.seed)``, so results do not depend on the
    number of worker threads.
    """
    if not isinstance(fld, BranchField):
        raise TypeError("occupation probabilities need a branch-form field")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    sizes = [min(CHUNK, n_paths - s) for s in range(0, n_paths, CHUNK)]
    seeds = np.random.SeedSequence(spec.seed).spawn(len(sizes))

    def run(job):
        m, ss = job
        X, frac, _ = _simulate(spec, fld, None, y0, np.random.default_rng(ss), m, t0)
        vel = (X - y0) / spec.T
        return (frac.sum(0), (frac ** 2).sum(0), vel.sum(0), (vel ** 2).sum(0))

    jobs = list(zip(sizes, seeds))
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(jobs))) as pool:
        parts = list(pool.map(run, jobs))
    # fixed chunk order keeps the sums bitwise reproducible
    s1, s2, v1, v2 = (np.sum([p[k] for p in parts], axis=0) for k in range(4))
    n = float(n_paths)
    pi = s1 / n
    mv = v1 / n
    pi_se = np.sqrt(np.maximum(s2 / n - pi ** 2, 0.0) / max(n - 1, 1))
    v_se = np.sqrt(np.maximum(v2 / n - mv ** 2, 0.0) / max(n - 1, 1))
    cert = hull_membership(mv, fld.velocities, tol=0.0)
    dist = 0.0 if cert.inside else cert.residual
    return OccupationReport(pi, pi_se, mv, v_se, pi @ fld.velocities, dist,
                            bool(dist <= 3 * float(np.max(v_se)) + 1e-12),
                            n_paths, spec.seed, spec.T / spec.n_steps, spec.T)


# ---------------------------------------------------------------------------
# self-consistent velocities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    v_dagger: np.ndarray
    support: tuple[int, ...]
    pi: np.ndarray
    exactness: str
    tied: tuple[int, ...]
    residual: float

    def to_dict(self, labels: Sequence[int] | None = None) -> dict:
        lab = (lambda i: labels[i]) if labels is not None else (lambda i: i + 1)
        return {
            "v_dagger": self.v_dagger.tolist(),
            "support": [lab(i) for i in self.support],
            "pi": self.pi.tolist(),
            "exactness": self.exactness,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class SelfConsistentSet:
    witnesses: list[Witness] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.witnesses)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([w.v_dagger for w in self.witnesses])


def witness_residual(B: BranchSet, v, pi, support) -> float:
    """Largest violation of ``v = sum pi_j v_j`` and of ``support within I(v)``."""
    V = np.asarray(B.velocities, dtype=float)
    pi = np.asarray(pi, dtype=float)
    lin = B.linear_values(v)
    gap = float(np.max(lin[list(support)] - lin.min())) if len(support) else 0.0
    return max(float(np.max(np.abs(v - pi @ V))), gap,
               float(max(0.0, -pi.min())), abs(float(pi.sum()) - 1.0))


def _lp_feasible(B: BranchSet, S: Sequence[int], objective=None):
    """Solve the subset LP in ``(pi, m)``; returns ``(pi, m)`` or ``None``."""
    V = np.asarray(B.velocities, dtype=float)
    P, Hv = B.momenta, B.H_values
    n = len(B)
    # lin_i(pi) = -H_i + p_i . V^T pi = (P V^T pi)_i - H_i
    G = P @ V.T                                    # (n, n)
    S = list(S)
    others = [i for i in range(n) if i not in S]
    nv = n + 1
    A_eq = np.zeros((len(S) + 1, nv))
    b_eq = np.zeros(len(S) + 1)
    for r, j in enumerate(S):
        A_eq[r, :n] = G[j]
        A_eq[r, n] = -1.0
        b_eq[r] = Hv[j]
    A_eq[-1, :n] = 1.0
    b_eq[-1] = 1.0
    A_ub = np.zeros((len(others), nv))
    b_ub = np.zeros(len(others))
    for r, i in enumerate(others):
        # m - lin_i <= 0
        A_ub[r, :n] = -G[i]
        A_ub[r, n] = 1.0
        b_ub[r] = -Hv[i]
    bounds = [(0, 0)] * n + [(None, None)]
    for j in S:
        bounds[j] = (0, None)
    c = np.zeros(nv) if objective is None else objective
    res = linprog(c, A_ub=A_ub if others else None, b_ub=b_ub if others else None,
                  A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return res.x[:n], res.x[n]


def _polish(B: BranchSet, S: Sequence[int], pi: np.ndarray) -> np.ndarray:
    """Re-solve the tie equations on the positive part of ``pi`` by least squares."""
    V = np.asarray(B.velocities, dtype=float)
    G = B.momenta @ V.T
    pos = [j for j in S if pi[j] > 1e-12]
    rows = [np.append(G[j, pos], -1.0) for j in S] + [np.append(np.ones(len(pos)), 0.0)]
    rhs = [B.H_values[j] for j in S] + [1.0]
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    out = np.zeros_like(pi)
    out[pos] = sol[:-1]
    if out.min() < -1e-12:
        return pi
    out = np.maximum(out, 0.0)
    return out / out.sum()


def self_consistent_velocities(B: BranchSet, tol: float = WITNESS_TOL) -> SelfConsistentSet:
    """Every velocity ``v = sum pi_j v_j`` whose support branches stay tied and minimal.

    Subsets are visited in order of increasing size.  When the solution set
    of a subset LP has positive dimension in ``v`` the extreme points along
    each coordinate are reported with ``exactness = 'face-of-solutions'``.
    """
    V = np.asarray(B.velocities, dtype=float)
    n, d = V.shape
    found: list[Witness] = []

    def add(pi, S, exactness):
        v = pi @ V
        support = tuple(int(j) for j in np.flatnonzero(pi > 1e-12))
        for k, w in enumerate(found):
            if np.max(np.abs(w.v_dagger - v)) <= tol:
                # an extreme point of a solution face keeps the face flag
                if exactness != w.exactness and exactness == "face-of-solutions":
                    found[k] = replace(w, exactness=exactness)
                return
        lin = B.linear_values(v)
        tied = argmin_within(lin, tol)
        found.append(Witness(v, support, pi, exactness, tied, witness_residual(B, v, pi, support)))

    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            sol = _lp_feasible(B, S)
            if sol is None:
                continue
            pi = _polish(B, S, sol[0])
            v = pi @ V
            # probe the extent of the solution set in v
            spread = []
            for k in range(d):
                ck = np.append(V[:, k], 0.0)
                lo = _lp_feasible(B, S, ck)
                hi = _lp_feasible(B, S, -ck)
                spread.append((lo, hi))
            span = max((abs(hi[0] @ V[:, k] - lo[0] @ V[:, k]) for k, (lo, hi) in enumerate(spread)
                        if lo is not None and hi is not None), default=0.0)
            if span <= 1e-7:
                add(pi, S, "isolated")
            else:
                for lo, hi in spread:
                    for cand in (lo, hi):
                        if cand is not None:
                            add(cand[0], S, "face-of-solutions")
    return SelfConsistentSet(found)


# ---------------------------------------------------------------------------
# J versus J-bar
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JCurveReport:
    max_distance: float
    s_at_max: float
    min_interior_distance: float
    interiors_intersect: bool
    degenerate: bool
    n_samples: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _segment_distance(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return np.linalg.norm(q - a, axis=-1)
    s = np.clip((q - a) @ ab / L2, 0.0, 1.0)
    return np.linalg.norm(q - a - s[..., None] * ab, axis=-1)


def compare_J_curves(H: HamiltonianModel, p1, p2, n_samples: int = 2001,
                     tol: float = 1e-9, interior_margin: float = 1e-3) -> JCurveReport:
    """Distance between the velocity curve ``s -> grad H(s p1 + (1-s) p2)`` and the chord ``[v1, v2]``."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    v1, v2 = H.grad(p1), H.grad(p2)
    if np.max(np.abs(p1 - p2)) == 0.0:
        return JCurveReport(0.0, 0.0, 0.0, True, True, 1)

    def dist(s):
        return float(_segment_distance(H.grad(s * p1 + (1 - s) * p2), v2, v1))

    s = np.linspace(0.0, 1.0, n_samples)
    D = _segment_distance(H.grad(s[:, None] * p1 + (1 - s[:, None]) * p2), v2, v1)
    k = int(np.argmax(D))
    best_s, best = float(s[k]), float(D[k])
    if 0 < k < n_samples - 1:
        r = minimize_scalar(lambda u: -dist(u), bounds=(s[k - 1], s[k + 1]), method="bounded",
                            options={"xatol": 1e-12})
        if -r.fun > best:
            best_s, best = float(r.x), float(-r.fun)
    inner = D[(s >= interior_margin) & (s <= 1 - interior_margin)]
    mind = float(inner.min()) if inner.size else 0.0
    return JCurveReport(best, best_s, mind, bool(mind <= tol), False, n_samples)


# ---------------------------------------------------------------------------
# the tetrahedral counterexample
# ---------------------------------------------------------------------------

TETRA_MOMENTA = np.array([[1.0, 0.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, -1.0, 0.0]])
TETRA_VELOCITIES = np.array([[-0.5, 0.0, 2.0], [-0.5, 0.0, -2.0], [0.5, 2.0, 0.0], [0.5, -2.0, 0.0]])


def voronoi_gaps(P: np.ndarray, Hv: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``gap[i, j] = (-v_i.p_j + H_j) - (-v_i.p_i + H_i)``; positive off the diagonal when valid."""
    lin = -V @ P.T + Hv[None, :]
    return lin - np.diag(lin)[:, None]


def smoothed_max_hamiltonian(P, Hv, V, beta: float, eta: float) -> HamiltonianModel:
    """Log-sum-exp smoothing of ``max_i [H_i + v_i.(p - p_i)]`` plus ``eta |p|^2 / 2``.

    The affine pieces are shifted so that the quadratic term is absorbed:
    value and gradient at each ``p_i`` match ``H_i`` and ``v_i`` up to
    ``O(exp(-beta * gap))``.
    """
    P = np.asarray(P, dtype=float)
    Hv = np.asarray(Hv, dtype=float)
    V = np.asarray(V, dtype=float)
    slopes = V - eta * P
    icpt = Hv - 0.5 * eta * np.sum(P * P, axis=1) - np.sum(slopes * P, axis=1)

    def weights(p):
        z = beta * (icpt + slopes @ p)
        zm = z.max()
        w = np.exp(z - zm)
        return z, zm, w / w.sum()

    def Hf(t, x, p):
        z, zm, w = weights(p)
        return (zm + math.log(np.exp(z - zm).sum())) / beta + 0.5 * eta * p @ p

    def gf(t, x, p):
        _, _, w = weights(p)
        return w @ slopes + eta * p

    def hf(t, x, p):
        _, _, w = weights(p)
        mean = w @ slopes
        cov = (slopes * w[:, None]).T @ slopes - np.outer(mean, mean)
        return beta * cov + eta * np.eye(P.shape[1])

    return HamiltonianModel.custom(P.shape[1], Hf, gf, hf)


@dataclass(frozen=True)
class CounterexampleReport:
    gaps: np.ndarray
    min_gap: float
    inequalities_hold: bool
    beta: float
    eta: float
    value_drift: float
    gradient_drift: float

    def to_dict(self) -> dict:
        return {
            "voronoi_gaps": self.gaps.tolist(), "min_gap": self.min_gap,
            "inequalities_hold": self.inequalities_hold,
            "n_inequalities": int(self.gaps.shape[0] * (self.gaps.shape[0] - 1)),
            "beta": self.beta, "eta": self.eta,
            "value_drift": self.value_drift, "gradient_drift": self.gradient_drift,
        }


def counterexample_scenario(eta: float = 0.01, drift_tol: float = 1e-8):
    """Tetrahedral branch data whose velocities lie in their own Voronoi cells.

    Returns ``(BranchSet, HamiltonianModel, CounterexampleReport)``.
    """
    P, V = TETRA_MOMENTA, TETRA_VELOCITIES
    Hv = 0.5 * np.sum(P * P, axis=1)
    gaps = voronoi_gaps(P, Hv, V)
    off = ~np.eye(len(P), dtype=bool)
    min_gap = float(gaps[off].min())
    if not min_gap > 0:
        raise ValidationError(f"a Voronoi inequality fails (smallest gap {min_gap:.3e})")
    # the piece-dominance margin at p_i shrinks by eta |p_i - p_j|^2 / 2
    dP2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1)
    margin = float(np.min((gaps.T - 0.5 * eta * dP2)[off]))
    if not margin > 0:
        raise ValidationError("quadratic regularization too large for the Voronoi margin")
    spread = float(np.max(np.linalg.norm(V[:, None] - V[None], axis=-1))) + 1.0
    beta = math.ceil(math.log(len(P) * spread * 10.0 / drift_tol) / margin)
    model = smoothed_max_hamiltonian(P, Hv, V, beta, eta)
    vdrift = float(np.max(np.abs(model.value(P) - Hv)))
    gdrift = float(np.max(np.abs(model.grad(P) - V)))
    if max(vdrift, gdrift) > drift_tol:
        raise ValidationError(f"smoothing drift {max(vdrift, gdrift):.2e} exceeds {drift_tol:.0e}")
    B = BranchSet(P, Hv, t=0.0, x=np.zeros(3), model=model, explicit_velocities=V)
    return B, model, CounterexampleReport(gaps, min_gap, True, float(beta), eta, vdrift, gdrift)


def counterexample_field() -> BranchField:
    """Branch-form field ``min_i (p_i.x - t H_i)`` of the tetrahedral data."""
    P = TETRA_MOMENTA
    return BranchField(P, 0.5 * np.sum(P * P, axis=1), TETRA_VELOCITIES, np.zeros(4), np.zeros(3), 0.0)
