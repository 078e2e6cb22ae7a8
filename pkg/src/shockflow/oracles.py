"""Independent reference computations used by the test and acceptance suites.

Nothing here calls the production solvers; each routine reaches its answer
by a different algorithm (combinatorial, exhaustive or one-dimensional).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

# ---------------------------------------------------------------------------
# Euclidean smallest enclosing ball (Welzl)
# ---------------------------------------------------------------------------


def _ball_through(R: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Smallest ball with every point of ``R`` on its boundary."""
    if not R:
        return np.zeros(0), -1.0
    r0 = R[0]
    if len(R) == 1:
        return r0.copy(), 0.0
    D = np.array([r - r0 for r in R[1:]])
    G = D @ D.T
    rhs = 0.5 * np.sum(D * D, axis=1)
    mu, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    c = r0 + mu @ D
    return c, float(np.linalg.norm(c - r0))


def _contains(ball, q, eps=1e-12) -> bool:
    c, r = ball
    return r >= 0 and float(np.linalg.norm(q - c)) <= r + eps * (1.0 + r)


def welzl(points, seed: int = 0) -> tuple[np.ndarray, float, tuple[int, ...]]:
    """Center, radius and boundary indices of the smallest enclosing ball."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    d = P.shape[1]
    order = list(np.random.default_rng(seed).permutation(len(P)))

    def rec(idx: list[int], R: list[int]):
        if not idx or len(R) == d + 1:
            return _ball_through([P[j] for j in R]) if R else (P[0].copy(), -1.0)
        i = idx[-1]
        ball = rec(idx[:-1], R)
        if _contains(ball, P[i]):
            return ball
        return rec(idx[:-1], R + [i])

    c, r = rec(order, [])
    r = max(r, 0.0)
    dist = np.linalg.norm(P - c, axis=1)
    support = tuple(int(i) for i in np.flatnonzero(dist >= r - 1e-9 * (1.0 + r)))
    return c, r, support


# ---------------------------------------------------------------------------
# one-dimensional Bregman ball by golden-section search
# ---------------------------------------------------------------------------


def golden_section(f, a: float, b: float, tol: float = 1e-13, max_iter: int = 500) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def bregman_center_1d(L_value, L_grad, velocities) -> float:
    """Minimizer of ``max_i D_L(v | v_i)`` over ``[min v_i, max v_i]``."""
    vs = np.asarray(velocities, dtype=float).ravel()

    def worst(v):
        return max(L_value(v) - L_value(w) - L_grad(w) * (v - w) for w in vs)

    return golden_section(worst, float(vs.min()), float(vs.max()))


# ---------------------------------------------------------------------------
# convex hull membership as a linear program
# ---------------------------------------------------------------------------


def lp_in_hull(q, points, tol: float = 1e-9) -> bool:
    """Feasibility of ``q = sum lam_j p_j`` with ``lam`` in the simplex."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    q = np.asarray(q, dtype=float).ravel()
    n = P.shape[0]
    A_eq = np.vstack([P.T, np.ones((1, n))])
    b_eq = np.append(q, 1.0)
    # minimise the l1 residual so that near-misses are measured, not rejected
    m = A_eq.shape[0]
    c = np.concatenate([np.zeros(n), np.ones(2 * m)])
    A = np.hstack([A_eq, np.eye(m), -np.eye(m)])
    res = linprog(c, A_eq=A, b_eq=b_eq, bounds=[(0, None)] * (n + 2 * m), method="highs")
    return bool(res.status == 0 and res.fun <= tol)


# ---------------------------------------------------------------------------
# brute-force self-consistency scan
# ---------------------------------------------------------------------------


def hull_distance(X: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Distance of each row of ``X`` to ``conv(V)``.

    By Caratheodory the hull is the union of simplices on affinely
    independent subsets; the nearest hull point is the affine projection
    onto one of them that lands inside it.
    """
    best = np.full(X.shape[0], np.inf)
    n, d = V.shape
    for r in range(1, min(n, d + 1) + 1):
        for face in itertools.combinations(range(n), r):
            Q = V[list(face)]
            if r == 1:
                best = np.minimum(best, np.linalg.norm(X - Q[0], axis=1))
                continue
            D = Q[1:] - Q[0]
            G = D @ D.T
            if np.linalg.matrix_rank(G, tol=1e-12) < r - 1:
                continue
            mu = np.linalg.solve(G, D @ (X - Q[0]).T).T           # (m, r-1)
            ok = (mu.sum(axis=1) <= 1.0) & np.all(mu >= 0, axis=1)
            proj = Q[0] + mu @ D
            best = np.minimum(best, np.where(ok, np.linalg.norm(X - proj, axis=1), np.inf))
    return best


def self_consistency_residual(X, P, Hv, V) -> np.ndarray:
    """``min_S [dist(v, conv V_S) + max_{j in S} (lin_j(v) - min_i lin_i(v))]``.

    Zero exactly at self-consistent velocities and Lipschitz with constant
    ``1 + 2 max|p_i|``.
    """
    X = np.atleast_2d(X)
    lin = X @ P.T - Hv
    gap = lin - lin.min(axis=1, keepdims=True)
    n = P.shape[0]
    best = np.full(X.shape[0], np.inf)
    for r in range(1, n + 1):
        for S in itertools.combinations(range(n), r):
            S = list(S)
            best = np.minimum(best, hull_distance(X, V[S]) + gap[:, S].max(axis=1))
    return best


def brute_force_self_consistent(P, Hv, V, step: float = 1e-3, coarse: int = 8,
                                extra_levels: int = 10, max_cells: int = 200000) -> np.ndarray:
    """Centers of the grid cells that may hold a self-consistent velocity.

    Starts from a coarse grid on the bounding box of ``V`` and keeps every
    cell whose center residual does not exceed ``Lip * half-diagonal``, so no
    cell containing a true solution is ever discarded.  Refinement goes down
    to cell side ``step`` and then ``extra_levels`` further halvings, which
    shrinks the surviving cells onto the actual zeros of the residual.
    """
    P, Hv, V = (np.asarray(a, dtype=float) for a in (P, Hv, V))
    V = np.atleast_2d(V)
    d = V.shape[1]
    lo, hi = V.min(axis=0), V.max(axis=0)
    side = float(max(np.max(hi - lo), step))
    lip = 1.0 + 2.0 * float(np.max(np.linalg.norm(P, axis=1)))
    h = side / coarse
    axes = [lo[k] + h * (np.arange(coarse + 1)) for k in range(d)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    offsets = np.array(list(itertools.product((-0.25, 0.25), repeat=d)))
    final = step / 2 ** extra_levels
    while True:
        half_diag = 0.5 * h * math.sqrt(d)
        r = self_consistency_residual(centers, P, Hv, V)
        centers = centers[r <= lip * half_diag * (1 + 1e-9) + 1e-12]
        if h <= final or centers.shape[0] == 0:
            return centers
        if centers.shape[0] * 2 ** d > max_cells:
            raise RuntimeError("brute-force scan exceeded its cell budget")
        centers = (centers[:, None, :] + h * offsets[None]).reshape(-1, d)
        h /= 2.0
