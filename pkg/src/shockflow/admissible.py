"""Admissible velocity at a shock point and the smallest Bregman ball.

The admissible velocity is the unique minimizer of

    hat_L(v) = L(v) - min_i (-H_i + p_i.v) = max_i [L(v) + H_i - p_i.v].

:func:`admissible` minimizes it with a primal active-set scheme: Newton
steps on the affine face where the current active pieces tie, exact
line searches along the piecewise-smooth objective, and a hull
certificate that either proves optimality or yields a descent direction.

:func:`smallest_bregman_ball` solves the same problem from the dual side
(concave maximization over the simplex of branch weights) so the two can
be checked against each other.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space

from .convex_core import REL_EDGE, LagrangianView, as_lagrangian
from .errors import DomainBoundary, DomainError, FieldError, NonConvergence
from .shock_local import BranchSet, argmin_within, hull_membership

logger = logging.getLogger(__name__)

ACTIVE_TOL = 1e-7
CERT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AdmissibleResult:
    v_star: np.ndarray
    p_star: np.ndarray
    active_set: tuple[int, ...]
    hull_weights: np.ndarray
    objective: float
    certificate_residual: float
    iterations: int = 0

    def to_dict(self, labels: Sequence[int] | None = None) -> dict:
        act = list(self.active_set)
        return {
            "v_star": self.v_star.tolist(),
            "p_star": self.p_star.tolist(),
            "active_set": [labels[i] for i in act] if labels else act,
            "weights": self.hull_weights.tolist(),
            "objective": self.objective,
            "certificate_residual": self.certificate_residual,
        }


def _view(B: BranchSet, L: LagrangianView | None = None) -> LagrangianView:
    if L is not None:
        return as_lagrangian(L)
    if B.model is None:
        raise ValueError("branch set has no Hamiltonian model attached")
    return LagrangianView(B.model)


def hat_L(B: BranchSet, v, L: LagrangianView | None = None) -> float:
    """Surplus-action rate ``max_i [L(v) + H_i - p_i.v]``."""
    view = _view(B, L)
    v = np.asarray(v, dtype=float)
    return float(view.value(v, B.t, B.x) + np.max(B.H_values - B.momenta @ v))


def _ball_center_guess(points: np.ndarray, iters: int = 200) -> np.ndarray:
    # Badoiu-Clarkson core-set iteration; only a starting point
    c = points.mean(axis=0)
    for k in range(1, iters + 1):
        far = points[np.argmax(np.sum((points - c) ** 2, axis=1))]
        c = c + (far - c) / (k + 1)
    return c


class _MaxOfPieces:
    """``f(v) = L(v) + max_i (H_i - p_i.v)`` with helpers for the solver."""

    def __init__(self, B: BranchSet, view: LagrangianView):
        self.P = B.momenta
        self.Hv = B.H_values
        self.view = view
        self.t, self.x = B.t, B.x
        self.relativistic = view.model.kind == "relativistic"

    def pieces(self, v):
        return self.Hv - self.P @ v

    def f(self, v) -> float:
        return float(self.view.value(v, self.t, self.x) + np.max(self.pieces(v)))

    def gradL(self, v):
        return self.view.grad(v, self.t, self.x)

    def hessL(self, v):
        return self.view.hess(v, self.t, self.x)

    def in_domain(self, v) -> bool:
        return not self.relativistic or float(np.linalg.norm(v)) < 1.0 - REL_EDGE

    def domain_limit(self, v, d) -> float:
        """Largest ``s`` keeping ``v + s d`` inside dom L (inf when unbounded)."""
        if not self.relativistic:
            return np.inf
        r = 1.0 - 1e-9
        a, b, c = d @ d, 2 * v @ d, v @ v - r * r
        if a == 0:
            return np.inf
        return float((-b + np.sqrt(max(b * b - 4 * a * c, 0.0))) / (2 * a))

    # -- face Newton -------------------------------------------------
    def face_minimizer(self, W: Sequence[int], v0: np.ndarray) -> np.ndarray:
        W = list(W)
        w0 = W[0]
        v = v0.copy()
        if len(W) > 1:
            C = self.P[W[1:]] - self.P[w0]
            rhs = self.Hv[W[1:]] - self.Hv[w0]
            v = v - np.linalg.lstsq(C, C @ v - rhs, rcond=None)[0]
            N = null_space(C, rcond=1e-12)
        else:
            N = np.eye(len(v))
        if not self.in_domain(v):
            return v0
        if N.shape[1] == 0:
            return v
        pw = self.P[w0]

        def obj(u):
            return float(self.view.value(u, self.t, self.x) - pw @ u)

        for _ in range(100):
            g = N.T @ (self.gradL(v) - pw)
            if np.linalg.norm(g) <= 1e-15 * (1.0 + np.linalg.norm(pw)):
                break
            Hr = N.T @ self.hessL(v) @ N
            try:
                step = N @ np.linalg.solve(Hr, g)
            except np.linalg.LinAlgError:
                step = N @ g
            lam, f0 = 1.0, obj(v)
            while lam > 1e-14:
                cand = v - lam * step
                if self.in_domain(cand) and obj(cand) <= f0 - 1e-4 * lam * float(g @ (N.T @ step)) + 1e-15 * abs(f0):
                    break
                lam *= 0.5
            if lam <= 1e-14:
                break
            v = v - lam * step
            if lam * np.linalg.norm(step) <= 1e-16 * (1.0 + np.linalg.norm(v)):
                break
        return v

    # -- exact line search on the max-of-pieces structure ------------
    def line_min(self, v, d, smax: float | None) -> np.ndarray:
        cap = self.domain_limit(v, d)
        hi_lim = cap if smax is None else min(smax, cap)
        c = self.pieces(v)
        b = self.P @ d                     # piece i has slope -b_i in s
        cmax = c.max()
        ties = np.flatnonzero(c >= cmax - 1e-13 * (1 + abs(cmax)))
        cur = ties[np.argmin(b[ties])]
        s0 = 0.0

        def dphi(s, slope):
            return float(self.gradL(v + s * d) @ d) + slope

        while True:
            slope = -b[cur]
            # next breakpoint where a steeper piece overtakes the current one
            steeper = np.flatnonzero(b < b[cur] - 1e-15)
            s1, nxt = hi_lim, None
            if steeper.size:
                cross = (c[cur] - c[steeper]) / (b[cur] - b[steeper])
                cross = np.where(cross > s0 - 1e-15, cross, np.inf)
                k = int(np.argmin(cross))
                if cross[k] < s1:
                    s1, nxt = max(float(cross[k]), s0), int(steeper[k])
            if dphi(s0, slope) >= 0:
                return v + s0 * d
            if np.isfinite(s1):
                end = s1 if nxt is not None else s1 * (1 - 1e-15)
                if nxt is not None and dphi(end, slope) <= 0:
                    s0, cur = s1, nxt
                    continue
                if nxt is None and dphi(end, slope) <= 0:
                    return v + end * d
                lo, hi = s0, end
            else:
                lo, hi = s0, max(s0, 1.0)
                while dphi(hi, slope) < 0:
                    lo, hi = hi, 2 * hi
                    if hi > 1e12:
                        raise NonConvergence("line search diverged")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if dphi(mid, slope) < 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-16 * (1 + hi):
                    break
            return v + 0.5 * (lo + hi) * d


def _kkt_residual(prob: _MaxOfPieces, v, lam, act) -> np.ndarray:
    P = prob.P[act]
    pc = prob.pieces(v)[act]
    return np.concatenate([prob.gradL(v) - lam @ P, pc[1:] - pc[0], [lam.sum() - 1.0]])


def _kkt_polish(prob: _MaxOfPieces, v: np.ndarray, steps: int = 8) -> np.ndarray:
    """Newton on ``grad L(v) = sum lam_j p_j`` with the active pieces tied.

    The descent loop stops once the hull certificate holds to ``CERT_TOL``;
    on ill-conditioned data that still leaves ``v`` loose by the condition
    number of ``Hess L``.  A few Newton steps on the optimality system pin
    it down to rounding; a step is kept only if it shrinks the residual and
    the weights stay non-negative.
    """
    act = list(argmin_within(-prob.pieces(v), ACTIVE_TOL))
    cert = hull_membership(prob.gradL(v), prob.P[act], tol=1e-6)
    if not cert.inside:
        return v
    lam = cert.weights.copy()
    d, k = v.size, len(act)
    P = prob.P[act]
    r = _kkt_residual(prob, v, lam, act)
    for _ in range(steps):
        if np.linalg.norm(r) <= 1e-15 * (1.0 + np.linalg.norm(v)):
            break
        J = np.zeros((d + k, d + k))
        J[:d, :d] = prob.hessL(v)
        J[:d, d:] = -P.T
        J[d:d + k - 1, :d] = -(P[1:] - P[0])
        J[-1, d:] = 1.0
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        vn, ln = v + step[:d], lam + step[d:]
        if ln.min() < -1e-12 or not prob.in_domain(vn):
            break
        rn = _kkt_residual(prob, vn, ln, act)
        if not np.linalg.norm(rn) < np.linalg.norm(r):
            break
        v, lam, r = vn, np.maximum(ln, 0.0), rn
    return v


def admissible(B: BranchSet, start=None, L: LagrangianView | None = None,
               max_iter: int = 500) -> AdmissibleResult:
    """Minimize ``hat_L`` and certify the optimum.

    Returns the admissible velocity ``v*``, the momentum ``p* = grad L(v*)``
    and weights expressing ``p*`` as a convex combination of the active
    momenta.
    """
    view = _view(B, L)
    prob = _MaxOfPieces(B, view)
    if start is None:
        try:
            V = B.velocities
        except (ValueError, DomainError):
            V = B.momenta
        v = _ball_center_guess(np.atleast_2d(V))
    else:
        v = np.asarray(start, dtype=float).copy()
    if not prob.in_domain(v):
        v = v * (1.0 - 1e-6) / max(1.0, float(np.linalg.norm(v)))

    it = 0
    for it in range(1, max_iter + 1):
        fv = prob.f(v)
        W = argmin_within(-prob.pieces(v), 1e-12)
        vf = prob.face_minimizer(W, v)
        d = vf - v
        if np.linalg.norm(d) > 1e-14 * (1.0 + np.linalg.norm(v)):
            vn = prob.line_min(v, d, 1.0)
            if prob.f(vn) < fv - 1e-15 * (1.0 + abs(fv)) or np.linalg.norm(vn - v) > 1e-12 * (1 + np.linalg.norm(v)):
                v = vn
                continue
        cert = hull_membership(prob.gradL(v), B.momenta[list(W)], tol=CERT_TOL)
        if cert.inside:
            break
        vn = prob.line_min(v, cert.separator, None)
        if np.linalg.norm(vn - v) <= 1e-15 * (1 + np.linalg.norm(v)):
            # stalled on a tolerance-sized kink: widen the working set
            W2 = argmin_within(-prob.pieces(v), 1e-9)
            if cert.residual <= 1e-9 or len(W2) == len(W):
                break
        v = vn
    else:
        raise NonConvergence(f"admissible-velocity solver hit {max_iter} iterations")

    v = _kkt_polish(prob, v)
    if prob.relativistic and np.linalg.norm(v) >= 1.0 - 1e-8:
        raise DomainBoundary("admissible velocity pushed to the boundary of dom L")
    obj = prob.f(v)
    p_star = prob.gradL(v)
    active = argmin_within(-prob.pieces(v), ACTIVE_TOL)
    cert = hull_membership(p_star, B.momenta[list(active)], tol=1e-6)
    if not cert.inside:
        raise NonConvergence(f"optimality certificate failed (residual {cert.residual:.3e})")
    return AdmissibleResult(v, p_star, active, cert.weights, obj, cert.residual, it)


def smallest_bregman_ball(L, velocities, tol: float = 1e-7, max_iter: int = 500):
    """Center, radius and support of the smallest Bregman ball around ``velocities``.

    Solved through the dual: maximize ``sum_i lam_i H_i - H(sum_i lam_i p_i)``
    over the simplex, with ``p_i = grad L(v_i)`` and ``H_i = p_i.v_i - L(v_i)``.
    The center is ``grad_p H`` at the optimal weighted momentum.
    """
    view = as_lagrangian(L)
    H = view.model
    V = np.atleast_2d(np.asarray(velocities, dtype=float))
    n = V.shape[0]
    P = np.atleast_2d(view.grad(V))
    Hv = np.sum(P * V, axis=1) - np.atleast_1d(view.value(V))
    if n == 1:
        return V[0].copy(), 0.0, (0,)

    def g(lam):
        return float(lam @ Hv - H.value(lam @ P))

    lam = np.full(n, 1.0 / n)
    W = list(range(n))
    for _ in range(max_iter):
        q = lam @ P
        u = H.grad(q)
        grad = Hv - P @ u
        k = len(W)
        face_done = True
        if k > 1:
            Z = null_space(np.ones((1, k)))
            gS = Z.T @ grad[W]
            if np.linalg.norm(gS) > 1e-13 * (1.0 + np.max(np.abs(grad))):
                face_done = False
                G = P[W] @ H.hess(q) @ P[W].T
                Hr = Z.T @ G @ Z
                rho = 1e-11 * (1.0 + np.trace(Hr))
                y = np.linalg.solve(Hr + rho * np.eye(k - 1), gS)
                dl = Z @ y
                neg = dl < 0
                ratios = np.full(k, np.inf)
                ratios[neg] = -lam[W][neg] / dl[neg]
                jb = int(np.argmin(ratios))
                amax = float(ratios[jb])
                alpha = min(1.0, amax)
                g0 = g(lam)
                slope = float(grad[W] @ dl)
                while alpha > 1e-16:
                    trial = lam.copy()
                    trial[W] += alpha * dl
                    trial = np.maximum(trial, 0.0)
                    if g(trial) >= g0 + 1e-4 * alpha * slope - 1e-15 * abs(g0):
                        break
                    alpha *= 0.5
                if alpha <= 1e-16:
                    face_done = True
                else:
                    lam[W] += alpha * dl
                    if alpha >= amax:
                        lam[W[jb]] = 0.0
                    lam = np.maximum(lam, 0.0)
                    lam /= lam.sum()
                    W = [i for i in W if lam[i] > 0.0]
                    continue
        nu = float(np.mean(grad[W]))
        outside = [i for i in range(n) if i not in W]
        viol = [i for i in outside if grad[i] > nu + 1e-12 * (1.0 + abs(nu))]
        if not viol:
            break
        W.append(max(viol, key=lambda i: grad[i]))
        W.sort()
    else:
        raise NonConvergence("Bregman ball dual solver did not converge")

    center = H.grad(lam @ P)
    div = np.array([
        float(view.value(center) - view.value(vi) - view.grad(vi) @ (center - vi)) for vi in V
    ])
    radius = float(div.max())
    support = tuple(int(i) for i in np.flatnonzero(div >= radius - tol * (1.0 + radius)))
    return center, radius, support


def surplus_rate_check(B: BranchSet, phi: Callable, v, dt_list,
                       L: LagrangianView | None = None) -> list[float]:
    """Finite-``dt`` surplus-action rates ``[phi(t,x) + L(v)dt - phi(t+dt, x+v dt)]/dt``."""
    view = _view(B, L)
    v = np.asarray(v, dtype=float)
    Lv = float(view.value(v, B.t, B.x))
    try:
        base = float(phi(B.t, B.x))
    except Exception as exc:  # noqa: BLE001 - user callback
        raise FieldError(f"phi not evaluable at ({B.t}, {B.x})") from exc
    rates = []
    for dt in dt_list:
        try:
            nxt = float(phi(B.t + dt, B.x + v * dt))
        except Exception as exc:  # noqa: BLE001
            raise FieldError(f"phi not evaluable at t={B.t + dt}") from exc
        if not np.isfinite(nxt):
            raise FieldError("phi returned a non-finite value")
        rates.append((base + Lv * dt - nxt) / dt)
    return rates


def classify_restraining(B: BranchSet, result: AdmissibleResult | None = None) -> str:
    """``'restraining'`` unless the admissible velocity is fixed by a proper subset.

    The determining subset is the support of the smallest Bregman ball,
    i.e. the pieces of ``hat_L`` active at ``v*``.
    """
    if len(B) <= 2:
        return "restraining"
    res = result if result is not None else admissible(B)
    return "nonrestraining" if len(res.active_set) < len(B) else "restraining"
