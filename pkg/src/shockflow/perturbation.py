"""Second-order selection of branches along an integral curve leaving a shock point.

Along ``gamma(t) = x0 + tau v* + tau^2 a / 2`` the second derivative of each
branch (relative to the action) is affine in the acceleration ``a``:

    F_i(a) = a.(p_i - p*) + (v* - v_i).f_i - ([H]_i + [L]_i)

with ``f_i`` the momentum rates.  The branches attaining ``min_i F_i(a)``
are the ones that stay on the shock to second order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .admissible import AdmissibleResult, admissible, smallest_bregman_ball
from .convex_core import HamiltonianModel, as_lagrangian
from .errors import SupportUnstable
from .shock_local import BranchSet, argmin_within

DEFAULT_H_LIST = (1e-2, 5e-3, 2.5e-3)
FD_STEP = 1e-6


def _total_derivative(model: HamiltonianModel, t: float, x: np.ndarray, p: np.ndarray,
                      v: np.ndarray) -> float:
    """``dH/dt + v.grad_x H`` at fixed momentum; zero for autonomous models."""
    if not model.time_dependent:
        return 0.0
    if model.dH_dt_fn is not None:
        ht = float(model.dH_dt_fn(t, x, p))
    else:
        ht = (float(model.value(p, t + FD_STEP, x)) - float(model.value(p, t - FD_STEP, x))) / (2 * FD_STEP)
    if model.grad_x_fn is not None:
        hx = np.asarray(model.grad_x_fn(t, x, p), dtype=float)
    else:
        e = np.eye(x.size) * FD_STEP
        hx = np.array([(float(model.value(p, t, x + e[k])) - float(model.value(p, t, x - e[k])))
                       / (2 * FD_STEP) for k in range(x.size)])
    return ht + float(v @ hx)


@dataclass(frozen=True, eq=False)
class SecondOrderData:
    """Branch data at ``(t0, x0)`` together with momentum rates and bracket terms."""

    branches: BranchSet
    f: np.ndarray
    bH: np.ndarray
    bL: np.ndarray
    v_star: np.ndarray
    p_star: np.ndarray
    first_order: tuple[int, ...]

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.f, dtype=float))
        if f.shape != self.branches.momenta.shape:
            raise ValueError("one momentum rate per branch is required")
        if not np.all(np.isfinite(f)):
            raise ValueError("momentum rates must be finite")
        object.__setattr__(self, "f", f)

    @classmethod
    def build(cls, B: BranchSet, f, result: AdmissibleResult | None = None,
              bH=None, bL=None) -> "SecondOrderData":
        """Evaluate brackets from the attached model unless given explicitly.

        ``[H]_i = dH/dt + v*.grad_x H`` at ``p_i`` and ``[L]_i`` the same
        expression for ``L`` at ``v*``, which by the envelope theorem is
        minus that of ``H`` at ``p*``.
        """
        res = result if result is not None else admissible(B)
        model = B.model
        n = len(B)
        if bH is None:
            if model is None:
                bH = np.zeros(n)
            else:
                bH = np.array([_total_derivative(model, B.t, B.x, p, res.v_star) for p in B.momenta])
        if bL is None:
            val = 0.0 if model is None else -_total_derivative(model, B.t, B.x, res.p_star, res.v_star)
            bL = np.full(n, val)
        return cls(B, f, np.asarray(bH, dtype=float), np.asarray(bL, dtype=float),
                   res.v_star, res.p_star, tuple(res.active_set))

    def terms(self, a) -> np.ndarray:
        """All per-branch terms of ``F`` (including branches outside the first-order set)."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        B = self.branches
        V = np.asarray(B.velocities, dtype=float)
        return ((B.momenta - self.p_star) @ a + np.sum((self.v_star - V) * self.f, axis=1)
                - (self.bH + self.bL))


def F_of_a(sd: SecondOrderData, a, restrict: bool = True) -> float:
    """Piecewise linear concave ``F(a)``; by default the minimum runs over ``I(v*)``."""
    T = sd.terms(a)
    idx = list(sd.first_order) if restrict else list(range(T.size))
    return float(T[idx].min())


def second_order_index_set(sd: SecondOrderData, a, tol: float = 1e-9) -> tuple[int, ...]:
    """Zero-based indices attaining ``F(a)`` among the first-order relevant branches."""
    T = sd.terms(a)
    idx = list(sd.first_order)
    hit = argmin_within(T[idx], tol)
    return tuple(idx[k] for k in hit)


@dataclass(frozen=True)
class AccelerationEstimate:
    acceleration: np.ndarray
    h_list: tuple[float, ...]
    centers: np.ndarray
    quotients: np.ndarray
    supports: tuple[tuple[int, ...], ...]
    stable_support: tuple[int, ...]
    method: str = "one-sided differences with Richardson extrapolation"

    def to_dict(self) -> dict:
        return {
            "acceleration": self.acceleration.tolist(),
            "h_list": list(self.h_list),
            "centers": self.centers.tolist(),
            "difference_quotients": self.quotients.tolist(),
            "support_history": [list(s) for s in self.supports],
            "stable_support": list(self.stable_support),
            "method": self.method,
            "numerical_stand_in": True,
        }


def _richardson(h: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Neville-style elimination of the ``O(h), O(h^2), ...`` error terms."""
    table = [D[k].copy() for k in range(len(h))]
    for level in range(1, len(h)):
        for k in range(len(h) - 1, level - 1, -1):
            r = h[k - level] / h[k]
            table[k] = (r * table[k] - table[k - 1]) / (r - 1.0)
    return table[-1]


def estimate_admissible_acceleration(v_curves: Callable[[float], np.ndarray] | Sequence[Callable],
                                     L, t0: float, h_list: Sequence[float] = DEFAULT_H_LIST,
                                     tol: float = 1e-7) -> AccelerationEstimate:
    """Rate of change of the smallest-Bregman-ball center of ``{v_i(t)}`` at ``t0+``.

    ``v_curves`` is either one callable returning the ``(n, d)`` velocity
    array at time ``t`` or a list of per-branch callables.
    """
    if callable(v_curves):
        V_at = lambda t: np.atleast_2d(np.asarray(v_curves(t), dtype=float))
    else:
        V_at = lambda t: np.array([np.atleast_1d(np.asarray(c(t), dtype=float)) for c in v_curves])
    view = as_lagrangian(L)
    hs = np.asarray(sorted(h_list, reverse=True), dtype=float)
    c0, _, _ = smallest_bregman_ball(view, V_at(t0), tol=tol)
    centers, supports = [], []
    for h in hs:
        c, _, sup = smallest_bregman_ball(view, V_at(t0 + h), tol=tol)
        centers.append(c)
        supports.append(tuple(int(i) for i in sup))
    if len(set(supports)) > 1:
        raise SupportUnstable(f"ball support changes across h: {supports}")
    centers = np.array(centers)
    D = (centers - c0) / hs[:, None]
    a = _richardson(hs, D)
    return AccelerationEstimate(a, tuple(hs.tolist()), centers, D, tuple(supports), supports[-1])
