"""Viscosity solutions from the least-action (Hopf-Lax) formula.

For an autonomous Hamiltonian the minimizing curves are straight lines,
so the value reduces to a finite-dimensional search

    phi(t, x) = min_y [phi0(y) + t L((x - y) / t)].

Min-of-affine initial data is handled exactly (each piece is transported
in closed form); other data go through a grid scan with local polish.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize

from .convex_core import HamiltonianModel, LagrangianView
from .errors import DomainError, PreshockError, SchemaError, WindowTooSmall
from .shock_local import BranchSet

CLUSTER_VALUE_TOL = 1e-8
CLUSTER_POINT_FRAC = 1e-4
PRESHOCK_EIG_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class InitialData:
    """Initial condition ``phi0``.

    kinds:
      ``pwlinear``  ``min_i (p_i.y + c_i)``; exact transport.
      ``min_quadratic``  ``min_k (y.Q_k y / 2 + b_k.y + c_k)``.
      ``callback``  user ``f(y)`` with gradient ``grad(y)``.
      ``grid``  samples on a tensor grid, linearly interpolated.
    """

    kind: str
    dim: int
    momenta: np.ndarray | None = None
    offsets: np.ndarray | None = None
    quads: tuple = ()
    fn: Callable | None = field(default=None, repr=False)
    grad_fn: Callable | None = field(default=None, repr=False)
    axes: tuple = ()
    samples: np.ndarray | None = None

    @classmethod
    def pwlinear(cls, momenta, offsets) -> "InitialData":
        P = np.atleast_2d(np.asarray(momenta, dtype=float))
        c = np.atleast_1d(np.asarray(offsets, dtype=float))
        return cls("pwlinear", P.shape[1], momenta=P, offsets=c)

    @classmethod
    def min_quadratic(cls, pieces) -> "InitialData":
        """``pieces``: iterable of ``(Q, b, c)``."""
        quads = []
        for Q, b, c in pieces:
            b = np.atleast_1d(np.asarray(b, dtype=float))
            Q = np.asarray(Q, dtype=float)
            Q = np.zeros((b.size, b.size)) if Q.ndim == 0 and Q == 0 else np.atleast_2d(Q)
            quads.append((Q, b, float(c)))
        return cls("min_quadratic", quads[0][1].size, quads=tuple(quads))

    @classmethod
    def callback(cls, dim: int, fn: Callable, grad: Callable) -> "InitialData":
        return cls("callback", dim, fn=fn, grad_fn=grad)

    @classmethod
    def grid(cls, axes, samples) -> "InitialData":
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        return cls("grid", len(axes), axes=axes, samples=np.asarray(samples, dtype=float))

    @classmethod
    def from_dict(cls, data: dict) -> "InitialData":
        try:
            kind = data["kind"]
            if kind == "pwlinear":
                pcs = data["pieces"]
                return cls.pwlinear([pc["p"] for pc in pcs], [pc.get("c", 0.0) for pc in pcs])
            if kind == "min_quadratic":
                out = []
                for pc in data["pieces"]:
                    b = np.atleast_1d(np.asarray(pc.get("b", [0.0] * data.get("dim", 1)), dtype=float))
                    Q = pc.get("Q", np.zeros((b.size, b.size)).tolist())
                    out.append((Q, b, pc.get("c", 0.0)))
                return cls.min_quadratic(out)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SchemaError(f"bad initial data: {exc}") from exc
        raise SchemaError(f"unknown initial-data kind {data.get('kind')!r}")

    @property
    def is_affine(self) -> bool:
        if self.kind == "pwlinear":
            return True
        return self.kind == "min_quadratic" and all(not np.any(Q) for Q, _, _ in self.quads)

    def affine_pieces(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "pwlinear":
            return self.momenta, self.offsets
        return (np.array([b for _, b, _ in self.quads]), np.array([c for _, _, c in self.quads]))

    def value(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "pwlinear":
            return np.min(y @ self.momenta.T + self.offsets, axis=-1)
        if self.kind == "min_quadratic":
            vals = [0.5 * np.einsum("...i,ij,...j->...", y, Q, y) + y @ b + c for Q, b, c in self.quads]
            return np.min(np.stack(vals, axis=-1), axis=-1)
        if self.kind == "callback":
            flat = y.reshape(-1, self.dim)
            return np.array([float(self.fn(q)) for q in flat]).reshape(y.shape[:-1])
        from scipy.interpolate import RegularGridInterpolator
        interp = RegularGridInterpolator(self.axes, self.samples, bounds_error=False, fill_value=None)
        return interp(y.reshape(-1, self.dim)).reshape(y.shape[:-1])

    def grad(self, y) -> np.ndarray:
        """Gradient of the active piece (lowest index on ties)."""
        y = np.asarray(y, dtype=float)
        if self.kind == "pwlinear":
            k = np.argmin(y @ self.momenta.T + self.offsets, axis=-1)
            return self.momenta[k]
        if self.kind == "min_quadratic":
            vals = np.stack([0.5 * np.einsum("...i,ij,...j->...", y, Q, y) + y @ b + c
                             for Q, b, c in self.quads], axis=-1)
            k = np.argmin(vals, axis=-1)
            grads = np.stack([y @ Q.T + b for Q, b, _ in self.quads], axis=-2)
            return np.take_along_axis(grads, k[..., None, None], axis=-2)[..., 0, :]
        if self.kind == "callback":
            flat = y.reshape(-1, self.dim)
            return np.array([np.asarray(self.grad_fn(q), dtype=float) for q in flat]).reshape(y.shape)
        h = 1e-6
        out = np.zeros_like(y)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            out[..., k] = (self.value(y + e) - self.value(y - e)) / (2 * h)
        return out

    def lipschitz(self, center, radius: float, n: int = 41) -> float:
        if self.kind == "pwlinear":
            return float(np.max(np.linalg.norm(self.momenta, axis=1)))
        ax = [np.linspace(c - radius, c + radius, n) for c in np.atleast_1d(center)]
        pts = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return float(np.max(np.linalg.norm(self.grad(pts), axis=-1)))


@dataclass(frozen=True)
class SearchSpec:
    """Grid scan controls; ``radius=None`` picks the velocity-bound default."""

    radius: float | None = None
    n: int | None = None
    polish: bool = True
    max_expand: int = 4


@dataclass(frozen=True, eq=False)
class ValueResult:
    value: float
    minimizer_points: list[np.ndarray]
    momenta: list[np.ndarray]
    hessian_min_eig: float
    t: float = 0.0
    x: np.ndarray | None = None
    degenerate: bool = False


@dataclass(frozen=True)
class PointClass:
    kind: str            # 'regular' | 'shock' | 'preshock'
    branches: int

    def __str__(self) -> str:
        return f"shock({self.branches})" if self.kind == "shock" else self.kind


def _objective(H, phi0, t, x):
    view = LagrangianView(H)

    def f(y):
        return phi0.value(y) + t * view.value((x - y) / t)

    def g(y):
        return phi0.grad(y) - view.grad((x - y) / t)

    return view, f, g


def _hessian_min_eig(H, phi0, t, x, y, h: float = 1e-4) -> float:
    view, _, g = _objective(H, phi0, t, x)
    d = H.dim
    J = np.zeros((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        J[:, k] = (g(y + e) - g(y - e)) / (2 * h)
    return float(np.linalg.eigvalsh(0.5 * (J + J.T)).min())


def _affine_value(H, phi0, t, x) -> ValueResult:
    P, c = phi0.affine_pieces()
    vals = c + P @ x - t * H.value(P)
    vmin = float(vals.min())
    idx = np.flatnonzero(vals <= vmin + CLUSTER_VALUE_TOL * (1.0 + abs(vmin)))
    V = H.grad(P[idx])
    pts = [x - t * v for v in V]
    view = LagrangianView(H)
    eig = float(min(np.linalg.eigvalsh(view.hess(v)).min() for v in V)) / t
    return ValueResult(vmin, pts, [P[i].copy() for i in idx], eig, t, x)


def _default_radius(H, phi0, t, x) -> float:
    lip = phi0.lipschitz(x, 1.0 + t)
    for _ in range(2):
        r = (1.0 + H.max_speed(lip)) * t
        lip = max(lip, phi0.lipschitz(x, r))
    return (1.0 + H.max_speed(lip)) * t


def hopf_lax_value(H: HamiltonianModel, phi0: InitialData, t: float, x,
                   search: SearchSpec | None = None) -> ValueResult:
    """Evaluate ``phi(t, x)`` and collect every global minimizer ``y``."""
    if H.time_dependent:
        raise ValueError("the straight-line reduction needs an autonomous Hamiltonian")
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if phi0.is_affine:
        return _affine_value(H, phi0, t, x)
    search = search or SearchSpec()
    radius = search.radius or _default_radius(H, phi0, t, x)
    for _ in range(search.max_expand + 1):
        try:
            return _scan(H, phi0, t, x, radius, search)
        except WindowTooSmall:
            if search.radius is not None:
                raise
            radius *= 2.0
    raise WindowTooSmall(f"minimizer still on the window edge at radius {radius}")


def _scan(H, phi0, t, x, radius, search) -> ValueResult:
    d = H.dim
    n = search.n or {1: 4001, 2: 201}.get(d, 41)
    if H.kind == "relativistic":
        radius = min(radius, t * (1.0 - 1e-9))
    axes = [np.linspace(xc - radius, xc + radius, n) for xc in x]
    Y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    view, f, g = _objective(H, phi0, t, x)
    disp = (x - Y) / t
    if H.kind == "relativistic":
        inside = np.linalg.norm(disp, axis=-1) < 1.0 - 1e-9
        disp = np.where(inside[..., None], disp, 0.0)
    vals = phi0.value(Y) + t * view.value(disp)
    if H.kind == "relativistic":
        vals = np.where(inside, vals, np.inf)
    vmin = float(vals.min())
    spread = float(np.max(vals[np.isfinite(vals)]) - vmin)
    step = 2 * radius / (n - 1)

    # discrete local minima (<= every neighbour)
    fp = ndimage.minimum_filter(vals, size=3, mode="nearest")
    cand = (vals <= fp) & (vals <= vmin + max(1e-6, 1e-3 * spread) + 1e-12)
    labels, nlab = ndimage.label(cand, structure=np.ones((3,) * d))
    edge = np.zeros_like(cand)
    for k in range(d):
        sl = [slice(None)] * d
        sl[k] = 0
        edge[tuple(sl)] = True
        sl[k] = -1
        edge[tuple(sl)] = True

    found: list[tuple[float, np.ndarray, bool]] = []
    for lab in range(1, nlab + 1):
        mask = labels == lab
        ids = np.argwhere(mask)
        flat = ids.shape[0] > 3 ** d
        if flat:
            # degenerate (flat) family of minimizers; represent it by its point nearest x
            pts = Y[mask]
            k = int(np.argmin(np.linalg.norm(pts - x, axis=-1)))
            y0 = pts[k]
            found.append((float(vals[tuple(ids[k])]), y0, True))
            continue
        best = ids[np.argmin(vals[mask])]
        y0 = Y[tuple(best)]
        touches = bool(np.any(edge[mask]))
        y, fy = y0, float(vals[tuple(best)])
        if search.polish:
            lo, hi = y0 - 2 * step, y0 + 2 * step
            res = minimize(f, y0, jac=g, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                           options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 500})
            if res.fun <= fy:
                y, fy = res.x, float(res.fun)
            # Newton polish where the gradient is smooth
            for _ in range(20):
                gy = g(y)
                if np.linalg.norm(gy) < 1e-13:
                    break
                J = np.zeros((d, d))
                hh = 1e-5 * max(step, 1e-3)
                for k in range(d):
                    e = np.zeros(d)
                    e[k] = hh
                    J[:, k] = (g(y + e) - g(y - e)) / (2 * hh)
                try:
                    yn = y - np.linalg.solve(J, gy)
                except np.linalg.LinAlgError:
                    break
                if np.linalg.norm(yn - y0) > 3 * step or not f(yn) <= fy + 1e-15:
                    break
                y, fy = yn, float(f(yn))
        if touches:
            on_edge = np.any(np.abs(y - x) >= radius - 1.5 * step)
            if on_edge:
                raise WindowTooSmall("minimizer touches the search window")
        found.append((fy, y, False))

    best_val = min(v for v, _, _ in found)
    tol = CLUSTER_VALUE_TOL * (1.0 + abs(best_val))
    winners = sorted([(v, y, fl) for v, y, fl in found if v <= best_val + tol], key=lambda z: tuple(z[1]))
    merge = CLUSTER_POINT_FRAC * 2 * radius
    clusters: list[tuple[float, np.ndarray, bool]] = []
    for v, y, fl in winners:
        if any(np.linalg.norm(y - cy) <= merge for _, cy, _ in clusters):
            continue
        clusters.append((v, y, fl))
    value = min(v for v, _, _ in clusters)
    pts = [y for _, y, _ in clusters]
    mom = [view.grad((x - y) / t) for y in pts]
    eig = min(_hessian_min_eig(H, phi0, t, x, y) for y in pts)
    degenerate = any(fl for _, _, fl in clusters)
    if degenerate:
        eig = min(eig, 0.0) if eig < PRESHOCK_EIG_TOL else eig
    return ValueResult(value, pts, mom, eig, t, x, degenerate)


def classify_point(vr: ValueResult, tol_cluster: float | None = None,
                   tol_eig: float = PRESHOCK_EIG_TOL) -> PointClass:
    pts = vr.minimizer_points
    if tol_cluster is not None and len(pts) > 1:
        kept: list[np.ndarray] = []
        for y in pts:
            if all(np.linalg.norm(y - k) > tol_cluster for k in kept):
                kept.append(y)
        pts = kept
    if len(pts) >= 2:
        return PointClass("shock", len(pts))
    if vr.hessian_min_eig <= tol_eig:
        return PointClass("preshock", 1)
    return PointClass("regular", 1)


def branchset_at(H: HamiltonianModel, phi0: InitialData, t: float, x,
                 search: SearchSpec | None = None) -> BranchSet:
    """Branch momenta ``p_i = grad L((x - y_i)/t)`` and values ``H(p_i)`` at ``(t, x)``."""
    vr = hopf_lax_value(H, phi0, t, x, search)
    if classify_point(vr).kind == "preshock":
        raise PreshockError(f"({t}, {vr.x}) is a conjugate point; branch momenta undefined")
    P = np.array(vr.momenta)
    return BranchSet(P, H.value(P), t=t, x=vr.x, model=H)


def field_values(H, phi0, t: float, points, search: SearchSpec | None = None):
    """Value, branch count and class label at each point (CSV helper)."""
    rows = []
    for x in np.atleast_2d(points):
        try:
            vr = hopf_lax_value(H, phi0, t, x, search)
            cls = classify_point(vr)
            rows.append((x, vr.value, len(vr.minimizer_points), str(cls)))
        except (WindowTooSmall, DomainError) as exc:
            rows.append((x, float("nan"), 0, type(exc).__name__))
    return rows


def grid_points(lo, hi, counts) -> np.ndarray:
    axes = [np.linspace(a, b, int(n)) for a, b, n in zip(lo, hi, counts)]
    return np.array(list(itertools.product(*axes)))
