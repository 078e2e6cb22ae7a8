"""Parabolic regularization, particle transport and the vanishing-viscosity study.

The viscous equation ``phi_t + H(grad phi) = mu lap phi`` is stepped with an
explicit monotone scheme (local Lax-Friedrichs numerical Hamiltonian plus
centred diffusion) on a uniform grid in one or two space dimensions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from . import _kernels
from .admissible import admissible
from .convex_core import HamiltonianModel
from .errors import BlowUp, LeftDomain, QuadratureError, StabilityError
from .lax_oleinik import InitialData, branchset_at

logger = logging.getLogger(__name__)

CFL_FACTOR = 0.4


@dataclass(frozen=True)
class GridSpec:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    dx: float
    dt: float | None = None
    save_dt: float | None = None

    @property
    def dim(self) -> int:
        return len(self.lo)

    def axes(self) -> list[np.ndarray]:
        out = []
        for a, b in zip(self.lo, self.hi):
            n = int(round((b - a) / self.dx)) + 1
            out.append(np.linspace(a, a + (n - 1) * self.dx, n))
        return out


def stable_dt(H: HamiltonianModel, mu: float, dx: float, dim: int, vmax: float) -> float:
    diff = dx * dx / (2 * dim * mu) if mu > 0 else np.inf
    adv = dx / vmax if vmax > 0 else np.inf
    return CFL_FACTOR * min(diff, adv)


@dataclass(eq=False)
class ScalarField:
    """Snapshots of ``phi^mu`` on a uniform space grid."""

    axes: list[np.ndarray]
    times: np.ndarray
    values: np.ndarray          # (n_times, *grid)
    dx: float
    dt: float
    mu: float
    dt_bound: float
    model: HamiltonianModel | None = None
    _grads: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def lo(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def hi(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    def gradients(self) -> np.ndarray:
        """Centred-difference gradients, shape ``(n_times, *grid, dim)``."""
        if self._grads is None:
            g = np.gradient(self.values, *([self.dx] * self.dim), axis=tuple(range(1, self.dim + 1)))
            if self.dim == 1:
                g = [g]
            self._grads = np.stack(g, axis=-1)
        return self._grads

    def _locate(self, t: float, x: np.ndarray):
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise LeftDomain(f"point {x} outside the field window")
        tt = np.clip(t, self.times[0], self.times[-1])
        k = int(np.clip(np.searchsorted(self.times, tt) - 1, 0, len(self.times) - 2))
        wt = (tt - self.times[k]) / (self.times[k + 1] - self.times[k])
        pos = (x - self.lo) / self.dx
        idx = np.clip(np.floor(pos).astype(int), 0, [len(a) - 2 for a in self.axes])
        frac = pos - idx
        return k, wt, idx, frac

    def _interp(self, arr: np.ndarray, t: float, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k, wt, idx, frac = self._locate(t, x)
        out = 0.0
        for corner in np.ndindex(*([2] * self.dim)):
            w = np.prod([frac[j] if c else 1 - frac[j] for j, c in enumerate(corner)])
            if w == 0:
                continue
            sl = tuple(idx[j] + c for j, c in enumerate(corner))
            out = out + w * ((1 - wt) * arr[(k,) + sl] + wt * arr[(k + 1,) + sl])
        return np.asarray(out)

    def value(self, t: float, x) -> float:
        return float(self._interp(self.values, t, x))

    def gradient(self, t: float, x) -> np.ndarray:
        return self._interp(self.gradients(), t, x)

    def snapshot(self, t: float) -> np.ndarray:
        return self.values[int(np.argmin(np.abs(self.times - t)))]

    def second_difference_max(self, t_from: float = 0.0) -> float:
        """Largest eigenvalue of the discrete Hessian over snapshots with ``t >= t_from``."""
        sel = self.values[self.times >= t_from]
        d2 = np.diff(sel, 2, axis=1) / self.dx**2
        best = float(d2.max())
        if self.dim == 2:
            dyy = np.diff(sel, 2, axis=2) / self.dx**2
            dxy = (sel[:, 2:, 2:] - sel[:, 2:, :-2] - sel[:, :-2, 2:] + sel[:, :-2, :-2]) / (4 * self.dx**2)
            a, b, c = d2[:, :, 1:-1], dxy, dyy[:, 1:-1, :]
            lam = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
            best = float(lam.max())
        return best


def _pad_linear(u: np.ndarray) -> np.ndarray:
    """One ghost layer per side by linear extrapolation."""
    out = u
    for ax in range(u.ndim):
        first = np.take(out, [0], axis=ax)
        second = np.take(out, [1], axis=ax)
        last = np.take(out, [-1], axis=ax)
        prev = np.take(out, [-2], axis=ax)
        out = np.concatenate([2 * first - second, out, 2 * last - prev], axis=ax)
    return out


def _llf_rhs(H: HamiltonianModel, u: np.ndarray, dx: float, mu: float) -> np.ndarray:
    d = u.ndim
    g = _pad_linear(u)
    core = tuple(slice(1, -1) for _ in range(d))
    pm, pp, lap = [], [], 0.0
    for ax in range(d):
        fwd = [slice(1, -1)] * d
        bwd = [slice(1, -1)] * d
        fwd[ax] = slice(2, None)
        bwd[ax] = slice(None, -2)
        c = g[core]
        plus = (g[tuple(fwd)] - c) / dx
        minus = (c - g[tuple(bwd)]) / dx
        pp.append(plus)
        pm.append(minus)
        lap = lap + (plus - minus) / dx
    pbar = np.stack([(a + b) * 0.5 for a, b in zip(pm, pp)], axis=-1)
    ham = H.value(pbar)
    # local wave speeds: max |dH/dp_k| over the corners of the [p-, p+] box
    alpha = np.zeros(u.shape + (d,))
    for corner in np.ndindex(*([2] * d)):
        q = np.stack([pp[k] if c else pm[k] for k, c in enumerate(corner)], axis=-1)
        alpha = np.maximum(alpha, np.abs(H.grad(q)))
    for k in range(d):
        ham = ham - 0.5 * alpha[..., k] * (pp[k] - pm[k])
    return -ham + mu * lap


def solve_viscous(H: HamiltonianModel, phi0: InitialData, mu: float, grid: GridSpec,
                  T: float) -> ScalarField:
    """Step the parabolic regularization from ``t = 0`` to ``T``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if grid.dim not in (1, 2):
        raise ValueError("only 1-D and 2-D solves are supported")
    axes = grid.axes()
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    u = np.asarray(phi0.value(X), dtype=float)
    grads = np.stack(np.gradient(u, *([grid.dx] * grid.dim)), axis=-1) if grid.dim > 1 else np.gradient(u, grid.dx)[..., None]
    lip = float(np.max(np.linalg.norm(grads, axis=-1)))
    vmax = 1.05 * max(H.max_speed(lip), 1e-12)
    bound = stable_dt(H, mu, grid.dx, grid.dim, vmax)
    dt = grid.dt if grid.dt is not None else bound
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the stability bound {bound:.3e}")
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / nsteps
    save_dt = grid.save_dt or T / 200
    every = max(1, int(round(save_dt / dt)))
    snaps, times = [u.copy()], [0.0]
    compiled = H.kind in _kernels.KIND_CODES
    if compiled:
        A = np.eye(2) if H.A is None else np.asarray(H.A, dtype=float)
        args = (grid.dx, float(mu), _kernels.KIND_CODES[H.kind], A,
                float(H.alpha or 2.0), float(H.c or 0.0))
        stepper = _kernels.step_1d if grid.dim == 1 else _kernels.step_2d
    n = 0
    while n < nsteps:
        k = min(every, nsteps - n)
        if compiled:
            u = stepper(u, k, dt, *args)
        else:
            for _ in range(k):
                u = u + dt * _llf_rhs(H, u, grid.dx, mu)
        n += k
        if not np.all(np.isfinite(u)):
            raise BlowUp(f"non-finite values at t={n * dt:.4g}")
        snaps.append(u.copy())
        times.append(n * dt)
    return ScalarField(axes, np.array(times), np.array(snaps), grid.dx, dt, mu, bound, H)


def cole_hopf_oracle(phi0, mu: float, t: float, x: float, epsrel: float = 1e-12) -> float:
    """``phi^mu(t, x)`` for ``H = p^2/2`` in 1-D by adaptive quadrature of the heat kernel."""
    f = phi0.value if isinstance(phi0, InitialData) else phi0

    def E(y):
        y = np.asarray(y, dtype=float)
        vals = f(y[..., None]) if isinstance(phi0, InitialData) else f(y)
        return np.asarray(vals, dtype=float) + (x - y) ** 2 / (2 * t)

    W = 10.0 + 10.0 * t + abs(x)
    ys = np.linspace(x - W, x + W, 8001)
    ev = E(ys)
    m = float(ev.min())
    keep = ys[ev - m <= 80 * mu]
    a, b = float(keep.min()) - 0.1, float(keep.max()) + 0.1
    if a <= ys[0] or b >= ys[-1]:
        raise QuadratureError("integrand not localized in the scan window")
    mins = ys[1:-1][(ev[1:-1] <= ev[:-2]) & (ev[1:-1] <= ev[2:]) & (ev[1:-1] - m <= 80 * mu)]
    pts = sorted(set(np.round(mins, 12).tolist()) | {0.0})
    pts = [p for p in pts if a < p < b][:50]

    def integrand(y):
        return math.exp(-(float(E(np.array(y))) - m) / (2 * mu))

    val, err = integrate.quad(integrand, a, b, points=pts or None, limit=1000,
                              epsabs=0.0, epsrel=epsrel)
    if not np.isfinite(val) or val <= 0 or err > 1e-8 * val:
        raise QuadratureError(f"quadrature error estimate {err:.2e} for value {val:.2e}")
    return m - 2 * mu * math.log(val / math.sqrt(4 * math.pi * mu * t))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray

    @property
    def forward_velocities(self) -> np.ndarray:
        return np.diff(self.positions, axis=0) / np.diff(self.times)[:, None]

    def at(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.positions[:, k])
                         for k in range(self.positions.shape[1])])


def integrate_particle(field: ScalarField, H: HamiltonianModel, y0, t0: float = 0.0,
                       t1: float | None = None, dt: float | None = None) -> Trajectory:
    """RK4 for ``gamma' = grad_p H(grad phi^mu(t, gamma))``."""
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    t1 = field.times[-1] if t1 is None else t1
    h = dt or float(np.min(np.diff(field.times))) / 4
    n = max(1, math.ceil((t1 - t0) / h - 1e-9))
    h = (t1 - t0) / n

    def vel(t, x):
        return H.grad(field.gradient(t, x))

    ts, ps = [t0], [y.copy()]
    t = t0
    for _ in range(n):
        k1 = vel(t, y)
        k2 = vel(t + h / 2, y + h / 2 * k1)
        k3 = vel(t + h / 2, y + h / 2 * k2)
        k4 = vel(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + h
        ts.append(t)
        ps.append(y.copy())
    return Trajectory(np.array(ts), np.array(ps))


def inviscid_branch_count(H: HamiltonianModel, phi0: InitialData, t: float, x, delta: float) -> int:
    """Branches whose region lies within ``delta`` of ``x`` (min-of-affine data)."""
    P, c = phi0.affine_pieces()
    vals = c + P @ np.asarray(x, dtype=float) - t * H.value(P)
    k = int(np.argmin(vals))
    gap = vals - vals[k]
    reach = delta * np.linalg.norm(P - P[k], axis=1)
    return int(np.sum(gap <= reach + 1e-14))


@dataclass(frozen=True)
class ViscousScenario:
    """A shock point ``(t0, x0)`` reached by the inviscid particle started at ``y0``."""

    model: HamiltonianModel
    phi0: InitialData
    y0: tuple[float, ...]
    shock_t: float
    shock_x: tuple[float, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    T: float
    tau: float
    dx: float | None = None
    name: str = "scenario"

    def dx_for(self, mu: float) -> float:
        if self.dx is not None:
            return self.dx
        return float(np.clip(mu / 2.5, 0.01, 0.04)) if len(self.lo) == 2 else min(0.01, mu / 10)


@dataclass(frozen=True)
class StudyRow:
    mu: float
    dx: float
    capture_time: float
    measure_from: float
    forward_velocity: tuple[float, ...]
    v_star: tuple[float, ...]
    distance: float
    chord_velocities: tuple[tuple[float, ...], ...]


def capture_time(traj: Trajectory, H, phi0: InitialData, delta: float) -> float:
    for t, x in zip(traj.times, traj.positions):
        if t > 0 and inviscid_branch_count(H, phi0, t, x, delta) >= 2:
            return float(t)
    return float("nan")


def vanishing_viscosity_study(sc: ViscousScenario, mu_list: Sequence[float],
                              return_fields: bool = False):
    """Forward velocity of ``gamma^mu`` after shock capture versus ``v*``."""
    B = branchset_at(sc.model, sc.phi0, sc.shock_t, np.array(sc.shock_x))
    v_star = admissible(B).v_star
    rows, fields, trajs = [], [], []
    for mu in mu_list:
        dx = sc.dx_for(mu)
        grid = GridSpec(sc.lo, sc.hi, dx, save_dt=min(0.01, sc.T / 100))
        fld = solve_viscous(sc.model, sc.phi0, mu, grid, sc.T)
        traj = integrate_particle(fld, sc.model, sc.y0)
        tc = capture_time(traj, sc.model, sc.phi0, 2 * dx)
        # measure from the shock point, or later if the particle arrives late
        tm = sc.shock_t if not np.isfinite(tc) else max(tc, sc.shock_t)
        if tm + sc.tau > sc.T + 1e-12:
            logger.warning("mu=%g: capture at %.3f leaves less than tau before T", mu, tc)
            tm = sc.T - sc.tau
        fwd = (traj.at(tm + sc.tau) - traj.at(tm)) / sc.tau
        chords = tuple(tuple((traj.at(tm + s) - traj.at(tm)) / s) for s in
                       (sc.tau / 4, sc.tau / 2, sc.tau))
        rows.append(StudyRow(mu, dx, tc, tm, tuple(fwd), tuple(v_star),
                             float(np.linalg.norm(fwd - v_star)), chords))
        fields.append(fld)
        trajs.append(traj)
        logger.info("mu=%g dx=%g capture=%.4f |v-v*|=%.3e", mu, dx, tc, rows[-1].distance)
    if return_fields:
        return rows, fields, trajs
    return rows


@dataclass(frozen=True)
class CoalescenceReport:
    met: bool
    t_meet: float | None
    delta_meet: float
    semiconcavity_C: float
    max_separation_after: float
    max_violation: float

    @property
    def status(self) -> str:
        return "met" if self.met else "never met"


def coalescence_check(field: ScalarField, H: HamiltonianModel, y_a, y_b,
                      delta_meet: float | None = None) -> CoalescenceReport:
    """Check that two trajectories stay together once they meet."""
    delta = 2 * field.dx if delta_meet is None else delta_meet
    ta = integrate_particle(field, H, y_a)
    tb = integrate_particle(field, H, y_b)
    sep = np.linalg.norm(ta.positions - tb.positions, axis=1)
    hit = np.flatnonzero(sep <= delta)
    if hit.size == 0:
        return CoalescenceReport(False, None, delta, float("nan"), float("nan"), 0.0)
    k = int(hit[0])
    t_meet = float(ta.times[k])
    C = 2.0 * max(0.0, field.second_difference_max(t_meet))
    after = sep[k:]
    bound = delta * np.exp(0.5 * C * (ta.times[k:] - t_meet))
    viol = float(np.max(np.maximum(after - bound, 0.0)))
    return CoalescenceReport(True, t_meet, delta, C, float(after.max()), viol)
