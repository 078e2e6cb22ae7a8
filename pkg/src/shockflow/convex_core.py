"""Hamiltonians, their Legendre duals and the associated divergences.

A :class:`HamiltonianModel` is a smooth Hamiltonian ``H(t, x, p)`` that is
strictly convex in the momentum ``p``.  The catalogued kinds are autonomous
and have closed-form Legendre transforms; ``custom`` models wrap user
callbacks and are conjugated numerically.

All array-valued methods accept a trailing axis of length ``dim`` and
broadcast over any leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import DomainError, NonConvergence, SchemaError

KINDS = ("quadratic", "relativistic", "power", "quad_quartic", "custom")

# |v| >= 1 - REL_EDGE is treated as outside dom L for the relativistic kind
REL_EDGE = 1e-12
CONJ_TOL = 1e-10

Callback = Callable[[float, np.ndarray, np.ndarray], Any]


def _as_vec(a, dim: int) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {arr.shape}")
    return arr


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=-1))


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """Strictly convex Hamiltonian ``H(t, x, p)``.

    Use the classmethod constructors (:meth:`quadratic`, :meth:`power`, ...)
    rather than calling the dataclass directly.
    """

    kind: str
    dim: int
    A: np.ndarray | None = None
    alpha: float | None = None
    c: float | None = None
    H_fn: Callback | None = field(default=None, repr=False)
    grad_fn: Callback | None = field(default=None, repr=False)
    hess_fn: Callback | None = field(default=None, repr=False)
    dH_dt_fn: Callback | None = field(default=None, repr=False)
    grad_x_fn: Callback | None = field(default=None, repr=False)
    time_dependent: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.kind != "custom" and self.time_dependent:
            raise ValueError("catalogued kinds are autonomous; use kind='custom'")

    # -- constructors -------------------------------------------------
    @classmethod
    def quadratic(cls, A=None, dim: int | None = None) -> "HamiltonianModel":
        if A is None:
            A = np.eye(dim or 1)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, atol=1e-14):
            raise ValueError("A must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("A must be positive definite")
        A.setflags(write=False)
        return cls("quadratic", A.shape[0], A=A)

    @classmethod
    def relativistic(cls, dim: int = 1) -> "HamiltonianModel":
        return cls("relativistic", dim)

    @classmethod
    def power(cls, alpha: float, dim: int = 1) -> "HamiltonianModel":
        if not alpha > 1:
            raise ValueError("power-law exponent must exceed 1")
        return cls("power", dim, alpha=float(alpha))

    @classmethod
    def quad_quartic(cls, c: float = 1.0, dim: int = 1) -> "HamiltonianModel":
        if c < 0:
            raise ValueError("quartic coefficient must be non-negative")
        return cls("quad_quartic", dim, c=float(c))

    @classmethod
    def custom(
        cls,
        dim: int,
        H: Callback,
        grad: Callback,
        hess: Callback,
        *,
        dH_dt: Callback | None = None,
        grad_x: Callback | None = None,
        time_dependent: bool = False,
    ) -> "HamiltonianModel":
        """Wrap callbacks ``f(t, x, p)`` returning H, its p-gradient and p-Hessian."""
        return cls(
            "custom", dim, H_fn=H, grad_fn=grad, hess_fn=hess,
            dH_dt_fn=dH_dt, grad_x_fn=grad_x, time_dependent=time_dependent,
        )

    @classmethod
    def from_dict(cls, data: dict, dim: int | None = None) -> "HamiltonianModel":
        """Build a catalogued model from its JSON fragment."""
        if not isinstance(data, dict) or "kind" not in data:
            raise SchemaError("Hamiltonian fragment needs a 'kind' field")
        kind = data["kind"]
        d = data.get("dim", dim)
        try:
            if kind == "quadratic":
                if "A" in data:
                    return cls.quadratic(data["A"])
                return cls.quadratic(dim=d or 1)
            if kind == "relativistic":
                return cls.relativistic(d or 1)
            if kind == "power":
                return cls.power(data["alpha"], d or 1)
            if kind == "quad_quartic":
                return cls.quad_quartic(data.get("c", 1.0), d or 1)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad {kind!r} Hamiltonian: {exc}") from exc
        raise SchemaError(f"unknown or non-serializable Hamiltonian kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "quadratic":
            return {"kind": "quadratic", "A": self.A.tolist()}
        if self.kind == "power":
            return {"kind": "power", "alpha": self.alpha, "dim": self.dim}
        if self.kind == "quad_quartic":
            return {"kind": "quad_quartic", "c": self.c, "dim": self.dim}
        if self.kind == "relativistic":
            return {"kind": "relativistic", "dim": self.dim}
        return {"kind": "custom", "dim": self.dim}

    # -- evaluation ---------------------------------------------------
    def _batched(self, fn: Callback, p: np.ndarray, t: float, x, shape_tail: tuple):
        flat = p.reshape(-1, self.dim)
        xx = np.zeros(self.dim) if x is None else np.asarray(x, dtype=float)
        out = np.array([np.asarray(fn(t, xx, q), dtype=float) for q in flat])
        return out.reshape(p.shape[:-1] + shape_tail)

    def value(self, p, t: float = 0.0, x=None):
        p = _as_vec(p, self.dim)
        if self.kind == "quadratic":
            return 0.5 * np.einsum("...i,ij,...j->...", p, self.A, p)
        r2 = np.sum(p * p, axis=-1)
        if self.kind == "relativistic":
            return np.sqrt(1.0 + r2)
        if self.kind == "power":
            return r2 ** (0.5 * self.alpha) / self.alpha
        if self.kind == "quad_quartic":
            return 0.5 * r2 + 0.25 * self.c * r2 * r2
        return self._batched(self.H_fn, p, t, x, ())

    def grad(self, p, t: float = 0.0, x=None) -> np.ndarray:
        """Velocity ``v = grad_p H``."""
        p = _as_vec(p, self.dim)
        if self.kind == "quadratic":
            return p @ self.A.T
        r2 = np.sum(p * p, axis=-1, keepdims=True)
        if self.kind == "relativistic":
            return p / np.sqrt(1.0 + r2)
        if self.kind == "power":
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(r2 > 0, r2 ** (0.5 * self.alpha - 1.0), 0.0)
            return scale * p
        if self.kind == "quad_quartic":
            return (1.0 + self.c * r2) * p
        return self._batched(self.grad_fn, p, t, x, (self.dim,))

    def hess(self, p, t: float = 0.0, x=None) -> np.ndarray:
        p = _as_vec(p, self.dim)
        eye = np.eye(self.dim)
        if self.kind == "quadratic":
            return np.broadcast_to(self.A, p.shape[:-1] + (self.dim, self.dim)).copy()
        r2 = np.sum(p * p, axis=-1)[..., None, None]
        outer = p[..., :, None] * p[..., None, :]
        if self.kind == "relativistic":
            return (eye * (1.0 + r2) - outer) / (1.0 + r2) ** 1.5
        if self.kind == "power":
            a = self.alpha
            with np.errstate(divide="ignore", invalid="ignore"):
                base = np.where(r2 > 0, r2 ** (0.5 * a - 1.0), 0.0 if a > 2 else (1.0 if a == 2 else np.inf))
                rank1 = np.where(r2 > 0, (a - 2.0) * r2 ** (0.5 * a - 2.0), 0.0)
            return base * eye + rank1 * outer
        if self.kind == "quad_quartic":
            return (1.0 + self.c * r2) * eye + 2.0 * self.c * outer
        return self._batched(self.hess_fn, p, t, x, (self.dim, self.dim))

    def max_speed(self, p_bound: float) -> float:
        """Upper bound of ``|grad_p H|`` over ``|p| <= p_bound``."""
        if self.kind == "quadratic":
            return float(np.linalg.norm(self.A, 2) * p_bound)
        if self.kind == "relativistic":
            return float(p_bound / np.sqrt(1.0 + p_bound**2))
        if self.kind == "power":
            return float(p_bound ** (self.alpha - 1.0))
        if self.kind == "quad_quartic":
            return float((1.0 + self.c * p_bound**2) * p_bound)
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(256, self.dim))
        dirs /= _norm(dirs)[:, None]
        pts = np.concatenate([dirs * p_bound, dirs * 0.5 * p_bound])
        return float(np.max(_norm(self.grad(pts))))


@dataclass(frozen=True, eq=False)
class LagrangianView:
    """Legendre dual ``L(t, x, v) = max_p [p.v - H(t, x, p)]`` of a model.

    Closed forms are used for catalogued kinds unless ``iterative`` is set,
    in which case every kind goes through the numerical conjugation.
    """

    model: HamiltonianModel
    iterative: bool = False

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def closed_form(self) -> bool:
        return self.model.kind != "custom" and not self.iterative

    def check_domain(self, v) -> np.ndarray:
        v = _as_vec(v, self.dim)
        if self.model.kind == "relativistic" and np.any(_norm(v) >= 1.0 - REL_EDGE):
            raise DomainError("relativistic Lagrangian is finite only for |v| < 1")
        return v

    def _quartic_radius(self, s: np.ndarray) -> np.ndarray:
        c = self.model.c
        if c == 0:
            return s.copy()
        # real root of c r^3 + r - s = 0 (Cardano), polished by Newton
        P, Q = 1.0 / c, -s / c
        disc = np.sqrt(0.25 * Q * Q + P**3 / 27.0)
        r = np.cbrt(-0.5 * Q + disc) + np.cbrt(-0.5 * Q - disc)
        for _ in range(3):
            r = r - (c * r**3 + r - s) / (3.0 * c * r * r + 1.0)
        return r

    def grad(self, v, t: float = 0.0, x=None) -> np.ndarray:
        """Momentum ``p = grad_v L`` (inverse of :meth:`HamiltonianModel.grad`)."""
        v = self.check_domain(v)
        m = self.model
        if self.closed_form:
            if m.kind == "quadratic":
                return np.linalg.solve(m.A, v.reshape(-1, m.dim).T).T.reshape(v.shape)
            s = _norm(v)[..., None]
            if m.kind == "relativistic":
                return v / np.sqrt(1.0 - s * s)
            if m.kind == "power":
                beta = m.alpha / (m.alpha - 1.0)
                with np.errstate(divide="ignore", invalid="ignore"):
                    scale = np.where(s > 0, s ** (beta - 2.0), 0.0)
                return scale * v
            r = self._quartic_radius(s)
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(s > 0, r / s, 1.0)
            return scale * v
        flat = v.reshape(-1, m.dim)
        out = np.array([self._conjugate(q, t, x) for q in flat])
        return out.reshape(v.shape)

    def value(self, v, t: float = 0.0, x=None):
        v = self.check_domain(v)
        m = self.model
        if self.closed_form:
            if m.kind == "quadratic":
                w = self.grad(v)
                return 0.5 * np.sum(v * w, axis=-1)
            s2 = np.sum(v * v, axis=-1)
            if m.kind == "relativistic":
                return -np.sqrt(1.0 - s2)
            if m.kind == "power":
                beta = m.alpha / (m.alpha - 1.0)
                return s2 ** (0.5 * beta) / beta
            s = np.sqrt(s2)
            r = self._quartic_radius(s)
            return r * s - (0.5 * r * r + 0.25 * m.c * r**4)
        p = self.grad(v, t, x)
        return np.sum(p * v, axis=-1) - m.value(p, t, x)

    def hess(self, v, t: float = 0.0, x=None) -> np.ndarray:
        v = self.check_domain(v)
        m = self.model
        if self.closed_form and m.kind == "quadratic":
            inv = np.linalg.inv(m.A)
            return np.broadcast_to(inv, v.shape[:-1] + (m.dim, m.dim)).copy()
        if self.closed_form and m.kind == "relativistic":
            s2 = np.sum(v * v, axis=-1)[..., None, None]
            outer = v[..., :, None] * v[..., None, :]
            sq = np.sqrt(1.0 - s2)
            return np.eye(m.dim) / sq + outer / sq**3
        if self.closed_form and m.kind == "power":
            beta = m.alpha / (m.alpha - 1.0)
            s2 = np.sum(v * v, axis=-1)[..., None, None]
            outer = v[..., :, None] * v[..., None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                base = np.where(s2 > 0, s2 ** (0.5 * beta - 1.0), np.inf if beta < 2 else 0.0)
                rank1 = np.where(s2 > 0, (beta - 2.0) * s2 ** (0.5 * beta - 2.0), 0.0)
            return base * np.eye(m.dim) + rank1 * outer
        return np.linalg.inv(m.hess(self.grad(v, t, x), t, x))

    # -- numerical conjugation ----------------------------------------
    def _conjugate(self, v: np.ndarray, t: float, x) -> np.ndarray:
        """Solve ``grad_p H(p) = v`` by damped Newton, falling back to bisection."""
        m = self.model
        tol = CONJ_TOL * max(1.0, float(np.linalg.norm(v)))

        def psi(q):
            return float(m.value(q, t, x)) - float(q @ v)

        p = np.zeros(m.dim)
        for _ in range(200):
            g = m.grad(p, t, x) - v
            if np.linalg.norm(g) <= tol:
                return p
            try:
                step = np.linalg.solve(m.hess(p, t, x), g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)):
                break
            f0, lam = psi(p), 1.0
            while lam > 1e-12 and not psi(p - lam * step) <= f0 - 1e-4 * lam * float(g @ step):
                lam *= 0.5
            if lam <= 1e-12:
                # no sufficient decrease left; accept the full step once if it helps
                if np.linalg.norm(m.grad(p - step, t, x) - v) < np.linalg.norm(g):
                    p = p - step
                    continue
                break
            p = p - lam * step
        return self._bisect_coordinates(v, t, x, p, tol)

    def _bisect_coordinates(self, v, t, x, p, tol) -> np.ndarray:
        m = self.model
        p = np.array(p, dtype=float)
        for _sweep in range(500):
            for k in range(m.dim):
                def gk(s, k=k):
                    q = p.copy()
                    q[k] = s
                    return float(m.grad(q, t, x)[k] - v[k])

                lo, hi, width = p[k] - 1.0, p[k] + 1.0, 1.0
                while gk(lo) > 0:
                    width *= 2.0
                    lo = p[k] - width
                    if width > 1e12:
                        raise NonConvergence("conjugation bracket diverged")
                width = 1.0
                while gk(hi) < 0:
                    width *= 2.0
                    hi = p[k] + width
                    if width > 1e12:
                        raise NonConvergence("conjugation bracket diverged")
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if gk(mid) < 0:
                        lo = mid
                    else:
                        hi = mid
                    if hi - lo < 1e-15 * max(1.0, abs(mid)):
                        break
                p[k] = 0.5 * (lo + hi)
            if np.linalg.norm(m.grad(p, t, x) - v) <= tol:
                return p
        raise NonConvergence(f"Legendre conjugation stalled at v={v}")


def as_lagrangian(obj) -> LagrangianView:
    return obj if isinstance(obj, LagrangianView) else LagrangianView(obj)


def lagrangian_value(L, t: float, x, v) -> float:
    """``L(t, x, v) = sup_p [p.v - H(t, x, p)]``."""
    return float(as_lagrangian(L).value(v, t, x))


def velocity_of_momentum(H: HamiltonianModel, t: float, x, p) -> np.ndarray:
    return H.grad(p, t, x)


def momentum_of_velocity(L, t: float, x, v) -> np.ndarray:
    return as_lagrangian(L).grad(v, t, x)


def bregman_divergence(L, t: float, x, v, w) -> float:
    """``D_L(v | w) = L(v) - L(w) - grad L(w).(v - w)``."""
    L = as_lagrangian(L)
    v = L.check_domain(v)
    w = L.check_domain(w)
    return float(L.value(v, t, x) - L.value(w, t, x) - L.grad(w, t, x) @ (v - w))


def young_gap(L, t: float, x, v, p) -> float:
    """Fenchel-Young gap ``L(v) + H(p) - v.p``; zero exactly on Legendre pairs."""
    L = as_lagrangian(L)
    v = L.check_domain(v)
    p = _as_vec(p, L.dim)
    return float(L.value(v, t, x) + L.model.value(p, t, x) - v @ p)
