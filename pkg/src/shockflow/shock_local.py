"""Local shock data: branch sets, relevant indices and hull certificates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .convex_core import HamiltonianModel
from .errors import SchemaError

MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Branch:
    p: tuple[float, ...]
    H: float
    label: int | None = None


@dataclass(frozen=True, eq=False)
class BranchSet:
    """Momenta ``p_i`` and Hamiltonian values ``H_i`` of the smooth branches
    meeting at ``(t, x)``.

    ``velocities`` may be given explicitly (e.g. for data whose Hamiltonian
    is only known through its Legendre image at the branch momenta);
    otherwise they are ``grad_p H(p_i)`` from the attached model.
    Duplicate momenta are merged, keeping the smaller ``H``.
    """

    momenta: np.ndarray
    H_values: np.ndarray
    t: float = 0.0
    x: np.ndarray = field(default_factory=lambda: np.zeros(1))
    model: HamiltonianModel | None = None
    labels: tuple[int, ...] = ()
    explicit_velocities: np.ndarray | None = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.momenta, dtype=float))
        Hv = np.atleast_1d(np.asarray(self.H_values, dtype=float))
        if P.shape[0] < 1:
            raise ValueError("a branch set needs at least one branch")
        if Hv.shape != (P.shape[0],):
            raise ValueError("one H value per branch is required")
        labels = tuple(self.labels) or tuple(range(1, P.shape[0] + 1))
        V = None if self.explicit_velocities is None else np.atleast_2d(
            np.asarray(self.explicit_velocities, dtype=float))
        keep: list[int] = []
        for i in range(P.shape[0]):
            dup = next((k for k in keep if np.max(np.abs(P[k] - P[i])) <= MERGE_TOL), None)
            if dup is None:
                keep.append(i)
            elif Hv[i] < Hv[dup]:
                keep[keep.index(dup)] = i
        keep.sort()
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if x.shape == (1,) and P.shape[1] != 1 and not np.any(x):
            x = np.zeros(P.shape[1])
        object.__setattr__(self, "momenta", P[keep])
        object.__setattr__(self, "H_values", Hv[keep])
        object.__setattr__(self, "labels", tuple(labels[i] for i in keep))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))
        if V is not None:
            object.__setattr__(self, "explicit_velocities", V[keep])
        if self.model is not None and self.model.dim != P.shape[1]:
            raise ValueError("model dimension does not match branch momenta")

    @classmethod
    def from_model(cls, model: HamiltonianModel, momenta, t: float = 0.0, x=None) -> "BranchSet":
        P = np.atleast_2d(np.asarray(momenta, dtype=float))
        xx = np.zeros(P.shape[1]) if x is None else x
        Hv = np.asarray(model.value(P, t, xx), dtype=float)
        return cls(P, Hv, t=t, x=xx, model=model)

    @classmethod
    def from_dict(cls, data: dict, model: HamiltonianModel | None = None) -> "BranchSet":
        try:
            items = data["branches"]
            P = [b["p"] for b in items]
            if model is not None:
                Hv = [b["H"] if "H" in b else float(model.value(b["p"])) for b in items]
            else:
                Hv = [b["H"] for b in items]
            labels = tuple(b.get("label", i + 1) for i, b in enumerate(items))
            V = [b["v"] for b in items] if all("v" in b for b in items) else None
            P_arr = np.atleast_2d(np.asarray(P, dtype=float))
            x = data.get("x", [0.0] * P_arr.shape[1])
            return cls(P_arr, Hv, t=data.get("t", 0.0), x=x, model=model,
                       labels=labels, explicit_velocities=V)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad branch set: {exc}") from exc

    def to_dict(self) -> dict:
        out = {
            "t": self.t,
            "x": self.x.tolist(),
            "branches": [
                {"p": p.tolist(), "H": float(h), "label": lab}
                for p, h, lab in zip(self.momenta, self.H_values, self.labels)
            ],
        }
        if self.explicit_velocities is not None:
            for b, v in zip(out["branches"], self.explicit_velocities):
                b["v"] = v.tolist()
        return out

    def __len__(self) -> int:
        return self.momenta.shape[0]

    @property
    def dim(self) -> int:
        return self.momenta.shape[1]

    @property
    def branches(self) -> list[Branch]:
        return [Branch(tuple(p), float(h), lab)
                for p, h, lab in zip(self.momenta, self.H_values, self.labels)]

    @property
    def velocities(self) -> np.ndarray:
        if self.explicit_velocities is not None:
            return self.explicit_velocities
        if self.model is None:
            raise ValueError("branch velocities need a model or explicit velocities")
        return self.model.grad(self.momenta, self.t, self.x)

    def linear_values(self, v) -> np.ndarray:
        """``-H_i + p_i.v`` for every branch (the first-order branch increments)."""
        return -self.H_values + self.momenta @ np.asarray(v, dtype=float)

    def consistency_error(self) -> float:
        """Largest ``|H_i - H(p_i)|`` against the attached model."""
        if self.model is None:
            return 0.0
        return float(np.max(np.abs(self.H_values - self.model.value(self.momenta, self.t, self.x))))

    def subset(self, idx: Sequence[int]) -> "BranchSet":
        idx = list(idx)
        V = None if self.explicit_velocities is None else self.explicit_velocities[idx]
        return BranchSet(self.momenta[idx], self.H_values[idx], self.t, self.x, self.model,
                         tuple(self.labels[i] for i in idx), V)


def argmin_within(values: np.ndarray, tol: float) -> tuple[int, ...]:
    """Indices whose value is within ``tol * (1 + max|values|)`` of the minimum."""
    values = np.asarray(values, dtype=float)
    thresh = tol * (1.0 + float(np.max(np.abs(values))))
    return tuple(int(i) for i in np.flatnonzero(values <= values.min() + thresh))


def relevant_indices(B: BranchSet, v, tol: float = 1e-9) -> tuple[int, ...]:
    """Zero-based indices of branches attaining ``min_i(-H_i + p_i.v)``."""
    return argmin_within(B.linear_values(v), tol)


@dataclass(frozen=True)
class HullCertificate:
    inside: bool
    weights: np.ndarray | None
    separator: np.ndarray | None
    residual: float

    def __iter__(self):
        # unpacks as (inside, weights-or-separator)
        yield self.inside
        yield self.weights if self.inside else self.separator


def hull_membership(q, points, tol: float = 1e-9) -> HullCertificate:
    """Decide whether ``q`` lies in ``conv(points)``.

    The closest hull point is found with Lawson-Hanson NNLS on the simplex
    (sum-to-one enforced by a heavily weighted extra row).  When ``q`` is
    outside, ``h = c - q`` with ``c`` the closest point satisfies
    ``(q - p_j).h < 0`` for every ``j``.
    """
    q = np.asarray(q, dtype=float).ravel()
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n = P.shape[0]
    scale = max(1.0, float(np.max(np.abs(P))), float(np.max(np.abs(q))))
    weight = 1e6 * scale
    M = np.vstack([P.T, weight * np.ones((1, n))])
    rhs = np.concatenate([q, [weight]])
    lam, _ = nnls(M, rhs, maxiter=50 * (n + 5))
    lam = lam / lam.sum()
    closest = lam @ P
    resid = float(np.linalg.norm(closest - q))
    if resid <= tol:
        return HullCertificate(True, lam, None, resid)
    h = closest - q
    if np.all((q - P) @ h < 0):
        return HullCertificate(False, None, h, resid)
    # separation lost to rounding: q sits on the hull boundary up to noise
    return HullCertificate(True, lam, None, resid)


@dataclass(frozen=True, eq=False)
class Superdifferential:
    """Polytope spanned by the spacetime supergradients ``(-H_i, p_i)``."""

    vertices: np.ndarray
    redundant: np.ndarray
    momentum_redundant: np.ndarray

    @property
    def dimension(self) -> int:
        """Affine dimension of the polytope."""
        if len(self.vertices) == 1:
            return 0
        diffs = self.vertices[1:] - self.vertices[0]
        return int(np.linalg.matrix_rank(diffs, tol=1e-10))


def superdifferential_of(B: BranchSet) -> Superdifferential:
    verts = np.column_stack([-B.H_values, B.momenta])
    n = len(B)

    def flags(pts):
        out = np.zeros(n, dtype=bool)
        if n < 2:
            return out
        for j in range(n):
            others = np.delete(pts, j, axis=0)
            out[j] = hull_membership(pts[j], others, tol=1e-10).inside
        return out

    return Superdifferential(verts, flags(verts), flags(B.momenta))
