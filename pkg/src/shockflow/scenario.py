"""Declarative experiment descriptions read from JSON."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator
from pydantic import ValidationError as PydanticValidationError

from .convex_core import HamiltonianModel
from .errors import SchemaError
from .lax_oleinik import InitialData, SearchSpec, branchset_at
from .shock_local import BranchSet
from .viscous import ViscousScenario


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Probe(_Strict):
    t: PositiveFloat
    x: list[float]


class FieldGrid(_Strict):
    lo: list[float]
    hi: list[float]
    n: list[PositiveInt]
    t: PositiveFloat = 1.0
    radius: PositiveFloat | None = None


class ViscousSpec(_Strict):
    mu: list[PositiveFloat] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    y0: list[float]
    shock_t: PositiveFloat
    shock_x: list[float]
    lo: list[float]
    hi: list[float]
    T: PositiveFloat
    tau: PositiveFloat
    dx: PositiveFloat | None = None


class NoiseSpec(_Strict):
    eps: PositiveFloat
    paths: PositiveInt = 10000
    seed: int
    T: PositiveFloat = 1.0
    y0: list[float]
    dt: PositiveFloat | None = None


class PerturbSpec(_Strict):
    velocity_rates: list[list[float]]
    h_list: list[PositiveFloat] = Field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])
    a_samples: list[list[float]] | None = None
    n_samples: PositiveInt = 64
    seed: int = 0


class ScenarioSpec(_Strict):
    name: str
    dim: PositiveInt | None = None
    hamiltonian: dict[str, Any]
    initial_data: dict[str, Any] | None = None
    branches: dict[str, Any] | None = None
    probe: Probe | None = None
    field: FieldGrid | None = None
    viscous: ViscousSpec | None = None
    noise: NoiseSpec | None = None
    perturbation: PerturbSpec | None = None
    tolerances: dict[str, float] = Field(default_factory=dict)

    @field_validator("hamiltonian")
    @classmethod
    def _known_kind(cls, v):
        HamiltonianModel.from_dict(v, v.get("dim", 1) if isinstance(v, dict) else None)
        return v

    @field_validator("initial_data")
    @classmethod
    def _known_data(cls, v):
        if v is not None:
            InitialData.from_dict(v)
        return v

    # -- builders -----------------------------------------------------
    def inferred_dim(self) -> int:
        if self.dim is not None:
            return self.dim
        h = self.hamiltonian
        if "A" in h:
            return len(h["A"])
        if "dim" in h:
            return int(h["dim"])
        if self.branches is not None:
            return len(self.branches["branches"][0]["p"])
        if self.initial_data is not None:
            return InitialData.from_dict(self.initial_data).dim
        return 1

    def model(self) -> HamiltonianModel:
        return HamiltonianModel.from_dict(self.hamiltonian, self.inferred_dim())

    def phi0(self) -> InitialData:
        if self.initial_data is None:
            raise SchemaError("scenario needs an 'initial_data' block for this command")
        return InitialData.from_dict(self.initial_data)

    def branchset(self) -> BranchSet:
        H = self.model()
        if self.branches is not None:
            return BranchSet.from_dict(self.branches, H)
        if self.probe is not None and self.initial_data is not None:
            return branchset_at(H, self.phi0(), self.probe.t, np.asarray(self.probe.x, dtype=float))
        raise SchemaError("scenario needs 'branches' or 'probe' with 'initial_data'")

    def viscous_scenario(self) -> ViscousScenario:
        if self.viscous is None:
            raise SchemaError("scenario needs a 'viscous' block for this command")
        v = self.viscous
        return ViscousScenario(self.model(), self.phi0(), tuple(v.y0), v.shock_t, tuple(v.shock_x),
                               tuple(v.lo), tuple(v.hi), v.T, v.tau, v.dx, self.name)

    def search(self) -> SearchSpec | None:
        if self.field is not None and self.field.radius is not None:
            return SearchSpec(radius=self.field.radius)
        return None


def _json_error(exc: json.JSONDecodeError, source: str) -> SchemaError:
    return SchemaError(f"{source}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")


def parse_scenario(raw: bytes, source: str = "<scenario>") -> ScenarioSpec:
    try:
        data = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise _json_error(exc, source) from exc
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{source}: not UTF-8 text") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{source}: top-level JSON value must be an object")
    try:
        return ScenarioSpec.model_validate(data)
    except PydanticValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise SchemaError(f"{source}: {where}: {first['msg']}") from exc


def load_scenario(path: str | Path) -> tuple[ScenarioSpec, str]:
    """Parse a scenario file; returns the parsed scenario and the SHA-256 of its bytes."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise SchemaError(f"cannot read scenario {p}: {exc.strerror}") from exc
    return parse_scenario(raw, str(p)), hashlib.sha256(raw).hexdigest()
