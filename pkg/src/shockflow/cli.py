"""Command-line entry point ``shockflow``.

Exit codes: 0 success, 1 failed acceptance checks, 2 malformed scenario,
3 numerical failure (the error class is printed).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import counterexample_payload, run_all
from .admissible import admissible, classify_restraining
from .convex_core import LagrangianView
from .errors import SchemaError, ShockflowError
from .lax_oleinik import field_values, grid_points
from .perturbation import (F_of_a, SecondOrderData, estimate_admissible_acceleration,
                           second_order_index_set)
from .scenario import ScenarioSpec, load_scenario
from .viscous import vanishing_viscosity_study
from .weak_noise import (BranchField, NoiseFlowSpec, occupation_probabilities, sde_flow,
                         self_consistent_velocities)

logger = logging.getLogger("shockflow")

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_NUMERIC = 0, 1, 2, 3


# -- serialization -----------------------------------------------------------

def _plain(obj):
    """Recursively turn numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_plain(payload), indent=2) + "\n"


def _g17(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path | None, header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_g17(v) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if path is not None:
        path.write_text(text)
    return text


def _meta(command: str, sha: str) -> dict:
    return {"command": command, "scenario_sha256": sha, "version": __version__}


def _emit(args, name: str, payload: dict) -> None:
    text = dumps(payload)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    sys.stdout.write(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise SchemaError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise SchemaError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _need_scenario(args) -> tuple[ScenarioSpec, str]:
    if not args.scenario:
        raise SchemaError("--scenario is required for this command")
    return load_scenario(args.scenario)


# -- subcommands ---------------------------------------------------------------

def cmd_admissible(args) -> int:
    spec, sha = _need_scenario(args)
    B = spec.branchset()
    res = admissible(B)
    payload = {"meta": _meta("admissible", sha), "scenario": spec.name}
    payload.update(res.to_dict(B.labels))
    payload["classification"] = classify_restraining(B, res)
    _emit(args, "admissible.json", payload)
    return EXIT_OK


def cmd_field(args) -> int:
    spec, sha = _need_scenario(args)
    H, phi0 = spec.model(), spec.phi0()
    if spec.field is None and args.grid is None:
        raise SchemaError("field needs a 'field' block or --grid")
    fg = spec.field
    counts = _ints(args.grid) if args.grid else fg.n
    t = args.t if args.t is not None else (fg.t if fg else 1.0)
    lo = fg.lo if fg else [-1.0] * H.dim
    hi = fg.hi if fg else [1.0] * H.dim
    if not (len(lo) == len(hi) == len(counts) == H.dim):
        raise SchemaError("grid dimensions do not match the Hamiltonian dimension")
    rows = field_values(H, phi0, t, grid_points(lo, hi, counts), spec.search())
    header = [f"x{k}" for k in range(H.dim)] + ["phi", "branch_count", "class"]
    table = [list(map(float, x)) + [float(v), int(n), c] for x, v, n, c in rows]
    if args.format == "json":
        _emit(args, "field.json", {"meta": _meta("field", sha), "t": t, "columns": header, "rows": table})
        return EXIT_OK
    path = None
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        path = Path(args.out) / "field.csv"
    text = write_csv(path, header, table)
    if path is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_viscous(args) -> int:
    spec, sha = _need_scenario(args)
    sc = spec.viscous_scenario()
    mus = _floats(args.mu) if args.mu else list(spec.viscous.mu)
    rows, fields, trajs = vanishing_viscosity_study(sc, mus, return_fields=True)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        d = sc.model.dim
        frows = []
        for mu, fld in zip(mus, fields):
            X = np.stack(np.meshgrid(*fld.axes, indexing="ij"), axis=-1).reshape(-1, d)
            final = fld.values[-1].reshape(-1)
            frows.extend([mu, float(fld.times[-1])] + list(map(float, x)) + [float(v)]
                         for x, v in zip(X, final))
        write_csv(out / "field.csv", ["mu", "t"] + [f"x{k}" for k in range(d)] + ["phi"], frows)
        trows = []
        for mu, tr in zip(mus, trajs):
            trows.extend([mu, float(t)] + list(map(float, p)) for t, p in zip(tr.times, tr.positions))
        write_csv(out / "trajectory.csv", ["mu", "t"] + [f"x{k}" for k in range(d)], trows)
    payload = {
        "meta": _meta("viscous", sha), "scenario": spec.name,
        "rows": [r.__dict__ for r in rows],
    }
    _emit(args, "study.json", payload)
    return EXIT_OK


def _noise_field(spec: ScenarioSpec) -> BranchField:
    if spec.branches is not None:
        return BranchField.from_branchset(spec.branchset())
    phi0 = spec.phi0()
    if not phi0.is_affine:
        raise SchemaError("weak-noise needs branch data or min-of-affine initial data")
    P, c = phi0.affine_pieces()
    return BranchField.from_pieces(spec.model(), P, c)


def cmd_weak_noise(args) -> int:
    spec, sha = _need_scenario(args)
    if spec.noise is None:
        raise SchemaError("scenario needs a 'noise' block for weak-noise")
    nz = spec.noise
    eps = args.eps if args.eps is not None else nz.eps
    paths = args.paths if args.paths is not None else nz.paths
    seed = args.seed if args.seed is not None else nz.seed
    fspec = NoiseFlowSpec(eps, nz.T, seed, nz.dt)
    fld = _noise_field(spec)
    rep = occupation_probabilities(fspec, fld, nz.y0, paths)
    payload = {"meta": _meta("weak-noise", sha), "scenario": spec.name, "eps": eps,
               "paths": paths, "seed": seed, "occupation": rep.to_dict()}
    if spec.branches is not None:
        B = spec.branchset()
        payload["self_consistent"] = [w.to_dict(B.labels) for w in self_consistent_velocities(B).witnesses]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        tr = sde_flow(fspec, None, fld, nz.y0)
        write_csv(out / "path.csv", ["t"] + [f"x{k}" for k in range(fld.dim)],
                  ([float(t)] + list(map(float, p)) for t, p in zip(tr.times, tr.positions)))
    _emit(args, "weak_noise.json", payload)
    return EXIT_OK


def cmd_counterexample(args) -> int:
    payload = counterexample_payload()
    builtin = json.dumps({"builtin": "tetrahedron"}, sort_keys=True).encode()
    payload = {"meta": _meta("counterexample", hashlib.sha256(builtin).hexdigest()), **payload}
    _emit(args, "counterexample.json", payload)
    return EXIT_OK


def cmd_perturb(args) -> int:
    spec, sha = _need_scenario(args)
    if spec.perturbation is None:
        raise SchemaError("scenario needs a 'perturbation' block for perturb")
    pz = spec.perturbation
    B = spec.branchset()
    W = np.asarray(pz.velocity_rates, dtype=float)
    if W.shape != B.momenta.shape:
        raise SchemaError("velocity_rates needs one vector per branch")
    V = np.asarray(B.velocities, dtype=float)
    view = LagrangianView(B.model)
    # momentum rates f_i = Hess L(v_i) w_i for branch velocities moving at rates w_i
    f = np.einsum("nij,nj->ni", view.hess(V), W)
    res = admissible(B)
    sd = SecondOrderData.build(B, f, res)
    est = estimate_admissible_acceleration(lambda t: V + (t - B.t) * W, view, B.t, pz.h_list)
    if pz.a_samples is not None:
        samples = np.asarray(pz.a_samples, dtype=float)
    else:
        samples = np.random.default_rng(pz.seed).normal(size=(pz.n_samples, B.dim))
    lab = B.labels
    payload = {
        "meta": _meta("perturb", sha), "scenario": spec.name,
        "F_samples": [{"a": a.tolist(), "F": F_of_a(sd, a)} for a in samples],
        "index_sets": {
            "first_order": [lab[i] for i in sd.first_order],
            "second_order": [lab[i] for i in second_order_index_set(sd, est.acceleration, 1e-6)],
        },
        "acceleration": est.acceleration.tolist(),
        "support_history": [[lab[i] for i in s] for s in est.supports],
        "estimate": est.to_dict(),
    }
    _emit(args, "perturb.json", payload)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_all()
    if args.format == "json":
        sys.stdout.write(dumps({"meta": _meta("verify", ""), "criteria": [r.__dict__ for r in results]}))
    else:
        for r in results:
            print(r.line())
        print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "admissible": cmd_admissible, "field": cmd_field, "viscous": cmd_viscous,
    "weak-noise": cmd_weak_noise, "counterexample": cmd_counterexample,
    "perturb": cmd_perturb, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shockflow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"shockflow {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--mu", metavar="LIST", help="comma-separated viscosities")
        p.add_argument("--eps", type=float)
        p.add_argument("--paths", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--grid", metavar="SPEC", help="point counts per axis, e.g. 101 or 41,41")
        p.add_argument("--t", type=float, help="evaluation time for field")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except ShockflowError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
