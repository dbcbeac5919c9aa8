"""Command line front end: ``eigopt {optimize,verify,eig} --config job.json``.

Every file written starts with a ``# config_sha256=<hash>`` line followed by
a column header.  Floats are written in shortest round-trip form, so two
runs of the same configuration give identical bytes.  Wall-clock times go
to ``timing.csv``, the only file expected to differ between runs.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly_eig import solve_smallest
from .errors import ConfigError, EigoptError
from .filter import build_filter
from .material import SCHEMES, MaterialScheme, interpolate
from .mesh import Mesh, add_point_mass, apply_boundary, build_grid, compute_orbits
from .optimize import BoundProblem, densities, run
from .spectrum import cluster
from .verify import StudySpec, run_study

DEFAULTS = {
    "problem": {"kind": "eigmax", "n": 1, "m": 10, "tol": 1e-8},
    "mesh": {"dim": 2, "cells": [20, 20], "lengths": [4.0, 4.0]},
    "supports": [{"at": "corners", "dofs": "all"}],
    "point_masses": [],
    "symmetry": "none",
    "material": {"scheme": "solid-void", "E": [1.0], "rho": [1.0], "nu": 0.3, "p1": 3.0,
                 "p2": 6.0, "p": 3.0, "rho_T": 0.1, "rho_L": 1e-4, "plane": "strain"},
    "filter_radius": 0.6,
    "volume": [0.5],
    "iterations": 500,
    "move": 0.05,
    "eigen_budget": {"buffer": 5, "max_extensions": 4},
    "seed": 0,
    "output": {"snapshot_every": 0},
    "eig": {"count": 10},
    "verify": {"warmup": 10, "aggregate_clusters": 8, "p": 10.0, "q": 10.0,
               "spaces": ["all", "symmetric"], "h": 1e-8, "tol": 1e-4, "mismatch_factor": 10.0},
}

# keys whose value is a free-form list of records, checked separately
_LIST_KEYS = {"supports": {"at", "dofs"}, "point_masses": {"position", "mass"}}


@dataclass(frozen=True)
class JobConfig:
    """Validated job description; ``tree`` is the fully resolved JSON tree."""

    tree: dict

    @property
    def digest(self) -> str:
        text = json.dumps(self.tree, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def __getitem__(self, key):
        return self.tree[key]


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key {where!r}")
        if key in _LIST_KEYS:
            if not isinstance(value, list):
                raise ConfigError(f"{where!r} must be a list")
            for i, rec in enumerate(value):
                if not isinstance(rec, dict):
                    raise ConfigError(f"{where}[{i}] must be an object")
                extra = set(rec) - _LIST_KEYS[key]
                if extra:
                    raise ConfigError(f"unknown key {where}[{i}].{sorted(extra)[0]!r}")
            out[key] = value
        elif isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = _coerce(defaults[key], value, where)
    return out


def _coerce(default, value, where):
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{where!r}: booleans are not accepted")
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where!r} must be a string")
        return value
    if isinstance(default, int) and not isinstance(default, bool) and not isinstance(default, float):
        if not isinstance(value, int):
            raise ConfigError(f"{where!r} must be an integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where!r} must be a number")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where!r} must be a list")
        return value
    return value


def _need(cond, where, message):
    if not cond:
        raise ConfigError(f"{where!r}: {message}")


def parse_config(text: str) -> JobConfig:
    """Parse and validate a JSON job description, filling defaults."""
    if not text or not text.strip():
        raise ConfigError("empty configuration")
    try:
        given = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    if not isinstance(given, dict):
        raise ConfigError("configuration must be a JSON object")
    tree = _merge(DEFAULTS, given, "")
    # material defaults depend on the scheme
    mat_given = given.get("material", {})
    nphase = SCHEMES.get(tree["material"]["scheme"])
    _need(nphase is not None, "material.scheme", f"must be one of {sorted(SCHEMES)}")
    for key in ("E", "rho"):
        if key not in mat_given:
            tree["material"][key] = [1.0] * nphase
    if "rho_T" not in mat_given and tree["mesh"]["dim"] == 3:
        tree["material"]["rho_T"] = 0.02
        tree["material"]["rho_L"] = min(tree["material"]["rho_L"], 0.02)
    if "volume" not in given and nphase > 1 and tree["material"]["scheme"] != "bi":
        tree["volume"] = [0.5, 0.25, 0.125][:nphase]
    _validate(tree)
    return JobConfig(tree)


def _validate(t):
    pr = t["problem"]
    _need(pr["kind"] in ("eigmax", "bandgap"), "problem.kind", "must be eigmax or bandgap")
    _need(pr["n"] >= 1, "problem.n", "must be >= 1")
    _need(pr["m"] >= 1, "problem.m", "must be >= 1")
    _need(pr["tol"] > 0, "problem.tol", "must be positive")
    me = t["mesh"]
    _need(me["dim"] in (2, 3), "mesh.dim", "must be 2 or 3")
    _need(len(me["cells"]) == me["dim"] and all(isinstance(c, int) and c >= 1 for c in me["cells"]),
          "mesh.cells", "needs one positive integer per dimension")
    _need(len(me["lengths"]) == me["dim"] and all(isinstance(v, (int, float)) and v > 0
                                                  for v in me["lengths"]),
          "mesh.lengths", "needs one positive length per dimension")
    _need(len(t["supports"]) > 0, "supports", "at least one support is required")
    for i, s in enumerate(t["supports"]):
        _need(isinstance(s.get("at"), str), f"supports[{i}].at", "must be a node predicate string")
    for i, pm in enumerate(t["point_masses"]):
        _need(isinstance(pm.get("position"), list) and len(pm["position"]) == me["dim"],
              f"point_masses[{i}].position", "needs one coordinate per dimension")
        _need(isinstance(pm.get("mass"), (int, float)) and pm["mass"] >= 0,
              f"point_masses[{i}].mass", "must be a non-negative number")
    _need(t["symmetry"] in ("none", "half", "quarter", "eighth"), "symmetry",
          "must be none, half, quarter or eighth")
    _need(t["filter_radius"] > 0, "filter_radius", "must be positive")
    vol = t["volume"]
    _need(all(isinstance(v, (int, float)) and 0 < v <= 1 for v in vol), "volume",
          "thresholds must lie in (0, 1]")
    _need(all(a >= b for a, b in zip(vol, vol[1:])), "volume",
          "thresholds must be nested (V1 >= V2 >= V3)")
    _need(t["iterations"] >= 0, "iterations", "must be >= 0")
    _need(0 < t["move"] <= 1, "move", "must lie in (0, 1]")
    _need(t["eigen_budget"]["buffer"] >= 1, "eigen_budget.buffer", "must be >= 1")
    _need(t["eigen_budget"]["max_extensions"] >= 0, "eigen_budget.max_extensions", "must be >= 0")
    _need(t["seed"] >= 0, "seed", "must be a non-negative integer")
    _need(t["output"]["snapshot_every"] >= 0, "output.snapshot_every", "must be >= 0")
    _need(t["eig"]["count"] >= 1, "eig.count", "must be >= 1")
    v = t["verify"]
    _need(v["warmup"] >= 0, "verify.warmup", "must be >= 0")
    _need(set(v["spaces"]) <= {"all", "symmetric"} and v["spaces"], "verify.spaces",
          "must be a non-empty subset of all, symmetric")
    _need(v["h"] > 0 and v["tol"] > 0, "verify", "h and tol must be positive")
    # let the owning modules check the rest by building the objects once
    try:
        build_problem(JobConfig(t))
    except ConfigError:
        raise
    except EigoptError as exc:
        raise ConfigError(str(exc)) from exc


def build_mesh(cfg: JobConfig) -> Mesh:
    me = cfg["mesh"]
    mesh = build_grid(me["dim"], me["cells"], me["lengths"])
    mesh = apply_boundary(mesh, cfg["supports"])
    for pm in cfg["point_masses"]:
        mesh = add_point_mass(mesh, pm["position"], pm["mass"])
    return mesh


def build_scheme(cfg: JobConfig) -> MaterialScheme:
    m = cfg["material"]
    return MaterialScheme(m["scheme"], E=tuple(m["E"]), rho=tuple(m["rho"]), nu=m["nu"],
                          p1=m["p1"], p2=m["p2"], p=m["p"], rho_T=m["rho_T"], rho_L=m["rho_L"],
                          plane=m["plane"])


def build_problem(cfg: JobConfig) -> BoundProblem:
    mesh = build_mesh(cfg)
    pr = cfg["problem"]
    eb = cfg["eigen_budget"]
    return BoundProblem(pr["kind"], pr["n"], mesh, build_scheme(cfg),
                        build_filter(mesh, cfg["filter_radius"]),
                        compute_orbits(mesh, cfg["symmetry"]), tuple(cfg["volume"]),
                        m=pr["m"], tol=pr["tol"], buffer=eb["buffer"],
                        max_extensions=eb["max_extensions"])


# ---------------------------------------------------------------- writers

def fmt(v) -> str:
    """Shortest round-trip text for a number; strings pass through."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class CsvWriter:
    def __init__(self, path: Path, digest: str, columns):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.fh.write(f"# config_sha256={digest}\n")
        self.fh.write(",".join(columns) + "\n")

    def row(self, values):
        self.fh.write(",".join("" if v is None else fmt(v) for v in values) + "\n")

    def close(self):
        self.fh.close()


def write_table(path: Path, digest: str, columns, rows):
    w = CsvWriter(path, digest, columns)
    for r in rows:
        w.row(r)
    w.close()


def _grid(mesh: Mesh, field) -> np.ndarray:
    """Element field as an array indexed [..., y, x] (x fastest)."""
    return np.asarray(field).reshape(tuple(reversed(mesh.cells)))


def write_density(out: Path, digest: str, mesh: Mesh, rho, it: int):
    """Filtered densities as CSV (one line per channel and grid row) and a
    binarized PGM (cutoff 0.5, channels stacked top to bottom)."""
    rho = np.atleast_2d(rho)
    nx = mesh.cells[0]
    cols = ["channel"] + (["z"] if mesh.dim == 3 else []) + ["y"] + [f"x{i}" for i in range(nx)]
    w = CsvWriter(out / f"density_{it}.csv", digest, cols)
    for c, ch in enumerate(rho):
        g = _grid(mesh, ch)
        if mesh.dim == 2:
            for j, row in enumerate(g):
                w.row([c, j, *row])
        else:
            for k, plane in enumerate(g):
                for j, row in enumerate(plane):
                    w.row([c, k, j, *row])
    w.close()
    images = []
    for ch in rho:
        g = _grid(mesh, ch)
        if mesh.dim == 3:
            g = g[g.shape[0] // 2]
        images.append(np.where(g[::-1] >= 0.5, 255, 0).astype(np.uint8))
    img = np.vstack(images)
    with open(out / f"density_{it}.pgm", "wb") as fh:
        fh.write(f"P5\n# config_sha256={digest}\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def _prepare_out(cfg: JobConfig, out: Path) -> str:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(cfg.tree, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return cfg.digest[:16]


# ---------------------------------------------------------------- commands

def cmd_optimize(cfg: JobConfig, out: Path) -> int:
    digest = _prepare_out(cfg, out)
    problem = build_problem(cfg)
    every = cfg["output"]["snapshot_every"]
    iters = cfg["iterations"]
    records = []

    def snapshot(record, state):
        records.append(record)
        it = record.iteration
        if it in (0, iters) or (every and it % every == 0):
            write_density(out, digest, problem.mesh, state.rho, it)

    result = run(problem, iters, move=cfg["move"], on_iteration=snapshot)
    nb = problem.n_bounds
    ncon = problem.n_constraints
    write_table(out / "history.csv", digest,
                ["iter", "f0"] + [f"beta{k + 1}" for k in range(nb)] + [f"f{k + 1}" for k in range(ncon)],
                ([r.iteration, r.f0, *r.beta, *r.constraints] for r in records))
    width = max((r.omegas.size for r in records), default=0)
    write_table(out / "eigs.csv", digest, ["iter"] + [f"omega{k + 1}" for k in range(width)],
                ([r.iteration, *r.omegas, *([None] * (width - r.omegas.size))] for r in records))
    nc = max((r.cluster_sizes.size for r in records), default=0)
    write_table(out / "clusters.csv", digest, ["iter"] + [f"size{k + 1}" for k in range(nc)],
                ([r.iteration, *r.cluster_sizes] for r in records))
    if problem.n_volume > 1:
        write_table(out / "fractions.csv", digest,
                    ["iter"] + [f"phase{k + 1}" for k in range(problem.n_volume)],
                    ([r.iteration, *r.fractions] for r in records))
    write_table(out / "timing.csv", digest, ["iter", "wall_ms"],
                ([r.iteration, 1000.0 * r.wall_time] for r in records))
    if result.error is not None:
        print(f"error: optimization stopped at iteration {len(records)}: {result.error}",
              file=sys.stderr)
        return 1
    return 0


def cmd_eig(cfg: JobConfig, out: Path) -> int:
    """Eigenpairs of the uniform initial design."""
    digest = _prepare_out(cfg, out)
    problem = build_problem(cfg)
    _, rho = densities(problem, problem.initial_design())
    mp = interpolate(problem.scheme, list(rho))
    K, M = problem.assembler(mp.E, mp.rho)
    eig = solve_smallest(K, M, cfg["eig"]["count"])
    cs = cluster(eig.values, cfg["problem"]["tol"])
    owner = np.concatenate([np.full(m.size, q + 1) for q, m in enumerate(cs.members)])
    write_table(out / "eigs.csv", digest, ["index", "lambda", "omega", "cluster"],
                ([k + 1, lam, w, c] for k, (lam, w, c) in enumerate(zip(eig.values, eig.omegas, owner))))
    write_table(out / "clusters.csv", digest, ["cluster", "size", "mean", "complete"],
                ([q + 1, s, mu, int(c)] for q, (s, mu, c) in enumerate(zip(cs.sizes, cs.means, cs.complete))))
    return 0


def cmd_verify(cfg: JobConfig, out: Path) -> int:
    digest = _prepare_out(cfg, out)
    problem = build_problem(cfg)
    if problem.kind != "eigmax" or problem.n != 1:
        raise ConfigError("verify runs on a first-cluster maximization (problem.kind=eigmax, n=1)")
    v = cfg["verify"]
    spec = StudySpec(symmetry=cfg["symmetry"], warmup=v["warmup"], m=cfg["problem"]["m"],
                     aggregate_clusters=v["aggregate_clusters"], p=v["p"], q=v["q"],
                     spaces=tuple(v["spaces"]), h=v["h"], tol=v["tol"],
                     mismatch_factor=v["mismatch_factor"])
    res = run_study(spec, problem)
    write_table(out / "sensitivity_summary.csv", digest,
                ["quantity", "space", "max_rel_error", "verdict"],
                ([r.name, r.space, r.max_error, r.verdict] for r in res.reports))
    write_table(out / "sensitivity_detail.csv", digest,
                ["quantity", "space", "variable", "analytic", "numeric", "rel_error"],
                ([r.name, r.space, i, a, b, e] for r in res.reports
                 for i, (a, b, e) in enumerate(zip(r.analytic, r.numeric, r.rel_error))))
    write_table(out / "clusters.csv", digest, ["cluster", "size", "mean"],
                ([q + 1, s, mu] for q, (s, mu) in enumerate(zip(res.state.clusters.sizes,
                                                              res.state.clusters.means))))
    return 0


COMMANDS = {"optimize": cmd_optimize, "verify": cmd_verify, "eig": cmd_eig}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="eigopt", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON job file")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, default=None,
                    help="seed recorded in the resolved config; overrides the file value")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("seed must fit in an unsigned 64-bit integer")
            tree = parse_config(text).tree if text.strip() else None
            if tree is not None:
                tree["seed"] = args.seed
                text = json.dumps(tree)
        cfg = parse_config(text)
        return COMMANDS[args.command](cfg, Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EigoptError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
