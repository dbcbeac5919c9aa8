"""Central-difference gradient checks for eigenvalue quantities.

Perturbed designs are re-solved from scratch, so the numeric gradient never
touches the analytic sensitivity code.  Eigenvalues at a perturbed design
are refined in extended precision: the double-precision eigenvectors span
the right subspaces, and a Rayleigh-Ritz step over each cluster's vectors
with ``np.longdouble`` element energies removes the solver's ~1e-10
relative noise, which a 1e-8 step would otherwise amplify to ~1e-2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np

from .assembly_eig import solve_smallest
from .errors import ConfigError, EigoptError
from .filter import build_filter, filter_backward, orbit_reduce_grad
from .material import MaterialScheme, interpolate
from .mesh import apply_boundary, build_grid, compute_orbits
from .optimize import BoundProblem, DesignState, evaluate, run, volume_constraints
from .spectrum import eig_sensitivity, ks_stable, pnorm_stable

LD = np.longdouble
SPACES = ("all", "symmetric")


class PerturbationError(EigoptError, RuntimeError):
    """A perturbed evaluation failed; ``index`` names the coordinate."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


@dataclass
class CDMResult:
    gradient: np.ndarray      # (n_out, n_vars) or (n_vars,) for scalar functions
    one_sided: np.ndarray     # (n_vars,) bool, True where a box edge forced it


def cdm_gradient(fun, x, h: float = 1e-8, lower=None, upper=None) -> CDMResult:
    """Central differences of ``fun`` (scalar or vector valued) at ``x``.

    Coordinates closer than ``h`` to a bound fall back to a one-sided
    difference and are flagged.  ``x`` keeps its dtype, so an extended
    precision input gives extended precision steps.
    """
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    n = x.size
    lower = np.full(n, -np.inf) if lower is None else np.broadcast_to(lower, (n,))
    upper = np.full(n, np.inf) if upper is None else np.broadcast_to(upper, (n,))
    hs = x.dtype.type(h)
    f0 = None
    cols = []
    flags = np.zeros(n, dtype=bool)
    for i in range(n):
        up = x[i] + hs <= upper[i]
        down = x[i] - hs >= lower[i]
        try:
            if up and down:
                xp, xm = x.copy(), x.copy()
                xp[i] += hs
                xm[i] -= hs
                col = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * hs)
            else:
                flags[i] = True
                if f0 is None:
                    f0 = np.asarray(fun(x))
                xs = x.copy()
                if up:
                    xs[i] += hs
                    col = (np.asarray(fun(xs)) - f0) / hs
                else:
                    xs[i] -= hs
                    col = (f0 - np.asarray(fun(xs))) / hs
        except PerturbationError:
            raise
        except Exception as exc:
            raise PerturbationError(f"evaluation failed at coordinate {i}: {exc}", i) from exc
        cols.append(col)
    grad = np.stack(cols, axis=-1).astype(float)
    return CDMResult(grad, flags)


@dataclass
class SensitivityReport:
    name: str
    space: str
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tol: float
    mismatch_factor: float = 10.0

    @property
    def max_error(self) -> float:
        return float(self.rel_error.max()) if self.rel_error.size else 0.0

    @property
    def matched(self) -> bool:
        return self.max_error <= self.tol

    @property
    def mismatched(self) -> bool:
        return self.max_error >= self.mismatch_factor * self.tol

    @property
    def verdict(self) -> str:
        if self.matched:
            return "match"
        return "mismatch" if self.mismatched else "inconclusive"


def compare(analytic, numeric, tol: float = 1e-4, name: str = "", space: str = "",
            mismatch_factor: float = 10.0) -> SensitivityReport:
    """Elementwise relative error ``|a - n| / max(|a|, 1e-12 * max|a|)``."""
    a = np.asarray(analytic, dtype=float).ravel()
    b = np.asarray(numeric, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    scale = np.abs(a).max() if a.size else 0.0
    denom = np.maximum(np.abs(a), 1e-12 * scale)
    diff = np.abs(a - b)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(denom > 0, diff / np.where(denom > 0, denom, 1.0), np.where(diff > 0, np.inf, 0.0))
    return SensitivityReport(name, space, a, b, rel, float(tol), float(mismatch_factor))


def _pencil_eigenvalues(Kc, Mc) -> np.ndarray:
    """Ascending eigenvalues of a small symmetric pencil in extended precision."""
    if Kc.shape == (1, 1):
        return np.array([Kc[0, 0] / Mc[0, 0]])
    with mpmath.workdps(40):
        A = mpmath.matrix([[mpmath.mpf(str(v)) for v in row] for row in Kc])
        B = mpmath.matrix([[mpmath.mpf(str(v)) for v in row] for row in Mc])
        L = mpmath.cholesky(B)
        Linv = mpmath.inverse(L)
        C = Linv * A * Linv.T
        C = (C + C.T) / 2
        vals = mpmath.eigsy(C, eigvals_only=True)
        return np.sort(np.array([LD(mpmath.nstr(v, 30)) for v in vals], dtype=LD))


class PreciseSpectrum:
    """Extended-precision eigenvalues of fixed eigen-index groups.

    ``groups`` are the index sets (clusters) of the reference design; at
    every evaluated design the same indices are grouped, so a cluster mean
    stays the mean of the same sorted eigenvalues.
    """

    def __init__(self, problem: BoundProblem, groups, count: int):
        self.problem = problem
        self.groups = [np.atleast_1d(g) for g in groups]
        self.count = int(count)
        if max(int(g.max()) for g in self.groups) >= self.count:
            raise ConfigError("groups reach beyond the number of solved eigenpairs")
        self.W = problem.filt.W.astype(LD)
        unit = problem.assembler.unit
        self.K0 = unit.K.astype(LD)
        self.M0 = unit.M.astype(LD)
        mesh = problem.mesh
        self.point_dofs = [(node * mesh.dim + np.arange(mesh.dim), LD(mass))
                           for node, mass in mesh.point_masses]

    def __call__(self, x_full) -> list[np.ndarray]:
        """Sorted eigenvalues per group for a full (channels, n_elements) design."""
        p = self.problem
        x = np.asarray(x_full, dtype=LD).reshape(p.channels, -1)
        rho = [self.W @ row for row in x]
        mp = interpolate(p.scheme, rho)
        K, M = p.assembler(mp.E.astype(float), mp.rho.astype(float))
        eig = solve_smallest(K, M, self.count)
        phis = p.assembler.full_vectors(eig.vectors)
        edofs = p.mesh.element_dofs
        out = []
        for g in self.groups:
            U = phis[g][:, edofs].astype(LD)
            Kc = np.einsum("aei,ij,bej->abe", U, self.K0, U) @ mp.E
            Mc = np.einsum("aei,ij,bej->abe", U, self.M0, U) @ mp.rho
            for dofs, mass in self.point_dofs:
                V = phis[g][:, dofs].astype(LD)
                Mc = Mc + mass * (V @ V.T)
            out.append(_pencil_eigenvalues(0.5 * (Kc + Kc.T), 0.5 * (Mc + Mc.T)))
        return out


def full_gradient(problem: BoundProblem, g_rho, space: str) -> np.ndarray:
    """Chain a (channels, n_elements) density gradient to ``all`` element
    variables or to the ``symmetric`` (orbit) variables."""
    g_rho = np.atleast_2d(g_rho)
    if space == "all":
        return np.concatenate([filter_backward(problem.filt, g) for g in g_rho])
    if space == "symmetric":
        return np.concatenate([orbit_reduce_grad(problem.orbits, filter_backward(problem.filt, g))
                               for g in g_rho])
    raise ConfigError(f"variable space must be one of {SPACES}, got {space!r}")


def _space_map(problem: BoundProblem, state: DesignState, space: str):
    """Base point, box and expansion to full element variables for a space."""
    lo = np.asarray(problem.scheme.lower_bounds, dtype=float)
    if space == "all":
        x0 = state.x.astype(LD).ravel()
        ne = problem.mesh.n_elements
        box = np.repeat(lo, ne), np.ones(x0.size)
        return x0, box, lambda x: x
    if space == "symmetric":
        x0 = state.x_reduced.astype(LD).ravel()
        orb = problem.orbits.element_orbit
        box = np.repeat(lo, problem.orbits.n_reduced), np.ones(x0.size)
        nr = problem.orbits.n_reduced
        return x0, box, lambda x: x.reshape(-1, nr)[:, orb]
    raise ConfigError(f"variable space must be one of {SPACES}, got {space!r}")


# ----------------------------------------------------------------- constraints

def constraint_reports(problem: BoundProblem, state: DesignState, beta, h: float = 1e-8,
                       tol: float = 1e-4) -> list[SensitivityReport]:
    """Check every constraint gradient of a bound formulation against CDM,
    with respect to the bound variables and the reduced design."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    ev = evaluate(problem, state.x_reduced, beta, state)
    nc = problem.n_cluster_constraints
    first = problem.n - 1 if problem.kind == "eigmax" else 0
    idx = list(range(first, first + nc))
    groups = [state.clusters.members[q] for q in idx]
    precise = PreciseSpectrum(problem, groups, state.eig.count)
    x0, (lo, hi), expand = _space_map(problem, state, "symmetric")

    def constraints(x, b):
        full = expand(x)
        lam = np.array([g.mean() for g in precise(full)], dtype=LD)
        if problem.kind == "eigmax":
            cl = b[0] / lam - 1
        else:
            n = problem.n
            cl = np.concatenate([1 - b[0] / lam[:n], b[1] / lam[n:] - 1])
        rho = np.stack([precise.W @ row for row in full])
        vol, _ = volume_constraints(problem, rho)
        return np.concatenate([cl, vol])

    bl = beta.astype(LD)
    num_x = cdm_gradient(lambda x: constraints(x, bl), x0, h, lo, hi).gradient
    num_b = cdm_gradient(lambda b: constraints(x0, b), bl, h * float(np.abs(beta).max())).gradient
    reports = []
    for k in range(problem.n_constraints):
        reports.append(compare(ev.dx[k], num_x[k], tol, f"f{k + 1}/x", "symmetric"))
        reports.append(compare(ev.dbeta[k], num_b[k], tol, f"f{k + 1}/beta", "bound"))
    return reports


# ----------------------------------------------------------------------- study

@dataclass
class StudySpec:
    """Differentiability study on a square block with corner supports."""

    symmetry: str = "half"
    cells: tuple[int, int] = (20, 20)
    length: float = 4.0
    rmin: float = 0.6
    volume: float = 0.5
    warmup: int = 10
    m: int = 10
    E: float = 1.0
    rho: float = 1.0
    aggregate_clusters: int = 8
    p: float = 10.0
    q: float = 10.0
    spaces: tuple[str, ...] = SPACES
    h: float = 1e-8
    tol: float = 1e-4
    mismatch_factor: float = 10.0


@dataclass
class StudyResult:
    spec: StudySpec
    state: DesignState
    reports: list[SensitivityReport] = field(default_factory=list)

    def select(self, prefix: str, space: str) -> list[SensitivityReport]:
        return [r for r in self.reports if r.space == space and r.name.startswith(prefix)]

    def worst(self, prefix: str, space: str) -> float:
        """Largest relative error among reports whose name starts with
        ``prefix`` in ``space``."""
        errs = [r.max_error for r in self.select(prefix, space)]
        if not errs:
            raise KeyError(f"no reports for {prefix!r} in {space!r}")
        return max(errs)


def study_problem(spec: StudySpec) -> BoundProblem:
    mesh = build_grid(2, spec.cells, (spec.length, spec.length))
    mesh = apply_boundary(mesh, [{"at": "corners", "dofs": "all"}])
    scheme = MaterialScheme("solid-void", E=(spec.E,), rho=(spec.rho,))
    return BoundProblem("eigmax", 1, mesh, scheme, build_filter(mesh, spec.rmin),
                        compute_orbits(mesh, spec.symmetry), (spec.volume,), m=spec.m)


def run_study(spec: StudySpec, problem: BoundProblem | None = None) -> StudyResult:
    """Warm up by maximizing the first cluster mean, freeze the design and
    compare analytic and CDM gradients of

    * ``eig_k``: every individual eigenvalue in a multi-member cluster,
    * ``mean_q``: every multi-member cluster mean,
    * ``pnorm_complete`` / ``ks_complete``: aggregates over all eigenvalues
      of the first ``aggregate_clusters`` clusters,
    * ``pnorm_incomplete`` / ``ks_incomplete``: the same with the last
      member of the final multi-member cluster dropped,

    in each requested variable space.  ``problem`` replaces the square
    block built from ``spec``; it must be a first-cluster maximization.
    """
    problem = study_problem(spec) if problem is None else problem
    result = run(problem, spec.warmup)
    if result.error is not None:
        raise result.error
    state = result.state
    clusters = state.clusters
    nq = problem.m
    multi = [q for q in range(nq) if clusters.members[q].size > 1]
    repeated = [int(k) for q in multi for k in clusters.members[q]]
    na = spec.aggregate_clusters
    agg_idx = np.arange(clusters.n_values(na))
    last_multi = [q for q in range(na) if clusters.members[q].size > 1]
    drop = int(clusters.members[last_multi[-1]][-1]) if last_multi else None
    inc_idx = agg_idx[agg_idx != drop] if drop is not None else agg_idx

    groups = list(clusters.members[:max(nq, na)])
    precise = PreciseSpectrum(problem, groups, state.eig.count)
    nval = clusters.n_values(len(groups))

    def quantities(values_by_group):
        lam = np.concatenate(values_by_group)
        out = [lam[k] for k in repeated]
        out += [values_by_group[q].mean() for q in multi]
        out.append(pnorm_stable(lam[agg_idx], spec.p)[0])
        out.append(pnorm_stable(lam[inc_idx], spec.p)[0])
        out.append(ks_stable(lam[agg_idx], spec.q)[0])
        out.append(ks_stable(lam[inc_idx], spec.q)[0])
        return np.array(out, dtype=LD)

    names = [f"eig_{k + 1}" for k in repeated] + [f"mean_{q + 1}" for q in multi]
    names += ["pnorm_complete", "pnorm_incomplete", "ks_complete", "ks_incomplete"]

    # analytic density gradients of every eigenvalue with the solver's vectors
    vals = state.eig.values[:nval]
    g_eig = eig_sensitivity(vals, state.phis[:nval], problem.mesh, problem.assembler.unit,
                            state.material)  # (nval, channels, ne)
    g_q = [g_eig[k] for k in repeated]
    g_q += [g_eig[clusters.members[q]].mean(axis=0) for q in multi]
    for idx, fn, par in ((agg_idx, pnorm_stable, spec.p), (inc_idx, pnorm_stable, spec.p),
                         (agg_idx, ks_stable, spec.q), (inc_idx, ks_stable, spec.q)):
        _, partials = fn(vals[idx], par)
        g_q.append(np.tensordot(partials, g_eig[idx], axes=1))
    # order the aggregate gradients to match ``names``
    g_q = g_q[:len(repeated) + len(multi)] + [g_q[-4], g_q[-3], g_q[-2], g_q[-1]]

    out = StudyResult(spec, state)
    for space in spec.spaces:
        x0, (lo, hi), expand = _space_map(problem, state, space)
        num = cdm_gradient(lambda x: quantities(precise(expand(x))), x0, spec.h, lo, hi)
        for name, g, row in zip(names, g_q, num.gradient):
            ana = full_gradient(problem, g, space)
            out.reports.append(compare(ana, row, spec.tol, name, space, spec.mismatch_factor))
    return out
