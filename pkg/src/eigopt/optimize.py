"""Bound formulations on cluster means and the MMA optimization loop.

Design vector layout used by :func:`run`::

    y = [beta_1 (, beta_2), x_reduced(channel 0), x_reduced(channel 1), ...]

Bound variables are optimized in scaled form ``beta = s * beta_tilde`` where
``s`` is the relevant cluster mean of the initial design, so every entry of
``y`` is O(1).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly_eig import Assembler, EigenSet, mesh_unit_matrices, solve_smallest
from .errors import ConfigError, DegeneracyError
from .filter import FilterOperator, filter_backward, orbit_expand, orbit_reduce_grad
from .material import MaterialPoint, MaterialScheme, interpolate
from .mesh import Mesh, OrbitMap
from .mma import MMAState, mma_step
from .spectrum import DEFAULT_TOL, ClusterSet, cluster, cluster_mean_sensitivity

KINDS = ("eigmax", "bandgap")


@dataclass
class BoundProblem:
    """One bound-formulation problem on a fixed mesh, scheme and filter.

    ``thresholds`` holds V_f for solid-void and bi, (V1, V2) for bi-void and
    (V1, V2, V3) for tri-void.
    """

    kind: str
    n: int
    mesh: Mesh
    scheme: MaterialScheme
    filt: FilterOperator
    orbits: OrbitMap
    thresholds: tuple[float, ...]
    m: int = 10
    tol: float = DEFAULT_TOL
    buffer: int = 5
    max_extensions: int = 4
    beta_bounds: tuple[float, float] = (1e-3, 1e3)
    assembler: Assembler = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"problem kind must be one of {KINDS}, got {self.kind!r}")
        if self.n < 1 or self.m < 1:
            raise ConfigError("target order n and cluster count m must be >= 1")
        self.thresholds = tuple(float(v) for v in np.atleast_1d(self.thresholds))
        if len(self.thresholds) != self.n_volume:
            raise ConfigError(f"{self.scheme.kind} needs {self.n_volume} volume thresholds")
        if any(not 0.0 < v <= 1.0 for v in self.thresholds):
            raise ConfigError("volume thresholds must lie in (0, 1]")
        if any(a < b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ConfigError("volume thresholds must be nested: V1 >= V2 >= V3")
        lo, hi = self.beta_bounds
        if not 0.0 < lo < 1.0 < hi:
            raise ConfigError("bound-variable box must be positive and contain 1")
        if self.buffer < 1 or self.max_extensions < 0:
            raise ConfigError("eigen-budget buffer must be >= 1 and extensions >= 0")
        if self.filt.n != self.mesh.n_elements or self.orbits.n_elements != self.mesh.n_elements:
            raise ConfigError("filter and orbit map do not match the mesh")
        unit = mesh_unit_matrices(self.mesh, self.scheme.nu, self.scheme.plane)
        self.assembler = Assembler(self.mesh, unit)

    @property
    def channels(self) -> int:
        return self.scheme.channels

    @property
    def n_volume(self) -> int:
        return 1 if self.scheme.kind in ("solid-void", "bi") else self.scheme.channels

    @property
    def n_bounds(self) -> int:
        return 1 if self.kind == "eigmax" else 2

    @property
    def n_cluster_constraints(self) -> int:
        return self.m if self.kind == "eigmax" else self.n + self.m

    @property
    def n_constraints(self) -> int:
        return self.n_cluster_constraints + self.n_volume

    @property
    def n_design(self) -> int:
        return self.channels * self.orbits.n_reduced

    def design_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box of the flattened reduced design vector."""
        lo = np.repeat(self.scheme.lower_bounds, self.orbits.n_reduced)
        return lo, np.ones(self.n_design)

    def initial_design(self) -> np.ndarray:
        """Uniform start at the volume thresholds, shape (channels, n_reduced).

        Secondary channels start at ratios of consecutive thresholds so every
        volume constraint is active.
        """
        v = self.thresholds
        if self.scheme.kind == "bi":
            vals = [v[0]]
        else:
            vals = [v[0]] + [v[k] / v[k - 1] for k in range(1, len(v))]
        lo = self.scheme.lower_bounds
        vals = [min(max(a, b), 1.0) for a, b in zip(vals, lo)]
        return np.repeat(np.array(vals)[:, None], self.orbits.n_reduced, axis=1)


@dataclass
class DesignState:
    """Everything derived from one reduced design."""

    x_reduced: np.ndarray   # (channels, n_reduced)
    x: np.ndarray           # (channels, n_elements), symmetric expansion
    rho: np.ndarray         # (channels, n_elements), filtered
    material: MaterialPoint
    eig: EigenSet
    clusters: ClusterSet
    phis: np.ndarray        # (n_eig, n_dofs) full-DOF eigenvectors
    required: int

    @property
    def means(self) -> np.ndarray:
        """Means of the required clusters."""
        return self.clusters.means[: self.required]

    @property
    def n_required_values(self) -> int:
        return self.clusters.n_values(self.required)


@dataclass
class Evaluation:
    """Objective and constraints at a point with gradients.

    Gradients are with respect to the unscaled bound variables (``dbeta``,
    shape (n_constraints, n_bounds)) and the flattened reduced design
    (``dx``, shape (n_constraints, n_design)).
    """

    f0: float
    df0_dbeta: np.ndarray
    values: np.ndarray
    dbeta: np.ndarray
    dx: np.ndarray
    state: DesignState


@dataclass
class IterationRecord:
    iteration: int
    f0: float
    constraints: np.ndarray
    omegas: np.ndarray
    cluster_sizes: np.ndarray
    fractions: np.ndarray
    beta: np.ndarray
    wall_time: float


@dataclass
class RunResult:
    history: list[IterationRecord]
    state: DesignState
    beta: np.ndarray
    error: Exception | None = None


def required_clusters(problem: BoundProblem) -> int:
    """Number of leading clusters the formulation constrains."""
    if problem.kind == "eigmax":
        return problem.n + problem.m - 1
    return problem.n + problem.m


def _as_channels(problem: BoundProblem, x_reduced) -> np.ndarray:
    x = np.asarray(x_reduced, dtype=float)
    shape = (problem.channels, problem.orbits.n_reduced)
    if x.size != shape[0] * shape[1]:
        raise ConfigError(f"expected {shape[0] * shape[1]} reduced design values, got {x.size}")
    return x.reshape(shape)


def densities(problem: BoundProblem, x_reduced) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric expansion and filtered densities per channel.

    The filtered field is symmetric in exact arithmetic; copying each orbit
    representative's value makes it symmetric bit for bit as well.
    """
    xr = _as_channels(problem, x_reduced)
    orbits = problem.orbits
    x = np.stack([orbit_expand(orbits, row) for row in xr])
    rho = np.stack([orbits.symmetrize(problem.filt.W @ row) for row in x])
    return x, rho


def chain_to_reduced(problem: BoundProblem, g_rho) -> np.ndarray:
    """Pull a (channels, n_elements) density gradient back to the flattened
    reduced design vector."""
    g_rho = np.asarray(g_rho, dtype=float)
    return np.concatenate([orbit_reduce_grad(problem.orbits, filter_backward(problem.filt, g))
                           for g in g_rho])


def compute_spectrum(problem: BoundProblem, x_reduced, n_guess: int | None = None) -> DesignState:
    """Solve enough eigenpairs that every required cluster is complete.

    Starts from ``n_guess`` (default: one eigenvalue per required cluster)
    plus the buffer and grows by the buffer while the last required cluster
    could still continue past the computed range.
    """
    xr = _as_channels(problem, x_reduced)
    lo, hi = problem.design_bounds()
    flat = xr.ravel()
    if np.any(flat < lo - 1e-12) or np.any(flat > hi + 1e-12):
        raise ConfigError("design variables outside their bounds")
    x, rho = densities(problem, xr)
    mp = interpolate(problem.scheme, list(rho))
    K, M = problem.assembler(mp.E, mp.rho)
    nc = required_clusters(problem)
    count = (nc if n_guess is None else max(int(n_guess), nc)) + problem.buffer
    limit = problem.assembler.n - 1
    for _ in range(problem.max_extensions + 1):
        count = min(count, limit)
        eig = solve_smallest(K, M, count)
        clusters = cluster(eig.values, problem.tol)
        if clusters.count > nc:
            phis = problem.assembler.full_vectors(eig.vectors)
            return DesignState(xr, x, rho, mp, eig, clusters, phis, nc)
        if count == limit:
            break
        count += problem.buffer
    raise DegeneracyError(
        f"could not complete {nc} clusters within {problem.max_extensions} budget extensions")


def cluster_mean_gradients(problem: BoundProblem, state: DesignState, indices) -> np.ndarray:
    """Reduced-design gradients of the means of clusters ``indices`` (0-based)."""
    out = []
    for q in indices:
        members = state.clusters.members[q]
        g = cluster_mean_sensitivity(members, state.eig.values, state.phis[members],
                                     problem.mesh, problem.assembler.unit, state.material)
        out.append(chain_to_reduced(problem, g))
    return np.array(out)


def volume_constraints(problem: BoundProblem, rho) -> tuple[np.ndarray, np.ndarray]:
    """Volume constraint values and their density gradients.

    Constraint k uses the running product of the first k+1 channels, so the
    gradient with respect to channel c is the product of the other channels.
    Returns values (n_volume,) and gradients (n_volume, channels, n_elements).
    """
    rho = np.atleast_2d(np.asarray(rho))
    if not np.issubdtype(rho.dtype, np.floating):
        rho = rho.astype(float)
    ne = problem.mesh.n_elements
    if rho.shape != (problem.channels, ne):
        raise ConfigError(f"expected densities of shape {(problem.channels, ne)}, got {rho.shape}")
    w = problem.mesh.volumes / problem.mesh.total_volume
    nv = problem.n_volume
    values = np.empty(nv, dtype=rho.dtype)
    grads = np.zeros((nv, problem.channels, ne), dtype=rho.dtype)
    for k in range(nv):
        block = rho[: k + 1]
        values[k] = w @ np.prod(block, axis=0) - problem.thresholds[k]
        for c in range(k + 1):
            others = np.prod(np.delete(block, c, axis=0), axis=0)
            grads[k, c] = w * others
    return values, grads


def _volume_part(problem: BoundProblem, state: DesignState):
    values, g_rho = volume_constraints(problem, state.rho)
    return values, np.array([chain_to_reduced(problem, g) for g in g_rho])


def evaluate_eigmax(problem: BoundProblem, x_reduced, beta: float,
                    state: DesignState | None = None) -> Evaluation:
    """Objective ``beta`` and ``beta / mean_{n+i-1} - 1`` for i = 1..m,
    followed by the volume constraints."""
    if problem.kind != "eigmax":
        raise ConfigError("problem is not an eigenvalue-maximization problem")
    state = compute_spectrum(problem, x_reduced) if state is None else state
    _check_complete(state)
    beta = float(np.atleast_1d(beta)[0])
    idx = np.arange(problem.n - 1, problem.n - 1 + problem.m)
    lam = state.clusters.means[idx]
    dlam = cluster_mean_gradients(problem, state, idx)
    vol, dvol = _volume_part(problem, state)
    values = np.concatenate([beta / lam - 1.0, vol])
    dbeta = np.concatenate([1.0 / lam, np.zeros(vol.size)])[:, None]
    dx = np.vstack([-(beta / lam**2)[:, None] * dlam, dvol])
    return Evaluation(beta, np.array([1.0]), values, dbeta, dx, state)


def evaluate_bandgap(problem: BoundProblem, x_reduced, beta1: float, beta2: float,
                     state: DesignState | None = None) -> Evaluation:
    """Objective ``beta2 - beta1``; ``1 - beta1 / mean_k`` for the first n
    clusters and ``beta2 / mean_{n+j} - 1`` for the next m, then volumes."""
    if problem.kind != "bandgap":
        raise ConfigError("problem is not a bandgap problem")
    state = compute_spectrum(problem, x_reduced) if state is None else state
    _check_complete(state)
    n, m = problem.n, problem.m
    lam = state.clusters.means[: n + m]
    dlam = cluster_mean_gradients(problem, state, range(n + m))
    vol, dvol = _volume_part(problem, state)
    lower, upper = lam[:n], lam[n:]
    values = np.concatenate([1.0 - beta1 / lower, beta2 / upper - 1.0, vol])
    dbeta = np.zeros((values.size, 2))
    dbeta[:n, 0] = -1.0 / lower
    dbeta[n:n + m, 1] = 1.0 / upper
    scale = np.concatenate([beta1 / lower**2, -beta2 / upper**2])
    dx = np.vstack([scale[:, None] * dlam, dvol])
    return Evaluation(beta2 - beta1, np.array([-1.0, 1.0]), values, dbeta, dx, state)


def _check_complete(state: DesignState):
    if not np.all(state.clusters.complete[: state.required]):
        raise DegeneracyError("required clusters are not all complete")


def evaluate(problem: BoundProblem, x_reduced, beta, state: DesignState | None = None) -> Evaluation:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size != problem.n_bounds:
        raise ConfigError(f"expected {problem.n_bounds} bound variables")
    if problem.kind == "eigmax":
        return evaluate_eigmax(problem, x_reduced, beta[0], state)
    return evaluate_bandgap(problem, x_reduced, beta[0], beta[1], state)


def report_fractions(problem: BoundProblem, constraint_values) -> np.ndarray:
    """Realized per-phase volume fractions from final constraint values.

    Returns (solid,) for single-material schemes, (phase 1, phase 2) for
    bi-void and (phase 1, phase 2, phase 3) for tri-void.
    """
    f = np.asarray(constraint_values, dtype=float)
    vol = f[-problem.n_volume:]
    v = problem.thresholds
    if problem.n_volume == 1:
        return np.array([v[0] + vol[0]])
    if problem.n_volume == 2:
        vr = v[1] + vol[1]
        vg = v[0] - vr + vol[0]
        return np.array([vr, vg])
    vr = v[2] + vol[2]
    vg = v[1] - vr + vol[1]
    vb = v[0] - vr - vg + vol[0]
    return np.array([vr, vg, vb])


def initial_scales(problem: BoundProblem, state: DesignState) -> np.ndarray:
    means = state.clusters.means
    if problem.kind == "eigmax":
        return np.array([means[problem.n - 1]])
    return np.array([means[problem.n - 1], means[problem.n]])


def run(problem: BoundProblem, iterations: int, move: float = 0.05, on_iteration=None) -> RunResult:
    """Fixed-count MMA loop; returns ``iterations + 1`` records.

    ``on_iteration(record, state)`` is called after each evaluation.  A
    computation error stops the loop and is returned in ``RunResult.error``
    together with the history so far.
    """
    if iterations < 0:
        raise ConfigError("iteration count must be >= 0")
    if not 0.0 < move <= 1.0:
        raise ConfigError("move limit must lie in (0, 1]")
    nb = problem.n_bounds
    xr = problem.initial_design().ravel()
    state = compute_spectrum(problem, xr)
    scales = initial_scales(problem, state)
    bt = np.ones(nb)
    lo_x, hi_x = problem.design_bounds()
    ymin = np.concatenate([np.full(nb, problem.beta_bounds[0]), lo_x])
    ymax = np.concatenate([np.full(nb, problem.beta_bounds[1]), hi_x])
    mma = MMAState(n=nb + problem.n_design, m=problem.n_constraints, move=move)
    history: list[IterationRecord] = []
    error = None
    for it in range(iterations + 1):
        t0 = time.perf_counter()
        try:
            if it > 0:
                state = compute_spectrum(problem, xr, state.n_required_values)
            ev = evaluate(problem, xr, bt * scales, state)
        except Exception as exc:  # keep the partial history
            error = exc
            break
        record = IterationRecord(
            iteration=it,
            f0=float(ev.f0),
            constraints=ev.values.copy(),
            omegas=np.sqrt(state.eig.values[: state.n_required_values]),
            cluster_sizes=state.clusters.sizes[: state.required].copy(),
            fractions=report_fractions(problem, ev.values),
            beta=bt * scales,
            wall_time=0.0,
        )
        if it < iterations:
            y = np.concatenate([bt, xr])
            # minimize the negated objective, normalized by the first scale
            df0 = np.concatenate([-ev.df0_dbeta * scales / scales[0], np.zeros(problem.n_design)])
            dfdx = np.hstack([ev.dbeta * scales, ev.dx])
            try:
                y = mma_step(mma, y, -ev.f0 / scales[0], df0, ev.values, dfdx, ymin, ymax)
            except Exception as exc:
                error = exc
            bt, xr = y[:nb], y[nb:]
        record.wall_time = time.perf_counter() - t0
        history.append(record)
        if on_iteration is not None:
            on_iteration(record, state)
        if error is not None:
            break
    return RunResult(history, state, bt * scales, error)
