"""Density-to-property interpolation laws with analytic derivatives.

Four schemes are supported:

* ``solid-void``: power-law stiffness, mass with a C1 high-order branch
  below the threshold ``rho_T`` that suppresses localized low-density modes;
* ``bi``: two solids, no void;
* ``bi-void`` and ``tri-void``: nested mixtures where the first channel
  controls solid/void and the others split the solid between phases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaterialError

SCHEMES = {"solid-void": 1, "bi": 2, "bi-void": 2, "tri-void": 3}
# number of density channels (design fields) per scheme
CHANNELS = {"solid-void": 1, "bi": 1, "bi-void": 2, "tri-void": 3}

_SLACK = 1e-10


def continuity_coeffs(p2: float, rho_T: float) -> tuple[float, float]:
    """Coefficients of ``c1 r**p2 + c2 r**(p2+1)`` matching value and slope
    of the linear law ``r`` at ``r = rho_T``."""
    if p2 < 1:
        raise MaterialError(f"mass penalty p2 must be >= 1, got {p2}")
    if not 0.0 < rho_T < 1.0:
        raise MaterialError(f"threshold rho_T must lie in (0, 1), got {rho_T}")
    c1 = p2 * rho_T ** (1.0 - p2)
    c2 = (1.0 - p2) * rho_T ** (-p2)
    return c1, c2


@dataclass(frozen=True)
class MaterialScheme:
    kind: str = "solid-void"
    E: tuple[float, ...] = (1.0,)
    rho: tuple[float, ...] = (1.0,)
    nu: float = 0.3
    p1: float = 3.0
    p2: float = 6.0
    p: float = 3.0
    rho_T: float = 0.1
    rho_L: float = 1e-4
    plane: str = "strain"  # 2D kinematics: plane strain or plane stress

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise MaterialError(f"unknown scheme {self.kind!r}")
        n = SCHEMES[self.kind]
        object.__setattr__(self, "E", tuple(float(v) for v in np.atleast_1d(self.E)))
        object.__setattr__(self, "rho", tuple(float(v) for v in np.atleast_1d(self.rho)))
        if len(self.E) != n or len(self.rho) != n:
            raise MaterialError(f"{self.kind} needs {n} moduli and {n} mass densities")
        if min(self.E) <= 0 or min(self.rho) <= 0:
            raise MaterialError("moduli and mass densities must be positive")
        if not 0.0 < self.nu < 0.5:
            raise MaterialError(f"Poisson ratio must lie in (0, 0.5), got {self.nu}")
        if self.p1 < 1 or self.p2 < 1 or self.p < 1:
            raise MaterialError("penalty exponents must be >= 1")
        if not 0.0 < self.rho_T < 1.0:
            raise MaterialError(f"rho_T must lie in (0, 1), got {self.rho_T}")
        if self.plane not in ("strain", "stress"):
            raise MaterialError(f"plane must be strain or stress, got {self.plane!r}")
        if self.kind != "bi" and not 0.0 < self.rho_L <= self.rho_T:
            raise MaterialError(f"rho_L must lie in (0, rho_T], got {self.rho_L}")

    @property
    def channels(self) -> int:
        return CHANNELS[self.kind]

    @property
    def coeffs(self) -> tuple[float, float]:
        return continuity_coeffs(self.p2, self.rho_T)

    @property
    def lower_bounds(self) -> tuple[float, ...]:
        """Smallest admissible design value per channel."""
        if self.kind == "bi":
            return (0.0,)
        return (self.rho_L,) + (0.0,) * (self.channels - 1)


@dataclass(frozen=True)
class MaterialPoint:
    """Interpolated properties, arrays over elements.

    ``dE`` and ``drho`` have shape (channels, n) holding partials with respect
    to each density channel.
    """

    E: np.ndarray
    rho: np.ndarray
    dE: np.ndarray
    drho: np.ndarray


def _check(r, lo, name):
    r = np.asarray(r)
    if not np.issubdtype(r.dtype, np.floating):
        r = r.astype(float)
    if np.any(r < lo - _SLACK) or np.any(r > 1.0 + _SLACK) or not np.all(np.isfinite(r)):
        raise MaterialError(f"{name} outside [{lo}, 1]")
    return r


def _mass_factor(scheme: MaterialScheme, r):
    """Modified SIMP mass factor g(r) and g'(r)."""
    c1, c2 = scheme.coeffs
    p2 = scheme.p2
    low = r <= scheme.rho_T
    g = np.where(low, c1 * r**p2 + c2 * r ** (p2 + 1), r)
    dg = np.where(low, p2 * c1 * r ** (p2 - 1) + (p2 + 1) * c2 * r**p2, 1.0)
    return g, dg


def interp_solid_void(scheme: MaterialScheme, r) -> MaterialPoint:
    r = _check(r, scheme.rho_L, "rho")
    (Es,), (rs,) = scheme.E, scheme.rho
    p1 = scheme.p1
    g, dg = _mass_factor(scheme, r)
    E = r**p1 * Es
    dE = p1 * r ** (p1 - 1) * Es
    return MaterialPoint(E, g * rs, dE[None], (dg * rs)[None])


def interp_bi(scheme: MaterialScheme, r) -> MaterialPoint:
    r = _check(r, 0.0, "rho")
    (E1, E2), (r1, r2) = scheme.E, scheme.rho
    p = scheme.p
    E = r**p * E1 + (1.0 - r**p) * E2
    dE = p * r ** (p - 1) * (E1 - E2)
    rho = r * r1 + (1.0 - r) * r2
    drho = np.full_like(r, r1 - r2)
    return MaterialPoint(E, rho, dE[None], drho[None])


def interp_bi_void(scheme: MaterialScheme, ra, rb) -> MaterialPoint:
    ra = _check(ra, scheme.rho_L, "rho_1")
    rb = _check(rb, 0.0, "rho_2")
    (E1, E2), (m1, m2) = scheme.E, scheme.rho
    p1 = scheme.p1
    E12 = rb**p1 * E1 + (1.0 - rb**p1) * E2
    dE12 = p1 * rb ** (p1 - 1) * (E1 - E2)
    rho12 = rb * m1 + (1.0 - rb) * m2
    g, dg = _mass_factor(scheme, ra)
    E = ra**p1 * E12
    dE = np.stack([p1 * ra ** (p1 - 1) * E12, ra**p1 * dE12])
    drho = np.stack([dg * rho12, g * (m1 - m2)])
    return MaterialPoint(E, g * rho12, dE, drho)


def interp_tri_void(scheme: MaterialScheme, ra, rb, rc) -> MaterialPoint:
    ra = _check(ra, scheme.rho_L, "rho_1")
    rb = _check(rb, 0.0, "rho_2")
    rc = _check(rc, 0.0, "rho_3")
    (E1, E2, E3), (m1, m2, m3) = scheme.E, scheme.rho
    p1 = scheme.p1
    # innermost mixture of phases 1 and 2, controlled by the third channel
    E12 = rc**p1 * E1 + (1.0 - rc**p1) * E2
    dE12 = p1 * rc ** (p1 - 1) * (E1 - E2)
    E123 = rb**p1 * E12 + (1.0 - rb**p1) * E3
    rho12 = rc * m1 + (1.0 - rc) * m2
    rho123 = rb * rho12 + (1.0 - rb) * m3
    g, dg = _mass_factor(scheme, ra)
    E = ra**p1 * E123
    dE = np.stack([
        p1 * ra ** (p1 - 1) * E123,
        ra**p1 * p1 * rb ** (p1 - 1) * (E12 - E3),
        ra**p1 * rb**p1 * dE12,
    ])
    drho = np.stack([dg * rho123, g * (rho12 - m3), g * rb * (m1 - m2)])
    return MaterialPoint(E, g * rho123, dE, drho)


def interpolate(scheme: MaterialScheme, densities) -> MaterialPoint:
    """Dispatch on the scheme; ``densities`` is a sequence of channel arrays."""
    densities = list(densities)
    if len(densities) != scheme.channels:
        raise MaterialError(f"{scheme.kind} expects {scheme.channels} density channels")
    if scheme.kind == "solid-void":
        return interp_solid_void(scheme, densities[0])
    if scheme.kind == "bi":
        return interp_bi(scheme, densities[0])
    if scheme.kind == "bi-void":
        return interp_bi_void(scheme, *densities)
    return interp_tri_void(scheme, *densities)
