"""Keplerian propagation, ground-station motion, and first-order
relativistic orbit corrections.

Orbits are restricted to the equatorial plane: two in-plane elements plus
an in-plane orientation angle and a direction sign.  All bodies start at
periapsis and at a common azimuth at t = 0 unless configured otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CONSTS, DomainError, PhysConsts, StateVector, solve_kepler

PROGRADE = 1
RETROGRADE = -1


@dataclass(frozen=True)
class KeplerOrbit:
    a: float                    # semi-major axis [m]
    ecc: float = 0.0
    M0: float = 0.0             # mean anomaly at epoch [rad]
    argp: float = 0.0           # argument of periapsis [rad]
    direction: int = PROGRADE

    def __post_init__(self):
        if not (0.0 <= self.ecc < 1.0):
            raise DomainError(f"eccentricity must be in [0, 1), got {self.ecc}")
        if self.a * (1.0 - self.ecc) <= CONSTS.R_E:
            raise DomainError("periapsis must lie above the Earth radius")
        if self.direction not in (PROGRADE, RETROGRADE):
            raise DomainError("direction must be +1 (prograde) or -1 (retrograde)")

    @property
    def semilatus(self) -> float:
        return self.a * (1.0 - self.ecc**2)

    @property
    def periapsis(self) -> float:
        return self.a * (1.0 - self.ecc)

    @property
    def apoapsis(self) -> float:
        return self.a * (1.0 + self.ecc)


@dataclass(frozen=True)
class GroundStation:
    radius: float = CONSTS.R_E  # geocentric radius [m]
    phi0: float = 0.0           # initial azimuth [rad]

    def __post_init__(self):
        if self.radius < CONSTS.R_E:
            raise DomainError("ground station radius below Earth radius")


@dataclass(frozen=True)
class PerturbedOrbitState:
    """Radius and coordinate-time velocities with the O(r_S) pieces split out.

    The ``*_kepler`` fields are the unperturbed ellipse; adding the matching
    ``*_corr`` field gives the first-order relativistic value.
    """

    phi: float
    r_kepler: float
    r_corr: float
    r_dot_kepler: float
    r_dot_corr: float
    phi_dot_kepler: float
    phi_dot_corr: float
    validity_warning: bool

    @property
    def r(self) -> float:
        return self.r_kepler + self.r_corr

    @property
    def r_dot(self) -> float:
        return self.r_dot_kepler + self.r_dot_corr

    @property
    def phi_dot(self) -> float:
        return self.phi_dot_kepler + self.phi_dot_corr


def mean_motion(orbit: KeplerOrbit, consts: PhysConsts = CONSTS) -> float:
    return math.sqrt(consts.GM / orbit.a**3)


def orbital_period(orbit: KeplerOrbit, consts: PhysConsts = CONSTS) -> float:
    """Kepler's third law, T = 2*pi*sqrt(a^3/GM)."""
    return 2.0 * math.pi / mean_motion(orbit, consts)


def orbit_angles(orbit: KeplerOrbit, t: float,
                 consts: PhysConsts = CONSTS) -> tuple[float, float, float]:
    """Eccentric anomaly, true anomaly and radius at coordinate time t."""
    M = orbit.M0 + mean_motion(orbit, consts) * t
    E = solve_kepler(M, orbit.ecc)
    r = orbit.a * (1.0 - orbit.ecc * math.cos(E))
    nu = 2.0 * math.atan2(
        math.sqrt(1.0 + orbit.ecc) * math.sin(0.5 * E),
        math.sqrt(1.0 - orbit.ecc) * math.cos(0.5 * E),
    )
    # atan2 reduces to (-pi, pi]; restore the accumulated winding so that
    # the azimuth is continuous in t.
    nu += 2.0 * math.pi * round((E - nu) / (2.0 * math.pi))
    return E, nu, r


def kepler_state(orbit: KeplerOrbit, t: float,
                 consts: PhysConsts = CONSTS) -> StateVector:
    """Equatorial position/velocity/acceleration on a Kepler ellipse."""
    _, nu, r = orbit_angles(orbit, t, consts)
    phi = orbit.argp + orbit.direction * nu
    rhat = np.array([math.cos(phi), math.sin(phi), 0.0])
    that = np.array([-math.sin(phi), math.cos(phi), 0.0])

    h = math.sqrt(consts.GM * orbit.semilatus)
    v_r = consts.GM / h * orbit.ecc * math.sin(nu)
    v_t = consts.GM / h * (1.0 + orbit.ecc * math.cos(nu))

    pos = r * rhat
    vel = v_r * rhat + orbit.direction * v_t * that
    acc = -consts.GM / r**3 * pos
    return StateVector(t=t, r=pos, v=vel, a=acc)


def ground_station_state(gs: GroundStation, t: float,
                         consts: PhysConsts = CONSTS) -> StateVector:
    """Uniformly corotating equatorial site; a = -omega_E^2 * r exactly."""
    phi = gs.phi0 + consts.omega_E * t
    rhat = np.array([math.cos(phi), math.sin(phi), 0.0])
    that = np.array([-math.sin(phi), math.cos(phi), 0.0])
    pos = gs.radius * rhat
    return StateVector(
        t=t,
        r=pos,
        v=consts.omega_E * gs.radius * that,
        a=-consts.omega_E**2 * pos,
    )


def vis_viva_speed(orbit: KeplerOrbit, r: float,
                   consts: PhysConsts = CONSTS) -> float:
    """Speed at radius r on the orbit, v^2 = GM*(2/r - 1/a)."""
    if not (orbit.periapsis * (1.0 - 1e-12) <= r <= orbit.apoapsis * (1.0 + 1e-12)):
        raise DomainError(
            f"radius {r} outside orbit radial range "
            f"[{orbit.periapsis}, {orbit.apoapsis}]"
        )
    return math.sqrt(consts.GM * (2.0 / r - 1.0 / orbit.a))


def periapsis_shift(orbit: KeplerOrbit, consts: PhysConsts = CONSTS) -> float:
    """Secular periapsis advance per orbit, 3*pi*r_S/p."""
    return 3.0 * math.pi * consts.r_S / orbit.semilatus


_PERTURBATIVE_LIMIT = 1e-6


def relativistic_orbit_state(orbit: KeplerOrbit, phi: float,
                             consts: PhysConsts = CONSTS,
                             r_s: float | None = None) -> PerturbedOrbitState:
    """First-order Schwarzschild correction to the orbit at azimuth phi.

    ``r_s`` may be overridden to probe the linear scaling of the correction;
    by default the Earth's Schwarzschild radius is used.  The zeroth-order
    part is the exact Kepler ellipse r = p/(1 + ecc*cos(phi)).
    """
    if not math.isfinite(phi):
        raise DomainError("phi must be finite")
    rs = consts.r_S if r_s is None else r_s
    p = orbit.semilatus
    e = orbit.ecc

    u0 = (1.0 + e * math.cos(phi)) / p
    du0 = -e * math.sin(phi) / p
    # Perturbed inverse radius: constant offset, a periodic term, and the
    # secular phi*sin(phi) term that carries the periapsis shift.
    u1 = (3.0 * rs / (2.0 * p**2)) * (
        1.0 + 0.5 * e**2 - (e**2 / 6.0) * math.cos(2.0 * phi)
        + e * phi * math.sin(phi)
    )
    du1 = (3.0 * rs / (2.0 * p**2)) * (
        (e**2 / 3.0) * math.sin(2.0 * phi)
        + e * math.sin(phi) + e * phi * math.cos(phi)
    )

    r0 = 1.0 / u0
    r_corr = -u1 / u0**2

    L = math.sqrt(consts.GM * p)           # specific angular momentum
    # Coordinate-time conversion dt/dtau = E_spec/(1 - rs/r); the specific
    # energy E_spec = 1 - rs/(4a) to the retained order.
    e_spec = 1.0 - rs / (4.0 * orbit.a)
    r_dot0 = -L * du0
    r_dot1 = -L * du1
    phi_dot0 = L * u0**2
    phi_dot_full = L * (u0 + u1) ** 2 * (1.0 - rs * (u0 + u1)) / e_spec
    r_dot_full = (r_dot0 + r_dot1) * (1.0 - rs * (u0 + u1)) / e_spec

    return PerturbedOrbitState(
        phi=phi,
        r_kepler=r0,
        r_corr=r_corr,
        r_dot_kepler=r_dot0,
        r_dot_corr=r_dot_full - r_dot0,
        phi_dot_kepler=phi_dot0,
        phi_dot_corr=phi_dot_full - phi_dot0,
        validity_warning=rs / p > _PERTURBATIVE_LIMIT,
    )
