"""General-relativistic engine: Schwarzschild geodesics (timelike and
null), tetrad launch parametrization, the emitter-observer problem solved
by differential-evolution shooting, redshift extraction along the solved
null geodesic, and the deviation sweep against the analytic shift model.

Coordinates are Schwarzschild (t, r, theta, phi) with signature
(-, +, +, +); scenarios stay in the equatorial plane theta = pi/2 but the
geodesic right-hand side is written for general theta.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .core import CONSTS, DomainError, NumericError, PhysConsts
from .orbits import (
    GroundStation,
    KeplerOrbit,
    ground_station_state,
    kepler_state,
    orbit_angles,
    orbital_period,
)
from .redshift import shift_breakdown

_HORIZON_MARGIN = 1.0 + 1e-6

# Integrator defaults; drift budgets need normalization error well under
# 1e-10 over day-long spans.
RTOL = 1e-12
_ATOL = np.array([1e-9, 1e-6, 1e-12, 1e-12, 1e-12, 1e-6, 1e-12, 1e-12])
_MAX_NODES_TIMELIKE = 200_000
_MAX_NODES_NULL = 8192
_TIMELIKE_MAX_STEP = 5.0          # s of proper time
_WORLDLINE_STEP = 5.0             # s, uniform sampling of worldline tables


@dataclass(frozen=True)
class Event:
    """A spacetime point in Schwarzschild coordinates."""

    t: float
    r: float
    theta: float = math.pi / 2.0
    phi: float = 0.0

    def __post_init__(self):
        if self.r <= CONSTS.r_S:
            raise DomainError("event inside the Schwarzschild radius")


@dataclass(frozen=True)
class FourVector:
    """Coordinate components (dt, dr, dtheta, dphi) of a curve tangent.

    ``parametrization`` is "proper" for timelike curves (derivatives with
    respect to proper time) and "affine" for null ones.
    """

    u: np.ndarray
    parametrization: str = "proper"

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if self.u.shape != (4,):
            raise DomainError("four-vector needs exactly 4 components")
        if self.parametrization not in ("proper", "affine"):
            raise DomainError("parametrization must be 'proper' or 'affine'")


@dataclass(frozen=True)
class Tetrad:
    """Orthonormal frame at an event; row 0 is the observer four-velocity/c."""

    event: Event
    e: np.ndarray  # shape (4, 4), rows e0..e3 in coordinate components

    def __post_init__(self):
        object.__setattr__(self, "e", np.asarray(self.e, dtype=float))


def metric_diag(event_r: float, event_theta: float,
                consts: PhysConsts = CONSTS) -> np.ndarray:
    """Diagonal of the Schwarzschild metric at (r, theta)."""
    f = 1.0 - consts.r_S / event_r
    return np.array([
        -f * consts.c**2,
        1.0 / f,
        event_r**2,
        (event_r * math.sin(event_theta)) ** 2,
    ])


def inner(event: Event, a: np.ndarray, b: np.ndarray,
          consts: PhysConsts = CONSTS) -> float:
    """Metric inner product g(a, b) at the event."""
    g = metric_diag(event.r, event.theta, consts)
    return float(np.sum(g * np.asarray(a) * np.asarray(b)))


def norm_residual(event: Event, vec: FourVector,
                  consts: PhysConsts = CONSTS) -> float:
    """g(u, u) + c^2 for timelike tangents, g(k, k) for null ones."""
    q = inner(event, vec.u, vec.u, consts)
    if vec.parametrization == "proper":
        return q + consts.c**2
    return q


def geodesic_rhs(event: Event, tangent: FourVector,
                 consts: PhysConsts = CONSTS) -> np.ndarray:
    """Geodesic-equation derivative of (x, dx) with analytic Christoffels."""
    if event.r <= consts.r_S * _HORIZON_MARGIN:
        raise DomainError("event too close to the horizon")
    y = np.array([event.t, event.r, event.theta, event.phi,
                  *tangent.u])
    out = np.empty(8)
    kernels.geodesic_rhs_kernel(y, consts.GM, consts.c, out)
    return out


@dataclass(frozen=True)
class GeodesicCurve:
    """Dense-output geodesic: accepted nodes with tangents for Hermite
    interpolation in the curve parameter, plus lookup by coordinate time.
    """

    lam: np.ndarray      # (n,) curve parameter at nodes
    y: np.ndarray        # (n, 8) states
    f: np.ndarray        # (n, 8) derivatives
    kind: str            # "timelike" | "null"
    status: int
    consts: PhysConsts

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @property
    def span(self) -> float:
        return float(self.lam[-1])

    def eval(self, lam: float) -> np.ndarray:
        out = np.empty(8)
        kernels.hermite_eval_kernel(self.lam, self.y, self.f, self.n, lam, out)
        return out

    def at_time(self, t: float) -> tuple[float, np.ndarray]:
        """State at coordinate time t; t is strictly increasing in lam."""
        times = self.y[:, 0]
        if not times[0] <= t <= times[-1]:
            raise DomainError(
                f"time {t} outside the integrated span "
                f"[{times[0]}, {times[-1]}]"
            )
        idx = int(np.searchsorted(times, t))
        idx = min(max(idx, 1), self.n - 1)
        lam = float(self.lam[idx - 1] + (self.lam[idx] - self.lam[idx - 1])
                    * (t - times[idx - 1]) / (times[idx] - times[idx - 1]))
        state = self.eval(lam)
        for _ in range(8):
            # Newton on the interpolated t(lam); dt/dlam = state[4] > 0.
            err = state[0] - t
            if abs(err) < 1e-13 * (abs(t) + 1.0):
                break
            lam -= err / state[4]
            state = self.eval(lam)
        return lam, state

    def event_at(self, lam: float) -> tuple[Event, FourVector]:
        s = self.eval(lam)
        tag = "proper" if self.kind == "timelike" else "affine"
        return (Event(t=s[0], r=s[1], theta=s[2], phi=s[3]),
                FourVector(u=s[4:8], parametrization=tag))


def integrate_geodesic(event: Event, tangent: FourVector, span: float,
                       consts: PhysConsts = CONSTS,
                       rtol: float = RTOL,
                       max_step: float | None = None,
                       max_nodes: int | None = None) -> GeodesicCurve:
    """Integrate a geodesic from (event, tangent) over the curve parameter.

    ``span`` is proper time for timelike tangents and affine parameter for
    null ones.  Raises on step-size collapse; a horizon approach ends the
    curve early with the matching status.
    """
    kind = "timelike" if tangent.parametrization == "proper" else "null"
    if max_step is None:
        max_step = _TIMELIKE_MAX_STEP if kind == "timelike" else span / 64.0
    if max_nodes is None:
        max_nodes = _MAX_NODES_TIMELIKE if kind == "timelike" else _MAX_NODES_NULL
    y0 = np.array([event.t, event.r, event.theta, event.phi, *tangent.u])
    status, n, lam, y, f = kernels.integrate_kernel(
        y0, span, consts.GM, consts.c, rtol, _ATOL, max_step, max_nodes
    )
    if status == kernels.STATUS_STEP_UNDERFLOW:
        raise NumericError("geodesic step size collapsed", float(lam[n - 1]))
    if status == kernels.STATUS_NODE_OVERFLOW:
        raise NumericError("geodesic node budget exhausted", float(lam[n - 1]))
    return GeodesicCurve(lam=lam[:n].copy(), y=y[:n].copy(), f=f[:n].copy(),
                         kind=kind, status=status, consts=consts)


def four_velocity_from_coordinate(event: Event, r_dot: float,
                                  theta_dot: float, phi_dot: float,
                                  consts: PhysConsts = CONSTS) -> FourVector:
    """Complete coordinate-time velocities to a normalized four-velocity."""
    f = 1.0 - consts.r_S / event.r
    sin_th = math.sin(event.theta)
    q = (consts.c**2 * f - r_dot**2 / f
         - event.r**2 * (theta_dot**2 + sin_th**2 * phi_dot**2))
    if q <= 0.0:
        raise DomainError("coordinate velocity is not timelike")
    ut = consts.c / math.sqrt(q)
    return FourVector(
        u=np.array([ut, ut * r_dot, ut * theta_dot, ut * phi_dot]),
        parametrization="proper",
    )


def static_four_velocity(event: Event,
                         consts: PhysConsts = CONSTS) -> FourVector:
    """Four-velocity of a static observer, u = (1/sqrt(f), 0, 0, 0)."""
    return four_velocity_from_coordinate(event, 0.0, 0.0, 0.0, consts)


def timelike_from_kepler(orbit: KeplerOrbit, t0: float = 0.0,
                         consts: PhysConsts = CONSTS) -> tuple[Event, FourVector]:
    """Initial conditions of a timelike geodesic from Kepler coordinates.

    The spatial projection matches the coordinate velocity of the Kepler
    ellipse exactly at t0; normalization fixes the time component.
    """
    _, nu, r = orbit_angles(orbit, t0, consts)
    phi = orbit.argp + orbit.direction * nu
    h = math.sqrt(consts.GM * orbit.semilatus)
    r_dot = consts.GM / h * orbit.ecc * math.sin(nu)
    phi_dot = orbit.direction * h / r**2
    event = Event(t=t0, r=r, phi=phi)
    return event, four_velocity_from_coordinate(event, r_dot, 0.0, phi_dot,
                                                consts)


def build_tetrad(event: Event, u: FourVector,
                 consts: PhysConsts = CONSTS) -> Tetrad:
    """Orthonormal frame with e0 = u/c via metric Gram-Schmidt.

    The spatial legs start from the coordinate r, theta, phi directions, so
    for slow observers e1 points radially outward and e3 along phi.
    """
    if u.parametrization != "proper":
        raise DomainError("tetrad time leg must be a four-velocity")
    e = np.zeros((4, 4))
    e[0] = u.u / consts.c
    seeds = (np.array([0.0, 1.0, 0.0, 0.0]),
             np.array([0.0, 0.0, 1.0, 0.0]),
             np.array([0.0, 0.0, 0.0, 1.0]))
    for i, seed in enumerate(seeds, start=1):
        v = seed + inner(event, seed, e[0], consts) * e[0]
        for j in range(1, i):
            v = v - inner(event, v, e[j], consts) * e[j]
        e[i] = v / math.sqrt(inner(event, v, v, consts))
    return Tetrad(event=event, e=e)


def celestial_to_wavevector(tetrad: Tetrad, Phi: float, Psi: float,
                            consts: PhysConsts = CONSTS) -> FourVector:
    """Null wavevector launched along celestial angles in the local frame.

    The spatial direction is n = cos(Psi)cos(Phi) e1 + cos(Psi)sin(Phi) e2
    + sin(Psi) e3; k = e0 + n is null by construction and is rescaled so
    k^t = 1, making the affine parameter coordinate time at launch.
    """
    n = (math.cos(Psi) * math.cos(Phi) * tetrad.e[1]
         + math.cos(Psi) * math.sin(Phi) * tetrad.e[2]
         + math.sin(Psi) * tetrad.e[3])
    k = tetrad.e[0] + n
    return FourVector(u=k / k[0], parametrization="affine")


def wavevector_to_celestial(tetrad: Tetrad, k: FourVector,
                            consts: PhysConsts = CONSTS) -> tuple[float, float]:
    """Inverse of celestial_to_wavevector up to the affine rescaling."""
    ev = tetrad.event
    a0 = -inner(ev, k.u, tetrad.e[0], consts)
    n1 = inner(ev, k.u, tetrad.e[1], consts) / a0
    n2 = inner(ev, k.u, tetrad.e[2], consts) / a0
    n3 = inner(ev, k.u, tetrad.e[3], consts) / a0
    return math.atan2(n2, n1), math.asin(max(-1.0, min(1.0, n3)))


# ---------------------------------------------------------------------------
# Worldlines


@dataclass
class Worldline:
    """Receiver/emitter worldline: a uniform Cartesian sample table for the
    closest-approach kernel plus an exact state callback for redshifts.
    """

    table: np.ndarray    # (n, 9): x, y, z, vx, vy, vz, ax, ay, az
    t0: float
    dt: float
    state_at: Callable[[float], tuple[Event, FourVector]]

    @property
    def t_end(self) -> float:
        return self.t0 + (self.table.shape[0] - 1) * self.dt

    def position_velocity(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        out = np.empty(6)
        kernels.worldline_interp_kernel(self.table, self.t0, self.dt, t, out)
        return out[:3], out[3:]


def _kepler_gr_state(orbit: KeplerOrbit, consts: PhysConsts, t: float):
    _, nu, r = orbit_angles(orbit, t, consts)
    phi = orbit.argp + orbit.direction * nu
    h = math.sqrt(consts.GM * orbit.semilatus)
    r_dot = consts.GM / h * orbit.ecc * math.sin(nu)
    phi_dot = orbit.direction * h / r**2
    event = Event(t=t, r=r, phi=phi)
    return event, four_velocity_from_coordinate(event, r_dot, 0.0, phi_dot,
                                                consts)


def _ground_gr_state(gs: GroundStation, consts: PhysConsts, t: float):
    event = Event(t=t, r=gs.radius, phi=gs.phi0 + consts.omega_E * t)
    return event, four_velocity_from_coordinate(event, 0.0, 0.0,
                                                consts.omega_E, consts)


def _table_from_states(states) -> np.ndarray:
    table = np.empty((len(states), 9))
    for i, s in enumerate(states):
        table[i, 0:3] = s.r
        table[i, 3:6] = s.v
        table[i, 6:9] = s.a
    return table


def worldline_from_kepler(orbit: KeplerOrbit, t_start: float, t_end: float,
                          step: float = _WORLDLINE_STEP,
                          consts: PhysConsts = CONSTS) -> Worldline:
    """Analytic Kepler worldline sampled on a uniform grid."""
    n = int(math.ceil((t_end - t_start) / step)) + 1
    times = t_start + step * np.arange(n)
    table = _table_from_states([kepler_state(orbit, t, consts) for t in times])
    return Worldline(table=table, t0=t_start, dt=step,
                     state_at=lambda t: _kepler_gr_state(orbit, consts, t))


def worldline_from_ground(gs: GroundStation, t_start: float, t_end: float,
                          step: float = _WORLDLINE_STEP,
                          consts: PhysConsts = CONSTS) -> Worldline:
    """Corotating ground-station worldline sampled on a uniform grid."""
    n = int(math.ceil((t_end - t_start) / step)) + 1
    times = t_start + step * np.arange(n)
    table = _table_from_states(
        [ground_station_state(gs, t, consts) for t in times]
    )
    return Worldline(table=table, t0=t_start, dt=step,
                     state_at=lambda t: _ground_gr_state(gs, consts, t))


def _curve_cartesian(curve: GeodesicCurve, t: float) -> np.ndarray:
    """Cartesian pos/vel/acc of an integrated curve at coordinate time t."""
    lam, y = curve.at_time(t)
    dy = np.empty(8)
    kernels.geodesic_rhs_kernel(y, curve.consts.GM, curve.consts.c, dy)
    r, th, ph = y[1], y[2], y[3]
    sin_th, cos_th = math.sin(th), math.cos(th)
    sin_ph, cos_ph = math.sin(ph), math.cos(ph)
    pos = np.array([r * sin_th * cos_ph, r * sin_th * sin_ph, r * cos_th])

    # First and second lambda-derivatives of the Cartesian position, then
    # chain rule to coordinate time: v = x'/t', a = (x'' t' - x' t'')/t'^3.
    rd, thd, phd = y[5], y[6], y[7]
    rdd, thdd, phdd = dy[5], dy[6], dy[7]
    td, tdd = y[4], dy[4]
    er = np.array([sin_th * cos_ph, sin_th * sin_ph, cos_th])
    eth = np.array([cos_th * cos_ph, cos_th * sin_ph, -sin_th])
    eph = np.array([-sin_ph, cos_ph, 0.0])
    xp = rd * er + r * thd * eth + r * sin_th * phd * eph
    xpp = (
        (rdd - r * thd**2 - r * sin_th**2 * phd**2) * er
        + (r * thdd + 2.0 * rd * thd - r * sin_th * cos_th * phd**2) * eth
        + (r * sin_th * phdd + 2.0 * rd * sin_th * phd
           + 2.0 * r * cos_th * thd * phd) * eph
    )
    vel = xp / td
    acc = (xpp * td - xp * tdd) / td**3
    return np.concatenate([pos, vel, acc])


def worldline_from_geodesic(curve: GeodesicCurve, t_start: float,
                            t_end: float,
                            step: float = _WORLDLINE_STEP) -> Worldline:
    """Uniform-grid table of an integrated timelike geodesic."""
    if curve.kind != "timelike":
        raise DomainError("worldlines are timelike curves")
    n = int(math.ceil((t_end - t_start) / step)) + 1
    times = t_start + step * np.arange(n)
    table = np.empty((n, 9))
    for i, t in enumerate(times):
        table[i] = _curve_cartesian(curve, float(t))

    def state_at(t: float):
        lam, _ = curve.at_time(t)
        return curve.event_at(lam)

    return Worldline(table=table, t0=t_start, dt=step, state_at=state_at)


def closest_approach(curve: GeodesicCurve,
                     worldline: Worldline) -> tuple[float, float, float]:
    """Minimum equal-time Euclidean distance ray -> worldline.

    Returns (distance [m], curve parameter at the minimum, worldline time at
    the minimum).  In the weak field the distance along the ray has a single
    minimum, which golden-section refinement isolates.
    """
    t_lo = float(curve.y[0, 0])
    t_hi = float(curve.y[-1, 0])
    if t_hi < worldline.t0 or t_lo > worldline.t_end:
        raise DomainError("ray and worldline do not overlap in time")
    dist, lam_min, _ = kernels.closest_approach_kernel(
        curve.lam, curve.y, curve.f, curve.n,
        worldline.table, worldline.t0, worldline.dt,
    )
    t_min = float(curve.eval(lam_min)[0])
    return float(dist), float(lam_min), t_min


# ---------------------------------------------------------------------------
# Emitter-observer problem


@dataclass(frozen=True)
class DeConfig:
    """Differential-evolution settings for the shooting solver."""

    population: int = 20
    max_generations: int = 40
    mutation: float = 0.7
    crossover: float = 0.9
    shrink: float = 0.65        # per-generation bound contraction
    init_halfwidth: float | None = None  # rad; None = scaled to guess error
    seed: int = 0


@dataclass(frozen=True)
class EopSolution:
    """Solved (or best-effort) null connection for one emission event."""

    emit_event: Event
    recv_event: Event
    curve: GeodesicCurve
    celestial_angles: tuple[float, float]
    guess_angles: tuple[float, float]
    closest_distance: float
    iterations: int
    redshift: float
    converged: bool
    occluded: bool
    recv_lam: float

    @property
    def angle_correction(self) -> tuple[float, float]:
        """Solved angles minus the flat-space aberrated guess.

        This is the slowly varying part of the solution (light bending and
        higher-order retardation), the right quantity to warm-start the
        next epoch with; the raw angles themselves swing with the geometry.
        """
        return (self.celestial_angles[0] - self.guess_angles[0],
                self.celestial_angles[1] - self.guess_angles[1])


def _flat_guess(emit_event: Event, tetrad: Tetrad, worldline: Worldline,
                consts: PhysConsts) -> tuple[float, float, float]:
    """Aberrated flat-space launch angles and flight time for warm seeding.

    Solves the flat retarded reception against the worldline table, maps
    the straight-ray direction into the static frame, and projects the
    resulting null vector onto the emitter tetrad; the projection applies
    the exact special-relativistic aberration.
    """
    th, ph = emit_event.theta, emit_event.phi
    sin_th, cos_th = math.sin(th), math.cos(th)
    pos_e = emit_event.r * np.array([sin_th * math.cos(ph),
                                     sin_th * math.sin(ph), cos_th])

    t_e = emit_event.t
    pos, _ = worldline.position_velocity(t_e)
    delay = float(np.linalg.norm(pos - pos_e)) / consts.c
    for _ in range(30):
        pos, _ = worldline.position_velocity(t_e + delay)
        d = float(np.linalg.norm(pos - pos_e))
        new_delay = d / consts.c
        if abs(new_delay - delay) < 1e-15:
            delay = new_delay
            break
        delay = new_delay
    n_cart = (pos - pos_e) / d

    # Physical components in the static orthonormal frame at the emitter.
    er = np.array([sin_th * math.cos(ph), sin_th * math.sin(ph), cos_th])
    eth = np.array([cos_th * math.cos(ph), cos_th * math.sin(ph), -sin_th])
    eph = np.array([-math.sin(ph), math.cos(ph), 0.0])
    n_r = float(n_cart @ er)
    n_th = float(n_cart @ eth)
    n_ph = float(n_cart @ eph)

    f = 1.0 - consts.r_S / emit_event.r
    k = np.array([
        1.0 / math.sqrt(f),
        consts.c * n_r * math.sqrt(f),
        consts.c * n_th / emit_event.r,
        consts.c * n_ph / (emit_event.r * sin_th),
    ])
    Phi, Psi = wavevector_to_celestial(
        tetrad, FourVector(u=k, parametrization="affine"), consts
    )
    return Phi, Psi, delay


def _min_radius_upto(curve: GeodesicCurve, lam_hi: float) -> float:
    """Smallest radial coordinate along the curve on [0, lam_hi]."""
    lam = curve.lam
    r = curve.y[:, 1]
    n_sec = int(np.searchsorted(lam, lam_hi))
    best = float(curve.eval(lam_hi)[1])
    if n_sec > 0:
        best = min(best, float(np.min(r[:n_sec])))
    invphi = 0.6180339887498949
    for j in range(1, min(n_sec, curve.n - 1)):
        if r[j] <= r[j - 1] and r[j] <= r[j + 1]:
            a, b = float(lam[j - 1]), float(min(lam[j + 1], lam_hi))
            for _ in range(60):
                m1 = b - invphi * (b - a)
                m2 = a + invphi * (b - a)
                if curve.eval(m1)[1] < curve.eval(m2)[1]:
                    b = m2
                else:
                    a = m1
            best = min(best, float(curve.eval(0.5 * (a + b))[1]))
    return best


def solve_eop(emit_event: Event, emit_u: FourVector, worldline: Worldline,
              threshold: float = 1.0,
              de_config: DeConfig = DeConfig(),
              consts: PhysConsts = CONSTS,
              occlusion_radius: float | None = None,
              warm_delta: tuple[float, float] | None = None) -> EopSolution:
    """Find the null geodesic from the emission event to the worldline.

    Shoots rays parametrized by celestial angles in the emitter frame and
    minimizes the closest-approach distance with differential evolution,
    shrinking the angle box around the best member each generation until the
    distance drops below ``threshold``.  Deterministic for a fixed config.
    A ray dipping below ``occlusion_radius`` is flagged occluded, not
    rejected.  A non-converged budget returns the best-so-far solution with
    ``converged`` False.
    """
    if threshold <= 0.0:
        raise DomainError("threshold must be positive")
    if occlusion_radius is None:
        occlusion_radius = consts.R_E
    tetrad = build_tetrad(emit_event, emit_u, consts)
    Phi_flat, Psi_flat, delay = _flat_guess(emit_event, tetrad, worldline,
                                            consts)
    Phi0, Psi0 = Phi_flat, Psi_flat
    if warm_delta is not None:
        Phi0 += warm_delta[0]
        Psi0 += warm_delta[1]
    lam_end = delay * 1.2 + 0.01
    if emit_event.t < worldline.t0 or emit_event.t + lam_end > worldline.t_end:
        raise DomainError("worldline table does not cover the flight window")
    max_step = lam_end / 64.0

    y0 = np.empty(8)
    y0[0] = emit_event.t
    y0[1] = emit_event.r
    y0[2] = emit_event.theta
    y0[3] = emit_event.phi

    def shoot(Phi: float, Psi: float):
        k = celestial_to_wavevector(tetrad, Phi, Psi, consts)
        y0[4:8] = k.u
        return kernels.shoot_kernel(
            y0, lam_end, consts.GM, consts.c, RTOL, _ATOL, max_step,
            _MAX_NODES_NULL, worldline.table, worldline.t0, worldline.dt,
        )

    evals = 0
    best = np.array([Phi0, Psi0])
    _, best_dist, _, _, _ = shoot(Phi0, Psi0)
    evals += 1

    if best_dist > threshold:
        cfg = de_config
        if cfg.init_halfwidth is not None:
            halfwidth = cfg.init_halfwidth
        else:
            # Angle error scales like miss distance over link length.
            halfwidth = 20.0 * best_dist / (delay * consts.c) + 1e-9
        rng = np.random.default_rng(cfg.seed)
        for attempt in range(2):
            width = halfwidth * (4.0 ** attempt)
            center = best.copy()
            pop = center + rng.uniform(-width, width, size=(cfg.population, 2))
            pop[0] = best
            dists = np.empty(cfg.population)
            for i in range(cfg.population):
                _, dists[i], _, _, _ = shoot(pop[i, 0], pop[i, 1])
            evals += cfg.population
            for _ in range(cfg.max_generations):
                ib = int(np.argmin(dists))
                if dists[ib] < best_dist:
                    best_dist = dists[ib]
                    best = pop[ib].copy()
                if best_dist <= threshold:
                    break
                lo = best - width
                hi = best + width
                for i in range(cfg.population):
                    a, b = rng.integers(0, cfg.population, size=2)
                    mutant = best + cfg.mutation * (pop[a] - pop[b])
                    trial = pop[i].copy()
                    j_force = int(rng.integers(0, 2))
                    for j in range(2):
                        if j == j_force or rng.random() < cfg.crossover:
                            trial[j] = mutant[j]
                    np.clip(trial, lo, hi, out=trial)
                    _, d_trial, _, _, _ = shoot(trial[0], trial[1])
                    evals += 1
                    if d_trial < dists[i]:
                        pop[i] = trial
                        dists[i] = d_trial
                width *= cfg.shrink
            ib = int(np.argmin(dists))
            if dists[ib] < best_dist:
                best_dist = dists[ib]
                best = pop[ib].copy()
            if best_dist <= threshold:
                break

    # Re-integrate the winning ray with full dense output for extraction.
    k = celestial_to_wavevector(tetrad, best[0], best[1], consts)
    curve = integrate_geodesic(emit_event, k, lam_end, consts,
                               max_step=max_step)
    dist, lam_min, _ = kernels.closest_approach_kernel(
        curve.lam, curve.y, curve.f, curve.n,
        worldline.table, worldline.t0, worldline.dt,
    )
    # Occlusion is judged only on the emitted leg, up to reception.
    min_r = _min_radius_upto(curve, float(lam_min))
    recv_event, recv_k = curve.event_at(float(lam_min))
    _, recv_u = worldline.state_at(recv_event.t)
    emit_k = FourVector(u=curve.y[0, 4:8].copy(), parametrization="affine")
    z = gr_redshift_from_events(emit_event, emit_k, emit_u,
                                recv_event, recv_k, recv_u, consts)
    return EopSolution(
        emit_event=emit_event,
        recv_event=recv_event,
        curve=curve,
        celestial_angles=(float(best[0]), float(best[1])),
        guess_angles=(Phi_flat, Psi_flat),
        closest_distance=float(dist),
        iterations=evals,
        redshift=z,
        converged=bool(dist <= threshold),
        occluded=bool(min_r < occlusion_radius),
        recv_lam=float(lam_min),
    )


def gr_redshift_from_events(emit_event: Event, emit_k: FourVector,
                            emit_u: FourVector,
                            recv_event: Event, recv_k: FourVector,
                            recv_u: FourVector,
                            consts: PhysConsts = CONSTS) -> float:
    """z = g(u_A, k)|_A / g(u_B, k)|_B - 1 with k the integrated tangent."""
    num = inner(emit_event, emit_u.u, emit_k.u, consts)
    den = inner(recv_event, recv_u.u, recv_k.u, consts)
    return num / den - 1.0


def gr_redshift(sol: EopSolution, emit_u: FourVector, recv_u: FourVector,
                consts: PhysConsts = CONSTS) -> float:
    """Redshift of a solved link from the stored null curve tangents."""
    _, emit_k = sol.curve.event_at(0.0)
    recv_event, recv_k = sol.curve.event_at(sol.recv_lam)
    return gr_redshift_from_events(sol.emit_event, emit_k, emit_u,
                                   recv_event, recv_k, recv_u, consts)


# ---------------------------------------------------------------------------
# Diagnostics used by validation: periapsis advance and light deflection


def measure_periapsis_advance(orbit: KeplerOrbit, n_orbits: int = 6,
                              consts: PhysConsts = CONSTS) -> float:
    """Per-orbit periapsis advance of the integrated timelike geodesic [rad].

    Tracks the osculating Laplace-Runge-Lenz direction sampled once per
    Kepler period, so the periodic part of the osculating elements cancels
    and a linear fit isolates the secular drift.  Direct timing of the
    radius minima cannot reach the needed angular resolution: r(t) is
    quadratically flat at periapsis, which amplifies radius noise into
    periapsis-time noise.
    """
    event, u = timelike_from_kepler(orbit, 0.0, consts)
    T = orbital_period(orbit, consts)
    # Proper-time span slightly past the last sample.
    curve = integrate_geodesic(event, u, T * (n_orbits + 0.02), consts,
                               max_step=20.0, max_nodes=_MAX_NODES_TIMELIKE)
    angles = []
    for k in range(n_orbits + 1):
        t = k * T
        _, y = curve.at_time(t)
        r, ph = y[1], y[3]
        rd = y[5] / y[4]
        phd = y[7] / y[4]
        pos = np.array([r * math.cos(ph), r * math.sin(ph)])
        vel = np.array([rd * math.cos(ph) - r * phd * math.sin(ph),
                        rd * math.sin(ph) + r * phd * math.cos(ph)])
        hz = pos[0] * vel[1] - pos[1] * vel[0]
        # Laplace-Runge-Lenz vector v x h - GM rhat, in-plane components.
        A = np.array([vel[1] * hz, -vel[0] * hz]) - consts.GM * pos / r
        angles.append(math.atan2(A[1], A[0]))
    angles = np.unwrap(np.array(angles))
    ks = np.arange(n_orbits + 1, dtype=float)
    slope = float(np.polyfit(ks, angles, 1)[0])
    return orbit.direction * slope


def measure_null_deflection(r_m_target: float,
                            consts: PhysConsts = CONSTS,
                            r_far: float = 1.0e9) -> tuple[float, float]:
    """Total bending angle of a null ray grazing radius ~ r_m_target.

    Launches the ray from r_far on a flat-space trajectory with impact
    parameter matched to the target periapsis, integrates through closest
    approach, and returns (deflection [rad], measured periapsis radius [m]).
    The start/end truncation at r_far leaves a relative error of order
    r_m/r_far.
    """
    if r_m_target <= consts.r_S * 2.0:
        raise DomainError("periapsis too close to the horizon")
    f_m = 1.0 - consts.r_S / r_m_target
    b = r_m_target / math.sqrt(f_m)
    x0 = -math.sqrt(r_far**2 - b**2)
    r0 = r_far
    phi0 = math.atan2(b, x0)
    # Coordinate direction +x expressed in polar components at the start.
    dr = math.cos(phi0)
    dph = -math.sin(phi0) / r0
    f0 = 1.0 - consts.r_S / r0
    # Null normalization with k^t = 1: c^2 f = dr^2/f + r^2 dphi^2 scaled.
    speed = math.sqrt(dr**2 / f0 + r0**2 * dph**2)
    scale = consts.c * math.sqrt(f0) / speed
    event = Event(t=0.0, r=r0, phi=phi0)
    k = FourVector(u=np.array([1.0, dr * scale, 0.0, dph * scale]),
                   parametrization="affine")
    span = 2.2 * abs(x0) / consts.c
    curve = integrate_geodesic(event, k, span, consts,
                               max_step=span / 512.0, max_nodes=_MAX_NODES_NULL)

    r_min = float(np.min(curve.y[:, 1]))
    j = int(np.argmin(curve.y[:, 1]))
    if 0 < j < curve.n - 1:
        a, bb = float(curve.lam[j - 1]), float(curve.lam[j + 1])
        invphi = 0.6180339887498949
        for _ in range(80):
            m1 = bb - invphi * (bb - a)
            m2 = a + invphi * (bb - a)
            if curve.eval(m1)[1] < curve.eval(m2)[1]:
                bb = m2
            else:
                a = m1
        r_min = float(curve.eval(0.5 * (a + bb))[1])

    def direction(y):
        r, ph = y[1], y[3]
        rd, phd = y[5], y[7]
        v = np.array([rd * math.cos(ph) - r * phd * math.sin(ph),
                      rd * math.sin(ph) + r * phd * math.cos(ph)])
        return v / np.linalg.norm(v)

    # Use the last node with r back out near the start radius.
    mask = np.nonzero(curve.y[:, 1] >= 0.98 * r_far)[0]
    tail = int(mask[-1]) if mask.size else curve.n - 1
    d_in = direction(curve.y[0])
    d_out = direction(curve.y[tail])
    # atan2 of the cross/dot pair resolves microradian angles that a bare
    # arccos of the dot product rounds to zero.
    cross = d_in[0] * d_out[1] - d_in[1] * d_out[0]
    return abs(math.atan2(cross, float(d_in @ d_out))), r_min


# ---------------------------------------------------------------------------
# Deviation analysis

Endpoint = KeplerOrbit | GroundStation


@dataclass(frozen=True)
class DeviationRecord:
    """One epoch of the GR-vs-analytic redshift comparison."""

    t_e: float
    z_gr: float
    z_approx: float
    deviation: float
    los: bool
    occluded: bool
    closest_distance: float
    converged: bool


def _gr_worldline(endpoint: Endpoint, t_start: float, t_end: float,
                  consts: PhysConsts) -> Worldline:
    if isinstance(endpoint, GroundStation):
        return worldline_from_ground(endpoint, t_start, t_end,
                                     consts=consts)
    event, u = timelike_from_kepler(endpoint, 0.0, consts)
    t_start = max(t_start, 0.0)  # the geodesic starts at t = 0
    # Proper-time span with margin; dt/dtau stays within parts in 1e9 of 1.
    curve = integrate_geodesic(event, u, t_end * 1.0001 + 60.0, consts)
    return worldline_from_geodesic(curve, t_start, t_end)


def _analytic_trajectory(endpoint: Endpoint, consts: PhysConsts):
    if isinstance(endpoint, GroundStation):
        return lambda t: ground_station_state(endpoint, t, consts)
    return lambda t: kepler_state(endpoint, t, consts)


def _deviation_block(emitter: Endpoint, receiver: Endpoint,
                     epochs: list[float], threshold: float,
                     de_config: DeConfig, occlusion_radius: float,
                     consts: PhysConsts) -> list[DeviationRecord]:
    """Sequential warm-started sweep over one contiguous epoch block."""
    t_lo = min(epochs)
    t_hi = max(epochs)
    recv_wl = _gr_worldline(receiver, t_lo - 10.0, t_hi + 10.0, consts)
    if isinstance(emitter, GroundStation):
        emit_state = lambda t: _ground_gr_state(emitter, consts, t)
    else:
        ev0, u0 = timelike_from_kepler(emitter, 0.0, consts)
        emit_curve = integrate_geodesic(ev0, u0, (t_hi + 20.0) * 1.0001,
                                        consts)

        def emit_state(t):
            lam, _ = emit_curve.at_time(t)
            return emit_curve.event_at(lam)

    emit_traj = _analytic_trajectory(emitter, consts)
    recv_traj = _analytic_trajectory(receiver, consts)

    records: list[DeviationRecord] = []
    warm: tuple[float, float] | None = None
    for t_e in epochs:
        emit_event, emit_u = emit_state(t_e)
        sol = solve_eop(emit_event, emit_u, recv_wl, threshold=threshold,
                        de_config=de_config, consts=consts,
                        occlusion_radius=occlusion_radius,
                        warm_delta=warm)
        if not sol.converged and warm is not None:
            # The stale warm start may sit in the wrong basin; cold retry.
            sol = solve_eop(emit_event, emit_u, recv_wl, threshold=threshold,
                            de_config=de_config, consts=consts,
                            occlusion_radius=occlusion_radius)
        warm = sol.angle_correction
        bd = shift_breakdown(emit_traj, recv_traj, t_e,
                             occlusion_radius, consts)
        records.append(DeviationRecord(
            t_e=t_e,
            z_gr=sol.redshift,
            z_approx=bd.z_total,
            deviation=sol.redshift - bd.z_total,
            los=bd.los,
            occluded=sol.occluded,
            closest_distance=sol.closest_distance,
            converged=sol.converged,
        ))
    return records


def deviation_analysis(emitter: Endpoint, receiver: Endpoint,
                       epochs: np.ndarray | list[float],
                       threshold: float = 0.01,
                       de_config: DeConfig = DeConfig(),
                       occlusion_radius: float | None = None,
                       consts: PhysConsts = CONSTS,
                       workers: int = 1) -> list[DeviationRecord]:
    """Per-epoch GR redshift vs the analytic total shift for a link.

    The default threshold is tighter than the single-solve default because
    deviation signals sit orders below the shifts themselves.  With
    ``workers`` > 1 the epoch list splits into contiguous blocks solved in
    separate processes; warm starts chain within a block and reset at block
    boundaries.
    """
    epochs = [float(t) for t in epochs]
    if not epochs:
        return []
    if occlusion_radius is None:
        occlusion_radius = consts.R_E
    if workers <= 1 or len(epochs) < 2 * workers:
        return _deviation_block(emitter, receiver, epochs, threshold,
                                de_config, occlusion_radius, consts)
    blocks = np.array_split(np.asarray(epochs), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_deviation_block, emitter, receiver,
                        [float(t) for t in blk], threshold, de_config,
                        occlusion_radius, consts)
            for blk in blocks if blk.size
        ]
        out: list[DeviationRecord] = []
        for fut in futures:
            out.extend(fut.result())
    return out
