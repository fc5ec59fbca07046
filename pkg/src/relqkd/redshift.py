"""Frequency-shift formulas: exact retarded longitudinal Doppler, the
instantaneous/retardation decomposition, relativistic contributions, and
their Kepler-orbit and ground-station specializations.

All shifts are dimensionless z = omega_emitter/omega_receiver - 1 with A
the emitter and B the receiver throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CONSTS, DomainError, PhysConsts, StateVector
from .linkgeo import LinkSample, Trajectory, sample_link
from .orbits import GroundStation, KeplerOrbit, vis_viva_speed


@dataclass(frozen=True)
class ShiftBreakdown:
    """Per-epoch decomposition of the link frequency shift."""

    t_e: float
    z_long0: float        # instantaneous longitudinal Doppler
    z_ret: float          # retardation correction
    z_rel0: float         # instantaneous relativistic shift
    z_corr: float         # z_ret + z_rel0
    z_long_exact: float   # retarded longitudinal Doppler (exact events)
    z_total: float        # z_long_exact + relativistic term at solved events
    los: bool


def z_longitudinal_exact(link: LinkSample, consts: PhysConsts = CONSTS) -> float:
    """Longitudinal Doppler evaluated at the solved retarded reception event.

    z = N.(v_B - v_A)/c + (N.(v_B - v_A))(N.v_B)/c^2 with N the unit ray
    from emission to reception and v_B taken at reception.
    """
    N = link.N_AB
    dv = link.recv_retarded.v - link.emit.v
    first = float(N @ dv) / consts.c
    return first + first * float(N @ link.recv_retarded.v) / consts.c


def z_long_instant(emitA: StateVector, recvB: StateVector,
                   consts: PhysConsts = CONSTS) -> float:
    """Longitudinal Doppler evaluated with instantaneous quantities.

    Same formula as the exact shift but with N0 and v_B0 taken at the
    emission epoch.  The second-order factor must be kept here: the
    retardation correction only tracks the change of the first-order term,
    so dropping it would leave an O(v^2/c^2) hole in the decomposition
    z_long_exact = z_long0 + z_ret.
    """
    diff = recvB.r - emitA.r
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise DomainError("coincident endpoints")
    N0 = diff / d
    first = float(N0 @ (recvB.v - emitA.v)) / consts.c
    return first + first * float(N0 @ recvB.v) / consts.c


def z_retardation(emitA: StateVector, recvB: StateVector,
                  d: float | None = None,
                  consts: PhysConsts = CONSTS) -> float:
    """Retardation correction to the instantaneous longitudinal Doppler.

    z_ret = [v_B0.(v_B0 - v_A0) - (N0.(v_B0 - v_A0))(N0.v_B0)
             + d*(a_B0.N0)] / c^2

    The first two terms track the rotation of the ray during the flight
    time, the last the receiver's velocity change; it needs the receiver
    acceleration and is not symmetric between up- and downlink.
    """
    if recvB.a is None:
        raise DomainError("retardation needs the receiver acceleration")
    diff = recvB.r - emitA.r
    sep = float(np.linalg.norm(diff))
    if d is None:
        d = sep
    N0 = diff / sep
    dv = recvB.v - emitA.v
    c2 = consts.c**2
    return (
        float(recvB.v @ dv)
        - float(N0 @ dv) * float(N0 @ recvB.v)
        + d * float(recvB.a @ N0)
    ) / c2


def z_rel_instant(emitA: StateVector, recvB: StateVector,
                  consts: PhysConsts = CONSTS) -> float:
    """Instantaneous relativistic shift (transverse Doppler + gravitational).

    z = [ (v_A^2 - v_B^2)/2 + GM*(1/r_A - 1/r_B) ] / c^2; antisymmetric
    under exchange of the two endpoints.
    """
    rA = emitA.radius
    rB = recvB.radius
    if rA == 0.0 or rB == 0.0:
        raise DomainError("states at the origin have no defined potential")
    return (
        0.5 * (emitA.speed**2 - recvB.speed**2)
        + consts.GM * (1.0 / rA - 1.0 / rB)
    ) / consts.c**2


def z_correction(z_ret: float, z_rel0: float) -> float:
    """Total correction to the instantaneous longitudinal Doppler."""
    return z_ret + z_rel0


def z_rel_kepler(orbitA: KeplerOrbit, orbitB: KeplerOrbit,
                 rA: float, rB: float,
                 consts: PhysConsts = CONSTS) -> float:
    """Relativistic shift between two Kepler orbits as a function of radii.

    (GM/c^2)*(2/r_A - 2/r_B - 1/(2 a_A) + 1/(2 a_B)); the `eccentricity
    effect' form, equal to z_rel_instant for vis-viva-consistent speeds.
    """
    # vis_viva_speed validates the radial ranges.
    vis_viva_speed(orbitA, rA, consts)
    vis_viva_speed(orbitB, rB, consts)
    return consts.GM / consts.c**2 * (
        2.0 / rA - 2.0 / rB - 0.5 / orbitA.a + 0.5 / orbitB.a
    )


def z_rel_ground(gs: GroundStation, orbitB: KeplerOrbit, rB: float,
                 consts: PhysConsts = CONSTS) -> float:
    """Relativistic shift for a ground-station emitter and orbiting receiver.

    (omega_E*R_E)^2/(2c^2) + (GM/c^2)*(1/R_E + 1/(2 a_B) - 2/r_B) with the
    station's coordinate speed omega_E*R_E entering the transverse term.
    """
    vis_viva_speed(orbitB, rB, consts)
    R = gs.radius
    return (
        (consts.omega_E * R) ** 2 / (2.0 * consts.c**2)
        + consts.GM / consts.c**2 * (1.0 / R + 0.5 / orbitB.a - 2.0 / rB)
    )


def zero_shift_radius(consts: PhysConsts = CONSTS) -> float:
    """Circular-orbit radius at which the ground-relative shift vanishes.

    R* = (3/2) * [ (omega_E*R_E)^2/(2GM) + 1/R_E ]^{-1}; about 9551 km,
    close to 1.5 Earth radii.
    """
    R = consts.R_E
    return 1.5 / ((consts.omega_E * R) ** 2 / (2.0 * consts.GM) + 1.0 / R)


@dataclass(frozen=True)
class GravLimitResult:
    """Gravitational parts of z_rel0 + z_ret for a radial configuration."""

    grav_sum: float           # combined gravitational terms [dimensionless]
    scale: float              # reference magnitude for the regime
    coefficient: float        # grav_sum / scale
    receiver_residual: float  # receiver potential term + retardation term


def limit_case_gravity(link_kind: str, regime: str,
                       r_b: float = 7.0e6, separation: float | None = None,
                       consts: PhysConsts = CONSTS) -> GravLimitResult:
    """Evaluate the gravitational terms for radial transmission limits.

    The configuration is the radial one with N0.r_B0 = +r_B0 for an uplink
    and -r_B0 for a downlink, the receiver B free-falling at radius r_b,
    and the companion radius fixed by r_A = r_B - separation.  The
    gravitational pieces are GM*(1/r_A - 1/r_B)/c^2 from the instantaneous
    relativistic shift and d*(a_B.N0)/c^2 from retardation.

    Near regime (separation << r_b): the sum cancels to O((d/r)^2) for the
    uplink and doubles to 2*GM*d/(c^2 r_b^2) for the downlink; ``scale`` is
    GM*d/(c^2 r_b^2).  Far regime (r_A << r_b ~ d): the receiver term
    GM/(c^2 r_b) cancels for the downlink and doubles for the uplink;
    ``scale`` is GM/(c^2 r_b).
    """
    if link_kind not in ("up", "down"):
        raise DomainError(f"unknown link kind {link_kind!r}")
    if regime not in ("near", "far"):
        raise DomainError(f"unknown regime {regime!r}")
    ray_sign = 1.0 if link_kind == "up" else -1.0
    if regime == "near":
        d = 1e-4 * r_b if separation is None else separation
        if not 0.0 < d < r_b:
            raise DomainError("near regime needs 0 < separation < r_b")
        r_a = r_b - d
        scale = consts.GM * d / (consts.c**2 * r_b**2)
    else:
        r_a = r_b / 100.0 if separation is None else r_b - separation
        if not 0.0 < r_a < r_b:
            raise DomainError("far regime needs the companion well inside r_b")
        d = r_b - r_a
        scale = consts.GM / (consts.c**2 * r_b)

    c2 = consts.c**2
    grav_rel0 = consts.GM * (1.0 / r_a - 1.0 / r_b) / c2
    # a_B = -GM/r_b^2 * rhat, so a_B.N0 = -ray_sign * GM/r_b^2.
    grav_ret = -d * ray_sign * consts.GM / (r_b**2 * c2)
    total = grav_rel0 + grav_ret
    receiver_residual = grav_ret - consts.GM / (r_b * c2)
    return GravLimitResult(grav_sum=total, scale=scale,
                           coefficient=total / scale,
                           receiver_residual=receiver_residual)


def radial_gravity_terms(emitA: StateVector, recvB: StateVector,
                         N0: np.ndarray,
                         consts: PhysConsts = CONSTS) -> tuple[float, float]:
    """Gravitational parts of (z_rel0, z_ret) for an explicitly radial link.

    Raises unless the ray is radial at the receiver, |N0.rhat_B| = 1.
    """
    rhat = recvB.r / recvB.radius
    if abs(abs(float(np.asarray(N0) @ rhat)) - 1.0) > 1e-9:
        raise DomainError("configuration is not radial at the receiver")
    d = float(np.linalg.norm(recvB.r - emitA.r))
    c2 = consts.c**2
    grav_rel0 = consts.GM * (1.0 / emitA.radius - 1.0 / recvB.radius) / c2
    grav_ret = d * float(np.asarray(recvB.a) @ np.asarray(N0)) / c2
    return grav_rel0, grav_ret


def shift_breakdown(emitter: Trajectory, receiver: Trajectory, t_e: float,
                    occlusion_radius: float = CONSTS.R_E,
                    consts: PhysConsts = CONSTS) -> ShiftBreakdown:
    """Compose link geometry and every shift contribution for one epoch."""
    link = sample_link(emitter, receiver, t_e, occlusion_radius, consts)
    zl0 = z_long_instant(link.emit, link.recv_instant, consts)
    zret = z_retardation(link.emit, link.recv_instant, link.d, consts)
    zr0 = z_rel_instant(link.emit, link.recv_instant, consts)
    zle = z_longitudinal_exact(link, consts)
    z_rel_exact = z_rel_instant(link.emit, link.recv_retarded, consts)
    return ShiftBreakdown(
        t_e=t_e,
        z_long0=zl0,
        z_ret=zret,
        z_rel0=zr0,
        z_corr=z_correction(zret, zr0),
        z_long_exact=zle,
        z_total=zle + z_rel_exact,
        los=link.los,
    )
