"""Link geometry: occlusion, ray vectors, and the flat-space retarded
reception solver that fixes the reception event for the exact Doppler
formula.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import CONSTS, DomainError, NumericError, PhysConsts, StateVector

Trajectory = Callable[[float], StateVector]


@dataclass(frozen=True)
class LinkSample:
    """One emission epoch of a link, with instantaneous and retarded views."""

    emit: StateVector           # A at emission t_e
    recv_instant: StateVector   # B at t_e
    recv_retarded: StateVector  # B at reception t_r
    N0: np.ndarray              # unit ray at emission (instantaneous)
    N_AB: np.ndarray            # unit ray emission -> retarded reception
    d: float                    # instantaneous separation [m]
    delay: float                # t_r - t_e [s]
    los: bool


def line_of_sight(rA: np.ndarray, rB: np.ndarray,
                  occluder_radius: float = CONSTS.R_E) -> bool:
    """True iff the chord rA -> rB misses the sphere of the given radius.

    False only when the closest point of the segment to the origin lies
    strictly between the endpoints and within the occluder.  Symmetric in
    its endpoints.
    """
    rA = np.asarray(rA, dtype=float)
    rB = np.asarray(rB, dtype=float)
    # Relative slack keeps surface stations (|r| = R_E up to rounding) legal.
    limit = occluder_radius * (1.0 - 1e-12)
    if np.linalg.norm(rA) < limit or np.linalg.norm(rB) < limit:
        raise DomainError("link endpoint inside the occluding sphere")
    chord = rB - rA
    cc = float(chord @ chord)
    if cc == 0.0:
        return True
    s = -float(rA @ chord) / cc
    if s <= 0.0 or s >= 1.0:
        return True
    closest = rA + s * chord
    return float(np.linalg.norm(closest)) >= occluder_radius


def unit_ray_instantaneous(emit: StateVector, recv_instant: StateVector) -> np.ndarray:
    """N0 = (r_B - r_A)/|r_B - r_A| with both states at the emission epoch."""
    diff = recv_instant.r - emit.r
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise DomainError("coincident endpoints have no ray direction")
    return diff / d


def unit_ray_retarded_firstorder(N0: np.ndarray, v_B0: np.ndarray,
                                 c: float = CONSTS.c) -> np.ndarray:
    """First-order ray rotation from receiver motion during propagation.

    N_AB = N0*(1 - N0.v_B0/c) + v_B0/c, accurate to O(v^2/c^2); reduces to
    N0 for a static receiver.
    """
    N0 = np.asarray(N0, dtype=float)
    v_B0 = np.asarray(v_B0, dtype=float)
    return N0 * (1.0 - float(N0 @ v_B0) / c) + v_B0 / c


_RETARDED_TOL_M = 1e-9
_RETARDED_MAX_ITER = 50


def retarded_reception(receiver: Trajectory, emit: StateVector,
                       consts: PhysConsts = CONSTS) -> tuple[float, StateVector]:
    """Solve c*(t_r - t_e) = |r_B(t_r) - r_A(t_e)| by fixed-point iteration.

    Starts from the instantaneous delay d/c; the iteration contracts with
    factor |v_B|/c < 1.  The tolerance is 1e-9 m widened to the rounding
    floor of the distance itself, which exceeds 1e-9 m beyond ~4500 km.
    """
    t_e = emit.t
    state = receiver(t_e)
    delay = float(np.linalg.norm(state.r - emit.r)) / consts.c
    tol = max(_RETARDED_TOL_M, 32.0 * np.finfo(float).eps * delay * consts.c)
    residual = float("inf")
    for _ in range(_RETARDED_MAX_ITER):
        t_r = t_e + delay
        state = receiver(t_r)
        d_ret = float(np.linalg.norm(state.r - emit.r))
        residual = d_ret - consts.c * delay
        if abs(residual) < tol:
            return t_r, state
        delay = d_ret / consts.c
    raise NumericError("retarded reception did not converge", residual)


def sample_link(emitter: Trajectory, receiver: Trajectory, t_e: float,
                occlusion_radius: float = CONSTS.R_E,
                consts: PhysConsts = CONSTS) -> LinkSample:
    """Assemble the full link geometry record for one emission epoch."""
    emit = emitter(t_e)
    recv0 = receiver(t_e)
    diff = recv0.r - emit.r
    d = float(np.linalg.norm(diff))
    N0 = diff / d
    t_r, recv_ret = retarded_reception(receiver, emit, consts)
    diff_ret = recv_ret.r - emit.r
    N_AB = diff_ret / float(np.linalg.norm(diff_ret))
    return LinkSample(
        emit=emit,
        recv_instant=recv0,
        recv_retarded=recv_ret,
        N0=N0,
        N_AB=N_AB,
        d=d,
        delay=t_r - t_e,
        los=line_of_sight(emit.r, recv0.r, occlusion_radius),
    )
