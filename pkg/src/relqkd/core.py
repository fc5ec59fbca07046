"""Physical constants, kinematic state type, and the Kepler-equation solver.

Everything downstream works in SI units with angles in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Input outside the physically supported domain."""


class NumericError(RuntimeError):
    """An iterative routine failed to converge; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class PhysConsts:
    """Earth/light constants. ``schwarzschild_radius`` is always derived."""

    GM: float = 3.986004418e14      # m^3/s^2
    c: float = 299792458.0          # m/s
    R_E: float = 6378137.0          # m
    omega_E: float = 2.0 * math.pi / 86400.0  # rad/s, 24 h rotation

    def __post_init__(self):
        for name in ("GM", "c", "R_E", "omega_E"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"constant {name} must be positive")

    @property
    def r_S(self) -> float:
        """Schwarzschild radius 2*GM/c^2 of the central mass."""
        return 2.0 * self.GM / self.c**2


CONSTS = PhysConsts()


@dataclass(frozen=True)
class StateVector:
    """Newtonian kinematic state of a link endpoint at coordinate time ``t``.

    ``a`` is optional; it is required only by the retardation formula and is
    always analytic (point-mass gravity or centripetal), never differenced.
    """

    t: float
    r: np.ndarray
    v: np.ndarray
    a: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.a is not None:
            object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        if float(np.linalg.norm(self.v)) >= CONSTS.c:
            raise DomainError("state speed must be below c")

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.r))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.v))


_KEPLER_TOL = 1e-14
_KEPLER_MAX_ITER = 100


def solve_kepler(mean_anomaly: float, eccentricity: float) -> float:
    """Invert Kepler's equation M = E - ecc*sin(E) for the eccentric anomaly.

    Newton iteration seeded with E0 = M + ecc*sin(M); any Newton step that
    leaves the current bracket falls back to bisection.  The returned E is
    continuous in M: solve_kepler(M + 2*pi, ecc) = solve_kepler(M, ecc) + 2*pi.
    """
    if not (0.0 <= eccentricity < 1.0):
        raise DomainError(
            f"eccentricity must be in [0, 1), got {eccentricity}"
        )
    if not math.isfinite(mean_anomaly):
        raise DomainError("mean anomaly must be finite")
    if eccentricity == 0.0:
        return mean_anomaly

    # Reduce to [0, 2*pi) and restore the winding number afterwards.
    turns = math.floor(mean_anomaly / (2.0 * math.pi))
    m = mean_anomaly - 2.0 * math.pi * turns

    lo, hi = 0.0, 2.0 * math.pi
    e_anom = m + eccentricity * math.sin(m)
    residual = e_anom - eccentricity * math.sin(e_anom) - m
    for _ in range(_KEPLER_MAX_ITER):
        if abs(residual) < _KEPLER_TOL:
            break
        if hi - lo < 8.0 * math.ulp(math.pi):
            # bracket collapsed to rounding width; residual is at its floor
            break
        if residual > 0.0:
            hi = e_anom
        else:
            lo = e_anom
        step = residual / (1.0 - eccentricity * math.cos(e_anom))
        candidate = e_anom - step
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        e_anom = candidate
        residual = e_anom - eccentricity * math.sin(e_anom) - m
    else:
        raise NumericError("Kepler solver did not converge", residual)

    return e_anom + 2.0 * math.pi * turns
