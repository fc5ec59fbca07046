"""Mode overlap of frequency-shifted Gaussian signals and the PLOB
secret-key-rate bound of the resulting lossy channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import DomainError
from .redshift import ShiftBreakdown

_LN4_SQRT = math.sqrt(math.log(4.0))

# 1550 nm carrier, the usual telecom band choice.
DEFAULT_OMEGA0 = 2.0 * math.pi * 299792458.0 / 1550e-9


@dataclass(frozen=True)
class SignalSpec:
    """Gaussian signal spectrum and channel baseline.

    ``delta_nu`` and ``ratio_R`` are derived from (omega0, sigma) so the
    bandwidth relation delta_nu = sigma*sqrt(ln 4) holds by construction.
    """

    omega0: float           # carrier angular frequency [rad/s]
    sigma: float            # Gaussian width [rad/s]
    eta0: float = 0.4       # baseline transmissivity

    def __post_init__(self):
        if self.omega0 <= 0.0 or self.sigma <= 0.0:
            raise DomainError("carrier frequency and width must be positive")
        if not 0.0 < self.eta0 <= 1.0:
            raise DomainError("baseline transmissivity must be in (0, 1]")

    @property
    def delta_nu(self) -> float:
        return self.sigma * _LN4_SQRT

    @property
    def ratio_R(self) -> float:
        return self.omega0 / self.delta_nu

    @classmethod
    def from_ratio(cls, ratio: float, eta0: float = 0.4,
                   omega0: float = DEFAULT_OMEGA0) -> "SignalSpec":
        """Build a spec from the peak-frequency-to-bandwidth ratio."""
        return cls(omega0=omega0, sigma=omega0 / (ratio * _LN4_SQRT), eta0=eta0)


def gaussian_overlap(z: float, spec: SignalSpec) -> float:
    """Overlap of a Gaussian spectral amplitude with its shifted copy.

    gamma(z) = sqrt(2(z+1)/(z(z+2)+2)) * exp(-omega0^2 z^2/(4 sigma^2 (z(z+2)+2)))

    Real-valued for Gaussian amplitudes, so the channel carries no extra
    phase; gamma(0) = 1.
    """
    if z <= -1.0:
        raise DomainError("frequency shift z must exceed -1")
    q = z * (z + 2.0) + 2.0
    prefactor = math.sqrt(2.0 * (z + 1.0) / q)
    exponent = -(spec.omega0 * z) ** 2 / (4.0 * spec.sigma**2 * q)
    return prefactor * math.exp(exponent)


def gaussian_overlap_approx(z: float, ratio_R: float) -> float:
    """Small-shift, narrow-band overlap gamma = 2^(-R^2 z^2 / 4)."""
    return 2.0 ** (-0.25 * (ratio_R * z) ** 2)


def plob_bound(eta: float) -> float:
    """Secret-key capacity bound of a pure-loss channel, -log2(1 - eta)."""
    if not 0.0 <= eta < 1.0:
        raise DomainError("transmissivity must be in [0, 1)")
    return -math.log2(1.0 - eta)


def plob_small_z(z: float, ratio_R: float, eta0: float) -> float:
    """Quadratic expansion of the PLOB bound in the frequency shift.

    P(z) = -log2(1-eta0) - eta0/(1-eta0) * (R^2/4) * z^2 + O(z^4)
    """
    return (
        -math.log2(1.0 - eta0)
        - eta0 / (1.0 - eta0) * 0.25 * (ratio_R * z) ** 2
    )


def capacity_for_shift(z: float, spec: SignalSpec) -> float:
    """PLOB bound for the channel eta0 * gamma(z)."""
    return plob_bound(spec.eta0 * gaussian_overlap(z, spec))


def capacity_timeseries(
    breakdowns: Sequence[ShiftBreakdown],
    spec: SignalSpec,
    mode: str = "corrected",
) -> list[tuple[float, float | None]]:
    """PLOB bound per emission epoch.

    ``corrected`` assumes the instantaneous longitudinal Doppler has been
    compensated, leaving z_corr as the residual mismatch; ``uncorrected``
    uses the full z_total.  Epochs without line of sight carry None, not
    zero, so downstream averaging can tell gaps from dead channels.
    """
    if mode not in ("corrected", "uncorrected"):
        raise DomainError(f"unknown capacity mode {mode!r}")
    out: list[tuple[float, float | None]] = []
    for b in breakdowns:
        if not b.los:
            out.append((b.t_e, None))
            continue
        z = b.z_corr if mode == "corrected" else b.z_total
        out.append((b.t_e, capacity_for_shift(z, spec)))
    return out
