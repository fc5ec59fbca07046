"""Relativistic frequency shifts and QKD capacity for optical satellite
links: Keplerian link geometry, shift decomposition, PLOB bounds, and a
full Schwarzschild geodesic engine for validating the analytic model.
"""

from .core import CONSTS, DomainError, NumericError, PhysConsts, StateVector, solve_kepler
from .orbits import GroundStation, KeplerOrbit, kepler_state, orbital_period
from .qkd import SignalSpec, capacity_for_shift, gaussian_overlap, plob_bound
from .redshift import ShiftBreakdown, shift_breakdown, zero_shift_radius
from .scenarios import ScenarioConfig, parse_config, preset, preset_names, run_scenario

__all__ = [
    "CONSTS",
    "DomainError",
    "NumericError",
    "PhysConsts",
    "StateVector",
    "solve_kepler",
    "GroundStation",
    "KeplerOrbit",
    "kepler_state",
    "orbital_period",
    "SignalSpec",
    "capacity_for_shift",
    "gaussian_overlap",
    "plob_bound",
    "ShiftBreakdown",
    "shift_breakdown",
    "zero_shift_radius",
    "ScenarioConfig",
    "parse_config",
    "preset",
    "preset_names",
    "run_scenario",
]

__version__ = "0.1.0"
