import math

import numpy as np
import pytest

from relqkd.core import CONSTS, DomainError, StateVector
from relqkd.orbits import (
    GroundStation,
    KeplerOrbit,
    ground_station_state,
    kepler_state,
    vis_viva_speed,
)
from relqkd.redshift import (
    limit_case_gravity,
    radial_gravity_terms,
    shift_breakdown,
    z_correction,
    z_long_instant,
    z_longitudinal_exact,
    z_rel_ground,
    z_rel_instant,
    z_rel_kepler,
    z_retardation,
    zero_shift_radius,
)


def zero_shift_bisection_oracle():
    """Bracket the circular radius where the ground-relative shift vanishes."""
    gs = GroundStation()

    def g(r):
        return z_rel_ground(gs, KeplerOrbit(a=r), r)

    lo, hi = 7e6, 2e7
    assert g(lo) * g(hi) < 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(lo) * g(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestDecomposition:
    def test_exact_minus_instant_equals_retardation(self):
        """z_long_exact = z_long0 + z_ret to O(v^3/c^3) on random links."""
        rng = np.random.default_rng(3)
        gs = GroundStation()
        for _ in range(50):
            orb = KeplerOrbit(
                a=rng.uniform(7e6, 5e7),
                ecc=rng.uniform(0.0, 0.05),
                argp=rng.uniform(0, 2 * math.pi),
            )
            t_e = float(rng.uniform(0, 86400))
            from relqkd.linkgeo import sample_link

            link = sample_link(lambda t: ground_station_state(gs, t),
                               lambda t: kepler_state(orb, t), t_e)
            z_exact = z_longitudinal_exact(link)
            z0 = z_long_instant(link.emit, link.recv_instant)
            zr = z_retardation(link.emit, link.recv_instant, link.d)
            assert abs(z_exact - (z0 + zr)) < 1e-13

    def test_breakdown_total_consistency(self):
        orb = KeplerOrbit(a=4.2248e7, ecc=0.4)
        gs = GroundStation()
        bd = shift_breakdown(lambda t: ground_station_state(gs, t),
                             lambda t: kepler_state(orb, t), 777.0)
        assert bd.z_corr == bd.z_ret + bd.z_rel0
        # z_total carries the relativistic term at the solved events; it can
        # differ from z_rel0 only by the drift over the light-flight time
        assert abs(bd.z_total - (bd.z_long_exact + bd.z_rel0)) < 1e-13

    def test_z_correction(self):
        assert z_correction(1e-11, 2e-11) == pytest.approx(3e-11)


class TestRelativisticShift:
    def test_antisymmetric(self):
        a = StateVector(t=0, r=[7e6, 0, 0], v=[0, 7500, 0])
        b = StateVector(t=0, r=[0, 4.2e7, 0], v=[3000, 0, 0])
        assert z_rel_instant(a, b) == pytest.approx(-z_rel_instant(b, a))

    def test_kepler_form_equals_instantaneous(self):
        """Vis-viva turns the kinematic formula into the two-axis form."""
        rng = np.random.default_rng(5)
        for _ in range(1000):
            orbA = KeplerOrbit(a=rng.uniform(7e6, 8e7),
                               ecc=rng.uniform(0.0, 0.05))
            orbB = KeplerOrbit(a=rng.uniform(7e6, 8e7),
                               ecc=rng.uniform(0.0, 0.05))
            rA = rng.uniform(orbA.periapsis, orbA.apoapsis)
            rB = rng.uniform(orbB.periapsis, orbB.apoapsis)
            # random directions, speeds fixed by vis-viva
            dirA = rng.normal(size=3)
            dirB = rng.normal(size=3)
            stA = StateVector(t=0, r=[rA, 0, 0],
                              v=dirA / np.linalg.norm(dirA)
                              * vis_viva_speed(orbA, rA))
            stB = StateVector(t=0, r=[0, rB, 0],
                              v=dirB / np.linalg.norm(dirB)
                              * vis_viva_speed(orbB, rB))
            assert abs(z_rel_kepler(orbA, orbB, rA, rB)
                       - z_rel_instant(stA, stB)) < 1e-15

    def test_ground_form(self):
        gs = GroundStation()
        orb = KeplerOrbit(a=4.2248e7)
        st_gs = ground_station_state(gs, 0.0)
        st_orb = kepler_state(orb, 0.0)
        assert z_rel_ground(gs, orb, st_orb.radius) == pytest.approx(
            z_rel_instant(st_gs, st_orb), abs=1e-24
        )


class TestZeroShiftRadius:
    def test_value(self):
        assert zero_shift_radius() / 1e3 == pytest.approx(9550.77, abs=0.01)

    def test_matches_bisection_oracle(self):
        assert zero_shift_radius() == pytest.approx(
            zero_shift_bisection_oracle(), abs=1.0
        )

    def test_shift_vanishes_there(self):
        r = zero_shift_radius()
        assert abs(z_rel_ground(GroundStation(), KeplerOrbit(a=r), r)) < 1e-16


class TestLimitCases:
    def test_near_uplink_cancellation_coefficient(self):
        """Residual after cancellation is quadratic in d/r with a small
        coefficient; fitted over two decades of separation."""
        r_b = 7e6
        ratios = np.array([1e-5, 1e-4, 1e-3])
        coeffs = []
        for q in ratios:
            res = limit_case_gravity("up", "near", r_b=r_b,
                                     separation=q * r_b)
            coeffs.append(res.coefficient / q)  # residual / (d/r)^2 scale
        coeffs = np.array(coeffs)
        assert np.all(np.abs(coeffs) < 3.0)
        # quadratic behavior: normalized coefficient is separation-independent
        assert np.ptp(coeffs) / abs(coeffs[0]) < 0.01

    def test_near_downlink_doubling(self):
        res = limit_case_gravity("down", "near", separation=1.0)
        assert res.coefficient == pytest.approx(2.0, rel=1e-6)

    def test_far_downlink_receiver_cancellation(self):
        res = limit_case_gravity("down", "far")
        receiver_term = CONSTS.GM / (7e6 * CONSTS.c**2)
        assert abs(res.receiver_residual) / receiver_term <= 0.02

    def test_far_uplink_doubling_of_receiver_term(self):
        res = limit_case_gravity("up", "far")
        receiver_term = CONSTS.GM / (7e6 * CONSTS.c**2)
        # retardation adds instead of cancels: the receiver terms sum to
        # about twice the single potential term
        assert res.receiver_residual / receiver_term == pytest.approx(
            -1.99, rel=0.01
        )
        # the full sum is dominated by the deep companion potential
        assert res.coefficient == pytest.approx(98.01, rel=0.01)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            limit_case_gravity("sideways", "near")
        with pytest.raises(DomainError):
            limit_case_gravity("up", "medium")
        with pytest.raises(DomainError):
            limit_case_gravity("up", "near", separation=1e8)


class TestRadialGravityTerms:
    def test_radial_configuration(self):
        emit = StateVector(t=0, r=[7e6, 0, 0], v=[0, 0, 0])
        recv = StateVector(t=0, r=[8e6, 0, 0], v=[0, 0, 0],
                           a=[-CONSTS.GM / 8e6**2, 0, 0])
        g0, gret = radial_gravity_terms(emit, recv, np.array([1.0, 0, 0]))
        assert g0 == pytest.approx(
            CONSTS.GM * (1 / 7e6 - 1 / 8e6) / CONSTS.c**2
        )
        assert gret == pytest.approx(
            -1e6 * CONSTS.GM / (8e6**2 * CONSTS.c**2)
        )

    def test_rejects_nonradial(self):
        emit = StateVector(t=0, r=[7e6, 0, 0], v=[0, 0, 0])
        recv = StateVector(t=0, r=[0, 8e6, 0], v=[0, 0, 0],
                           a=[0, -1, 0])
        with pytest.raises(DomainError):
            radial_gravity_terms(emit, recv, np.array([1.0, 0, 0]))
