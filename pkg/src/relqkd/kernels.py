"""Hot numeric kernels: Schwarzschild geodesic right-hand side, an
adaptive Dormand-Prince integrator with Hermite dense output, and the
closest-approach scan against a sampled worldline.

The kernels are compiled with numba unless the environment variable
``RELQKD_DISABLE_NUMBA`` is set to a non-empty value (or numba is not
importable), in which case the same source runs as pure Python/numpy.
``relqkd.kernels.BACKEND`` reports which path is active.

Geodesic state layout (8 components, derivatives w.r.t. the curve
parameter, proper time for timelike and an affine parameter for null):

    y = (t, r, theta, phi, dt, dr, dtheta, dphi)
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLE = bool(os.environ.get("RELQKD_DISABLE_NUMBA"))
if not _DISABLE:
    try:
        import numba

        def _jit(func):
            return numba.njit(cache=True, fastmath=False)(func)

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a hard dependency
        def _jit(func):
            return func

        BACKEND = "numpy"
else:
    def _jit(func):
        return func

    BACKEND = "numpy"


STATUS_OK = 0
STATUS_NODE_OVERFLOW = 1
STATUS_STEP_UNDERFLOW = 2
STATUS_HORIZON = 3


def geodesic_rhs_impl(y, GM, c, out):
    """Geodesic equation with analytic Schwarzschild Christoffel symbols.

    Written for general theta; the flat limit GM = 0 reduces to straight
    lines expressed in spherical coordinates.
    """
    r = y[1]
    th = y[2]
    ut = y[4]
    ur = y[5]
    uth = y[6]
    uph = y[7]

    rs = 2.0 * GM / (c * c)
    f = 1.0 - rs / r
    sin_th = math.sin(th)
    cos_th = math.cos(th)

    out[0] = ut
    out[1] = ur
    out[2] = uth
    out[3] = uph
    out[4] = -(rs / (r * r * f)) * ut * ur
    out[5] = (
        -(c * c * f * rs / (2.0 * r * r)) * ut * ut
        + (rs / (2.0 * r * r * f)) * ur * ur
        + r * f * (uth * uth + sin_th * sin_th * uph * uph)
    )
    out[6] = -(2.0 / r) * ur * uth + sin_th * cos_th * uph * uph
    out[7] = -(2.0 / r) * ur * uph
    if sin_th != 0.0:
        out[7] -= 2.0 * (cos_th / sin_th) * uth * uph


geodesic_rhs_kernel = _jit(geodesic_rhs_impl)


def _integrate_impl(y0, lam_end, GM, c, rtol, atol, max_step, max_nodes):
    """Adaptive Dormand-Prince 5(4) over lam in [0, lam_end].

    Returns (status, n_nodes, lam_nodes, y_nodes, f_nodes); node arrays
    carry the accepted steps with their derivatives for Hermite dense
    output.
    """
    rs = 2.0 * GM / (c * c)
    horizon = rs * (1.0 + 1e-6)

    lam_nodes = np.empty(max_nodes)
    y_nodes = np.empty((max_nodes, 8))
    f_nodes = np.empty((max_nodes, 8))

    y = y0.copy()
    f = np.empty(8)
    geodesic_rhs_kernel(y, GM, c, f)

    lam = 0.0
    n = 0
    lam_nodes[n] = lam
    for i in range(8):
        y_nodes[n, i] = y[i]
        f_nodes[n, i] = f[i]
    n += 1

    if y[1] <= horizon:
        return STATUS_HORIZON, n, lam_nodes, y_nodes, f_nodes

    h = min(max_step, lam_end * 1e-3 + 1e-30)
    if h <= 0.0:
        return STATUS_OK, n, lam_nodes, y_nodes, f_nodes

    k2 = np.empty(8)
    k3 = np.empty(8)
    k4 = np.empty(8)
    k5 = np.empty(8)
    k6 = np.empty(8)
    k7 = np.empty(8)
    ytmp = np.empty(8)
    ynew = np.empty(8)

    min_h = lam_end * 1e-15 + 1e-300

    while lam < lam_end:
        if h > lam_end - lam:
            h = lam_end - lam
        if h > max_step:
            h = max_step

        # Dormand-Prince stages (k1 = f, FSAL).
        for i in range(8):
            ytmp[i] = y[i] + h * 0.2 * f[i]
        geodesic_rhs_kernel(ytmp, GM, c, k2)
        for i in range(8):
            ytmp[i] = y[i] + h * (3.0 / 40.0 * f[i] + 9.0 / 40.0 * k2[i])
        geodesic_rhs_kernel(ytmp, GM, c, k3)
        for i in range(8):
            ytmp[i] = y[i] + h * (44.0 / 45.0 * f[i] - 56.0 / 15.0 * k2[i]
                                  + 32.0 / 9.0 * k3[i])
        geodesic_rhs_kernel(ytmp, GM, c, k4)
        for i in range(8):
            ytmp[i] = y[i] + h * (19372.0 / 6561.0 * f[i]
                                  - 25360.0 / 2187.0 * k2[i]
                                  + 64448.0 / 6561.0 * k3[i]
                                  - 212.0 / 729.0 * k4[i])
        geodesic_rhs_kernel(ytmp, GM, c, k5)
        for i in range(8):
            ytmp[i] = y[i] + h * (9017.0 / 3168.0 * f[i]
                                  - 355.0 / 33.0 * k2[i]
                                  + 46732.0 / 5247.0 * k3[i]
                                  + 49.0 / 176.0 * k4[i]
                                  - 5103.0 / 18656.0 * k5[i])
        geodesic_rhs_kernel(ytmp, GM, c, k6)
        for i in range(8):
            ynew[i] = y[i] + h * (35.0 / 384.0 * f[i]
                                  + 500.0 / 1113.0 * k3[i]
                                  + 125.0 / 192.0 * k4[i]
                                  - 2187.0 / 6784.0 * k5[i]
                                  + 11.0 / 84.0 * k6[i])
        geodesic_rhs_kernel(ynew, GM, c, k7)

        # Embedded 4th-order error estimate.
        err = 0.0
        for i in range(8):
            ei = h * (
                (35.0 / 384.0 - 5179.0 / 57600.0) * f[i]
                + (500.0 / 1113.0 - 7571.0 / 16695.0) * k3[i]
                + (125.0 / 192.0 - 393.0 / 640.0) * k4[i]
                + (-2187.0 / 6784.0 + 92097.0 / 339200.0) * k5[i]
                + (11.0 / 84.0 - 187.0 / 2100.0) * k6[i]
                - (1.0 / 40.0) * k7[i]
            )
            ay = abs(y[i])
            ayn = abs(ynew[i])
            scale = atol[i] + rtol * (ay if ay > ayn else ayn)
            q = ei / scale
            err += q * q
        err = math.sqrt(err / 8.0)

        if err <= 1.0:
            lam += h
            for i in range(8):
                y[i] = ynew[i]
                f[i] = k7[i]
            if n >= max_nodes:
                return STATUS_NODE_OVERFLOW, n, lam_nodes, y_nodes, f_nodes
            lam_nodes[n] = lam
            for i in range(8):
                y_nodes[n, i] = y[i]
                f_nodes[n, i] = f[i]
            n += 1
            if y[1] <= horizon:
                return STATUS_HORIZON, n, lam_nodes, y_nodes, f_nodes

        if err == 0.0:
            factor = 5.0
        else:
            factor = 0.9 * err ** (-0.2)
            if factor > 5.0:
                factor = 5.0
            elif factor < 0.2:
                factor = 0.2
        h *= factor
        if h < min_h:
            return STATUS_STEP_UNDERFLOW, n, lam_nodes, y_nodes, f_nodes

    return STATUS_OK, n, lam_nodes, y_nodes, f_nodes


integrate_kernel = _jit(_integrate_impl)


def _hermite_eval_impl(lam_nodes, y_nodes, f_nodes, n, lam, out):
    """Cubic Hermite evaluation of the stored geodesic at parameter lam."""
    # Binary search for the bracketing interval.
    lo = 0
    hi = n - 1
    if lam <= lam_nodes[0]:
        hi = 1
    elif lam >= lam_nodes[n - 1]:
        lo = n - 2
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if lam_nodes[mid] <= lam:
                lo = mid
            else:
                hi = mid
    h = lam_nodes[hi] - lam_nodes[lo]
    s = (lam - lam_nodes[lo]) / h
    h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s)
    h10 = s * (1.0 - s) * (1.0 - s)
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    for i in range(8):
        out[i] = (
            h00 * y_nodes[lo, i]
            + h10 * h * f_nodes[lo, i]
            + h01 * y_nodes[hi, i]
            + h11 * h * f_nodes[hi, i]
        )


hermite_eval_kernel = _jit(_hermite_eval_impl)


def _worldline_interp_impl(table, t0, dt, t, out):
    """Hermite-interpolated position (0:3) and velocity (3:6) at time t.

    ``table`` columns: x, y, z, vx, vy, vz, ax, ay, az on a uniform grid.
    Positions interpolate from (pos, vel), velocities from (vel, acc).
    """
    n = table.shape[0]
    s_idx = (t - t0) / dt
    lo = int(math.floor(s_idx))
    if lo < 0:
        lo = 0
    elif lo > n - 2:
        lo = n - 2
    s = s_idx - lo
    h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s)
    h10 = s * (1.0 - s) * (1.0 - s)
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    for i in range(3):
        out[i] = (
            h00 * table[lo, i] + h10 * dt * table[lo, i + 3]
            + h01 * table[lo + 1, i] + h11 * dt * table[lo + 1, i + 3]
        )
        out[i + 3] = (
            h00 * table[lo, i + 3] + h10 * dt * table[lo, i + 6]
            + h01 * table[lo + 1, i + 3] + h11 * dt * table[lo + 1, i + 6]
        )


worldline_interp_kernel = _jit(_worldline_interp_impl)


def _ray_point_cartesian_impl(state, out):
    """Spatial Cartesian point of a geodesic state (r, theta, phi)."""
    r = state[1]
    th = state[2]
    ph = state[3]
    out[0] = r * math.sin(th) * math.cos(ph)
    out[1] = r * math.sin(th) * math.sin(ph)
    out[2] = r * math.cos(th)


ray_point_kernel = _jit(_ray_point_cartesian_impl)


def _ray_distance_impl(lam_nodes, y_nodes, f_nodes, n, lam,
                       table, t0, dt, state, point, wl):
    """Euclidean distance ray(lam) -> worldline at the same coordinate t."""
    hermite_eval_kernel(lam_nodes, y_nodes, f_nodes, n, lam, state)
    ray_point_kernel(state, point)
    worldline_interp_kernel(table, t0, dt, state[0], wl)
    dx = point[0] - wl[0]
    dy = point[1] - wl[1]
    dz = point[2] - wl[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _closest_approach_impl(lam_nodes, y_nodes, f_nodes, n, table, t0, dt):
    """Minimum equal-time distance between the ray and the worldline.

    Scans the ray nodes for the bracketing minimum, then refines by golden
    section on the dense output.  Returns (distance, lam_at_min, min_radius)
    where min_radius is the smallest radial coordinate along the whole ray
    (for occlusion flagging).
    """
    state = np.empty(8)
    point = np.empty(3)
    wl = np.empty(6)

    best = 1e300
    best_idx = 0
    min_radius = 1e300
    for j in range(n):
        for i in range(8):
            state[i] = y_nodes[j, i]
        if state[1] < min_radius:
            min_radius = state[1]
        ray_point_kernel(state, point)
        worldline_interp_kernel(table, t0, dt, state[0], wl)
        dx = point[0] - wl[0]
        dy = point[1] - wl[1]
        dz = point[2] - wl[2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist < best:
            best = dist
            best_idx = j

    lo_idx = best_idx - 1 if best_idx > 0 else 0
    hi_idx = best_idx + 1 if best_idx < n - 1 else n - 1
    a = lam_nodes[lo_idx]
    b = lam_nodes[hi_idx]

    # Golden-section refinement; the distance along the ray is unimodal.
    invphi = 0.6180339887498949
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1 = _ray_distance_impl(lam_nodes, y_nodes, f_nodes, n, x1,
                            table, t0, dt, state, point, wl)
    f2 = _ray_distance_impl(lam_nodes, y_nodes, f_nodes, n, x2,
                            table, t0, dt, state, point, wl)
    for _ in range(90):
        if f1 < f2:
            b = x2
            x2 = x1
            f2 = f1
            x1 = b - invphi * (b - a)
            f1 = _ray_distance_impl(lam_nodes, y_nodes, f_nodes, n, x1,
                                    table, t0, dt, state, point, wl)
        else:
            a = x1
            x1 = x2
            f1 = f2
            x2 = a + invphi * (b - a)
            f2 = _ray_distance_impl(lam_nodes, y_nodes, f_nodes, n, x2,
                                    table, t0, dt, state, point, wl)
        if b - a <= 1e-16 * (abs(a) + abs(b) + 1e-30):
            break
    lam_min = 0.5 * (a + b)
    dist = _ray_distance_impl(lam_nodes, y_nodes, f_nodes, n, lam_min,
                              table, t0, dt, state, point, wl)
    # Refine min_radius near periapsis of the ray as well.
    for j in range(1, n - 1):
        if y_nodes[j, 1] <= y_nodes[j - 1, 1] and y_nodes[j, 1] <= y_nodes[j + 1, 1]:
            aa = lam_nodes[j - 1]
            bb = lam_nodes[j + 1]
            for _ in range(60):
                m1 = bb - invphi * (bb - aa)
                m2 = aa + invphi * (bb - aa)
                hermite_eval_kernel(lam_nodes, y_nodes, f_nodes, n, m1, state)
                r1 = state[1]
                hermite_eval_kernel(lam_nodes, y_nodes, f_nodes, n, m2, state)
                r2 = state[1]
                if r1 < r2:
                    bb = m2
                else:
                    aa = m1
            hermite_eval_kernel(lam_nodes, y_nodes, f_nodes, n,
                                0.5 * (aa + bb), state)
            if state[1] < min_radius:
                min_radius = state[1]
    return dist, lam_min, min_radius


closest_approach_kernel = _jit(_closest_approach_impl)
if BACKEND == "numba":
    # The helper is called from inside jitted code and standalone.
    _ray_distance_impl = _jit(_ray_distance_impl)
    closest_approach_kernel = _jit(_closest_approach_impl)


def _shoot_impl(y0, lam_end, GM, c, rtol, atol, max_step, max_nodes,
                table, t0, dt):
    """Integrate a null ray and return its closest approach to a worldline.

    Returns (status, distance, lam_at_min, min_radius, t_at_min).
    """
    status, n, lam_nodes, y_nodes, f_nodes = integrate_kernel(
        y0, lam_end, GM, c, rtol, atol, max_step, max_nodes
    )
    if n < 2:
        return status, 1e300, 0.0, y0[1], y0[0]
    dist, lam_min, min_radius = closest_approach_kernel(
        lam_nodes, y_nodes, f_nodes, n, table, t0, dt
    )
    state = np.empty(8)
    hermite_eval_kernel(lam_nodes, y_nodes, f_nodes, n, lam_min, state)
    return status, dist, lam_min, min_radius, state[0]


shoot_kernel = _jit(_shoot_impl)
