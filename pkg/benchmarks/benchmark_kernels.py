"""Compare the compiled (numba) and pure-numpy kernel backends.

Each backend runs in its own subprocess so the import-time backend choice
is honored.  The workload is the dominant hot path: a full emitter to
receiver solve for a ground to geosynchronous link, repeated over a set
of epochs with warm starts, plus a standalone timelike geodesic
integration.

Usage: python3 benchmarks/benchmark_kernels.py [--epochs N]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKLOAD = r"""
import json
import time

import numpy as np

from relqkd import kernels
from relqkd.greop import (
    deviation_analysis, integrate_geodesic, timelike_from_kepler,
)
from relqkd.orbits import GroundStation, KeplerOrbit
from relqkd.scenarios import geosynchronous_axis

n_epochs = {n_epochs}

# Warm-up: trigger any compilation outside the timed sections.
orb = KeplerOrbit(a=geosynchronous_axis(), ecc=0.4)
gs = GroundStation()
deviation_analysis(gs, orb, [0.0])

t0 = time.perf_counter()
ev, u = timelike_from_kepler(orb, 0.0)
curve = integrate_geodesic(ev, u, 86400.0)
t_geodesic = time.perf_counter() - t0

epochs = [600.0 * k for k in range(n_epochs)]
t0 = time.perf_counter()
records = deviation_analysis(gs, orb, epochs, threshold=0.01)
t_sweep = time.perf_counter() - t0

print(json.dumps({{
    "backend": kernels.BACKEND,
    "geodesic_day_s": t_geodesic,
    "geodesic_nodes": curve.n,
    "sweep_s": t_sweep,
    "sweep_epochs": n_epochs,
    "per_epoch_ms": 1e3 * t_sweep / n_epochs,
    "max_abs_deviation": max(abs(r.deviation) for r in records),
}}))
"""


def run_backend(disable_numba: bool, n_epochs: int) -> dict:
    env = dict(os.environ)
    if disable_numba:
        env["RELQKD_DISABLE_NUMBA"] = "1"
    else:
        env.pop("RELQKD_DISABLE_NUMBA", None)
    out = subprocess.run(
        [sys.executable, "-c", _WORKLOAD.format(n_epochs=n_epochs)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--epochs", type=int, default=20,
                        help="number of sweep epochs per backend")
    args = parser.parse_args()

    results = [run_backend(False, args.epochs), run_backend(True, args.epochs)]
    print(f"{'backend':>8} {'geodesic day':>14} {'sweep/epoch':>13} "
          f"{'max |dev|':>11}")
    for res in results:
        print(f"{res['backend']:>8} {res['geodesic_day_s'] * 1e3:>11.1f} ms "
              f"{res['per_epoch_ms']:>10.1f} ms "
              f"{res['max_abs_deviation']:>11.2e}")
    fast, slow = results
    if fast["backend"] == "numba":
        print(f"speedup: {slow['sweep_s'] / fast['sweep_s']:.1f}x on the "
              f"sweep, {slow['geodesic_day_s'] / fast['geodesic_day_s']:.1f}x "
              f"on the geodesic")
    return 0


if __name__ == "__main__":
    sys.exit(main())
