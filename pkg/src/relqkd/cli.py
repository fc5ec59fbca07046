"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .core import DomainError, NumericError
from .qkd import SignalSpec, capacity_for_shift
from .scenarios import (
    csv_text,
    emit_csv,
    emit_plotdata,
    parse_config,
    preset,
    preset_names,
    run_scenario,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_WORKERS_ENV = "RELQKD_WORKERS"


def _default_workers() -> int:
    value = os.environ.get(_WORKERS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _load_config(source: str):
    if os.path.exists(source):
        with open(source) as fh:
            return parse_config(fh.read())
    return preset(source)


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.engine:
        cfg = replace(cfg, engine=args.engine)
    rows = run_scenario(cfg, workers=args.workers)
    if args.out:
        emit_csv(rows, args.out)
    else:
        sys.stdout.write(csv_text(rows))
    if args.plotdata:
        emit_plotdata(rows, args.plotdata)
    return EXIT_OK


def _cmd_preset(args) -> int:
    if args.action == "list":
        for name in preset_names():
            print(name)
        return EXIT_OK
    raise DomainError(f"unknown preset action {args.action!r}")


def _cmd_plob(args) -> int:
    """Capacity-vs-shift curve for a given peak-to-bandwidth ratio."""
    spec = SignalSpec.from_ratio(args.ratio, eta0=args.eta0)
    zs = np.linspace(-args.zmax, args.zmax, args.points)
    lines = ["z,plob_bits"]
    for z in zs:
        lines.append("%.17g,%.17g" % (z, capacity_for_shift(float(z), spec)))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_deviation(args) -> int:
    cfg = replace(preset(args.preset), engine="both",
                  t_step=args.step, de_threshold_m=args.threshold)
    rows = run_scenario(cfg, workers=args.workers)
    if args.out:
        emit_csv(rows, args.out)
    else:
        sys.stdout.write(csv_text(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relqkd",
        description="Relativistic frequency-shift and QKD-capacity "
                    "simulations for optical satellite links.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config file or preset")
    p_run.add_argument("config", help="path to a YAML config, or a preset name")
    p_run.add_argument("--engine", choices=("analytic", "gr", "both"),
                       default=None, help="override the configured engine")
    p_run.add_argument("--out", default=None, help="CSV output path")
    p_run.add_argument("--plotdata", default=None,
                       help="also write gnuplot-style series data here")
    p_run.add_argument("--workers", type=int, default=_default_workers())
    p_run.set_defaults(func=_cmd_run)

    p_preset = sub.add_parser("preset", help="preset utilities")
    p_preset.add_argument("action", choices=("list",))
    p_preset.set_defaults(func=_cmd_preset)

    p_plob = sub.add_parser(
        "plob", help="emit the capacity-vs-shift curve for a ratio R"
    )
    p_plob.add_argument("--ratio", type=float, required=True)
    p_plob.add_argument("--zmax", type=float, required=True)
    p_plob.add_argument("--points", type=int, default=401)
    p_plob.add_argument("--eta0", type=float, default=0.4)
    p_plob.add_argument("--out", default=None)
    p_plob.set_defaults(func=_cmd_plob)

    p_dev = sub.add_parser(
        "deviation", help="run a preset with engine=both (GR deviation sweep)"
    )
    p_dev.add_argument("preset")
    p_dev.add_argument("--step", type=float, default=600.0,
                       help="epoch step in seconds")
    p_dev.add_argument("--threshold", type=float, default=0.01,
                       help="closest-approach threshold in meters")
    p_dev.add_argument("--out", default=None)
    p_dev.add_argument("--workers", type=int, default=_default_workers())
    p_dev.set_defaults(func=_cmd_deviation)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
