"""Scenario configuration, figure presets, the epoch sweep runner, and
CSV/plot-data emission.

Configs are YAML documents with a versioned schema; unknown keys are
rejected so typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .core import CONSTS, DomainError, NumericError, PhysConsts
from .greop import DeConfig, deviation_analysis
from .orbits import (
    GroundStation,
    KeplerOrbit,
    ground_station_state,
    kepler_state,
    orbital_period,
)
from .qkd import SignalSpec, gaussian_overlap, plob_bound
from .redshift import shift_breakdown

SCHEMA_VERSION = 1

Endpoint = KeplerOrbit | GroundStation


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    endpoint_a: Endpoint
    endpoint_b: Endpoint
    link_direction: str          # "a_to_b" | "b_to_a"
    signal: SignalSpec
    t_start: float
    t_stop: float
    t_step: float
    engine: str = "analytic"     # "analytic" | "gr" | "both"
    correction_mode: str = "corrected"
    occlusion_radius_m: float = CONSTS.R_E
    rng_seed: int = 0
    de_threshold_m: float = 1.0
    de_population: int = 20
    de_max_generations: int = 40

    def __post_init__(self):
        if self.link_direction not in ("a_to_b", "b_to_a"):
            raise DomainError("link_direction must be a_to_b or b_to_a")
        if self.engine not in ("analytic", "gr", "both"):
            raise DomainError("engine must be analytic, gr or both")
        if self.correction_mode not in ("corrected", "uncorrected"):
            raise DomainError("correction_mode must be corrected/uncorrected")
        if not self.t_stop > self.t_start:
            raise DomainError("time stop must exceed start")
        if not self.t_step > 0.0:
            raise DomainError("time step must be positive")

    @property
    def emitter(self) -> Endpoint:
        return self.endpoint_a if self.link_direction == "a_to_b" else self.endpoint_b

    @property
    def receiver(self) -> Endpoint:
        return self.endpoint_b if self.link_direction == "a_to_b" else self.endpoint_a

    def epochs(self) -> np.ndarray:
        return np.arange(self.t_start, self.t_stop + 0.5 * self.t_step,
                         self.t_step)

    def de_config(self) -> DeConfig:
        return DeConfig(population=self.de_population,
                        max_generations=self.de_max_generations,
                        seed=self.rng_seed)


# Fixed, ordered result columns; capacity fields are null for non-LOS rows.
RESULT_COLUMNS = (
    "t_e", "los", "z_long_exact", "z_long0", "z_ret", "z_rel0", "z_corr",
    "z_total", "gamma", "eta", "plob_bits", "z_gr", "deviation",
)


@dataclass(frozen=True)
class ResultRow:
    t_e: float
    los: bool
    z_long_exact: float | None
    z_long0: float | None
    z_ret: float | None
    z_rel0: float | None
    z_corr: float | None
    z_total: float | None
    gamma: float | None
    eta: float | None
    plob_bits: float | None
    z_gr: float | None = None
    deviation: float | None = None


# ---------------------------------------------------------------------------
# Config parsing


def _require_keys(mapping: dict, allowed: set[str], context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise DomainError(
            f"unknown key(s) {sorted(unknown)} in {context}; "
            f"allowed: {sorted(allowed)}"
        )


def _parse_endpoint(node, context: str) -> Endpoint:
    if not isinstance(node, dict) or "kind" not in node:
        raise DomainError(f"{context} must be a mapping with a 'kind' key")
    kind = node["kind"]
    if kind == "orbit":
        _require_keys(node, {"kind", "a_m", "ecc", "mean_anomaly0_rad",
                             "argp_rad", "direction"}, context)
        if "a_m" not in node:
            raise DomainError(f"{context}: orbit needs a_m")
        return KeplerOrbit(
            a=float(node["a_m"]),
            ecc=float(node.get("ecc", 0.0)),
            M0=float(node.get("mean_anomaly0_rad", 0.0)),
            argp=float(node.get("argp_rad", 0.0)),
            direction=int(node.get("direction", 1)),
        )
    if kind == "ground":
        _require_keys(node, {"kind", "radius_m", "phi0_rad"}, context)
        return GroundStation(
            radius=float(node.get("radius_m", CONSTS.R_E)),
            phi0=float(node.get("phi0_rad", 0.0)),
        )
    raise DomainError(f"{context}: kind must be 'orbit' or 'ground'")


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a YAML scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DomainError(f"malformed config document: {exc}") from exc
    if not isinstance(doc, dict):
        raise DomainError("config root must be a mapping")
    _require_keys(doc, {
        "schema_version", "name", "endpoint_a", "endpoint_b",
        "link_direction", "signal", "time", "engine", "correction_mode",
        "occlusion_radius_m", "rng_seed", "de",
    }, "config root")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DomainError(
            f"schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    for key in ("endpoint_a", "endpoint_b", "time"):
        if key not in doc:
            raise DomainError(f"config is missing required key {key!r}")

    signal_node = doc.get("signal", {}) or {}
    _require_keys(signal_node, {"ratio", "eta0", "omega0_rad_s"}, "signal")
    kwargs = {}
    if "omega0_rad_s" in signal_node:
        kwargs["omega0"] = float(signal_node["omega0_rad_s"])
    signal = SignalSpec.from_ratio(
        ratio=float(signal_node.get("ratio", 1e10)),
        eta0=float(signal_node.get("eta0", 0.4)),
        **kwargs,
    )

    time_node = doc["time"]
    _require_keys(time_node, {"start_s", "stop_s", "step_s"}, "time")
    for key in ("start_s", "stop_s", "step_s"):
        if key not in time_node:
            raise DomainError(f"time is missing required key {key!r}")

    de_node = doc.get("de", {}) or {}
    _require_keys(de_node, {"threshold_m", "population", "max_generations"},
                  "de")

    return ScenarioConfig(
        name=str(doc.get("name", "unnamed")),
        endpoint_a=_parse_endpoint(doc["endpoint_a"], "endpoint_a"),
        endpoint_b=_parse_endpoint(doc["endpoint_b"], "endpoint_b"),
        link_direction=str(doc.get("link_direction", "a_to_b")),
        signal=signal,
        t_start=float(time_node["start_s"]),
        t_stop=float(time_node["stop_s"]),
        t_step=float(time_node["step_s"]),
        engine=str(doc.get("engine", "analytic")),
        correction_mode=str(doc.get("correction_mode", "corrected")),
        occlusion_radius_m=float(doc.get("occlusion_radius_m", CONSTS.R_E)),
        rng_seed=int(doc.get("rng_seed", 0)),
        de_threshold_m=float(de_node.get("threshold_m", 1.0)),
        de_population=int(de_node.get("population", 20)),
        de_max_generations=int(de_node.get("max_generations", 40)),
    )


def _endpoint_node(ep: Endpoint) -> dict:
    if isinstance(ep, GroundStation):
        return {"kind": "ground", "radius_m": ep.radius, "phi0_rad": ep.phi0}
    return {
        "kind": "orbit",
        "a_m": ep.a,
        "ecc": ep.ecc,
        "mean_anomaly0_rad": ep.M0,
        "argp_rad": ep.argp,
        "direction": ep.direction,
    }


def serialize(cfg: ScenarioConfig) -> str:
    """YAML form of a config; parse_config(serialize(cfg)) == cfg."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "endpoint_a": _endpoint_node(cfg.endpoint_a),
        "endpoint_b": _endpoint_node(cfg.endpoint_b),
        "link_direction": cfg.link_direction,
        "signal": {
            "ratio": cfg.signal.ratio_R,
            "eta0": cfg.signal.eta0,
            "omega0_rad_s": cfg.signal.omega0,
        },
        "time": {
            "start_s": cfg.t_start,
            "stop_s": cfg.t_stop,
            "step_s": cfg.t_step,
        },
        "engine": cfg.engine,
        "correction_mode": cfg.correction_mode,
        "occlusion_radius_m": cfg.occlusion_radius_m,
        "rng_seed": cfg.rng_seed,
        "de": {
            "threshold_m": cfg.de_threshold_m,
            "population": cfg.de_population,
            "max_generations": cfg.de_max_generations,
        },
    }
    return yaml.safe_dump(doc, sort_keys=False)


# ---------------------------------------------------------------------------
# Presets


def geosynchronous_axis(consts: PhysConsts = CONSTS) -> float:
    """Semi-major axis whose mean motion equals the Earth rotation rate."""
    return (consts.GM / consts.omega_E**2) ** (1.0 / 3.0)


_A_LEO = 6778137.0          # 400 km altitude
_A_MEO_FIG4 = 10378.0e3
_A_MEO_FIG6 = 16378.0e3     # 10 000 km altitude
_A_GEO_CITED = 42248.0e3    # cited geosynchronous axis for the link figures

_DAY = 86400.0


def _preset_configs() -> dict[str, ScenarioConfig]:
    a_sync = geosynchronous_axis()
    signal = SignalSpec.from_ratio(1e10)
    ground = GroundStation()
    day = dict(t_start=0.0, t_stop=_DAY, t_step=60.0)
    meo_period = orbital_period(KeplerOrbit(a=_A_MEO_FIG4))
    presets = {
        # Exact corotation: the satellite hangs over the station, so the
        # longitudinal shift vanishes identically and z_total is constant.
        "geostationary-ground": ScenarioConfig(
            name="geostationary-ground",
            endpoint_a=ground,
            endpoint_b=KeplerOrbit(a=a_sync),
            link_direction="a_to_b",
            signal=signal, **day,
        ),
        "fig3-geosync-e0.4": ScenarioConfig(
            name="fig3-geosync-e0.4",
            endpoint_a=ground,
            endpoint_b=KeplerOrbit(a=a_sync, ecc=0.4),
            link_direction="a_to_b",
            signal=signal, **day,
        ),
        "fig3-geosync-e0.7": ScenarioConfig(
            name="fig3-geosync-e0.7",
            endpoint_a=ground,
            endpoint_b=KeplerOrbit(a=a_sync, ecc=0.7),
            link_direction="a_to_b",
            signal=signal, **day,
        ),
        "fig4-meo-e0.0": ScenarioConfig(
            name="fig4-meo-e0.0",
            endpoint_a=ground,
            endpoint_b=KeplerOrbit(a=_A_MEO_FIG4),
            link_direction="a_to_b",
            signal=signal,
            t_start=0.0, t_stop=meo_period, t_step=10.0,
        ),
        "fig4-meo-e0.2": ScenarioConfig(
            name="fig4-meo-e0.2",
            endpoint_a=ground,
            endpoint_b=KeplerOrbit(a=_A_MEO_FIG4, ecc=0.2),
            link_direction="a_to_b",
            signal=signal,
            t_start=0.0, t_stop=meo_period, t_step=10.0,
        ),
        "fig5-leo-geo": ScenarioConfig(
            name="fig5-leo-geo",
            endpoint_a=KeplerOrbit(a=_A_LEO),
            endpoint_b=KeplerOrbit(a=_A_GEO_CITED),
            link_direction="a_to_b",
            signal=signal, **day,
        ),
        "fig6-leo-geosync-e0.4": ScenarioConfig(
            name="fig6-leo-geosync-e0.4",
            endpoint_a=KeplerOrbit(a=_A_LEO),
            endpoint_b=KeplerOrbit(a=_A_GEO_CITED, ecc=0.4),
            link_direction="a_to_b",
            signal=signal, **day,
        ),
        "fig6-meo-geosync-e0.4": ScenarioConfig(
            name="fig6-meo-geosync-e0.4",
            endpoint_a=KeplerOrbit(a=_A_MEO_FIG6),
            endpoint_b=KeplerOrbit(a=_A_GEO_CITED, ecc=0.4),
            link_direction="a_to_b",
            signal=signal, **day,
        ),
    }
    return presets


def preset_names() -> list[str]:
    return sorted(_preset_configs())


def preset(name: str) -> ScenarioConfig:
    configs = _preset_configs()
    if name not in configs:
        raise DomainError(
            f"unknown preset {name!r}; available: {', '.join(sorted(configs))}"
        )
    return configs[name]


# ---------------------------------------------------------------------------
# Running


def _trajectory(ep: Endpoint, consts: PhysConsts):
    if isinstance(ep, GroundStation):
        return lambda t: ground_station_state(ep, t, consts)
    return lambda t: kepler_state(ep, t, consts)


def _error_row(t_e: float) -> ResultRow:
    return ResultRow(t_e=t_e, los=False, z_long_exact=None, z_long0=None,
                     z_ret=None, z_rel0=None, z_corr=None, z_total=None,
                     gamma=None, eta=None, plob_bits=None)


def run_scenario(cfg: ScenarioConfig, workers: int = 1,
                 consts: PhysConsts = CONSTS) -> list[ResultRow]:
    """Sweep the configured epochs; one row per epoch, errors kept as rows."""
    emit_traj = _trajectory(cfg.emitter, consts)
    recv_traj = _trajectory(cfg.receiver, consts)
    epochs = cfg.epochs()

    rows: list[ResultRow] = []
    for t_e in epochs:
        t_e = float(t_e)
        try:
            bd = shift_breakdown(emit_traj, recv_traj, t_e,
                                 cfg.occlusion_radius_m, consts)
        except (DomainError, NumericError):
            rows.append(_error_row(t_e))
            continue
        z_mismatch = bd.z_corr if cfg.correction_mode == "corrected" else bd.z_total
        if bd.los:
            gamma = gaussian_overlap(z_mismatch, cfg.signal)
            eta = cfg.signal.eta0 * gamma
            plob = plob_bound(eta)
        else:
            gamma = eta = plob = None
        rows.append(ResultRow(
            t_e=t_e, los=bd.los,
            z_long_exact=bd.z_long_exact, z_long0=bd.z_long0,
            z_ret=bd.z_ret, z_rel0=bd.z_rel0, z_corr=bd.z_corr,
            z_total=bd.z_total, gamma=gamma, eta=eta, plob_bits=plob,
        ))

    if cfg.engine in ("gr", "both"):
        records = deviation_analysis(
            cfg.emitter, cfg.receiver, [float(t) for t in epochs],
            threshold=cfg.de_threshold_m, de_config=cfg.de_config(),
            occlusion_radius=cfg.occlusion_radius_m, consts=consts,
            workers=workers,
        )
        by_epoch = {rec.t_e: rec for rec in records}
        for i, row in enumerate(rows):
            rec = by_epoch.get(row.t_e)
            if rec is None or row.z_total is None:
                continue
            rows[i] = replace(row, z_gr=rec.z_gr,
                              deviation=rec.z_gr - row.z_total)
    return rows


# ---------------------------------------------------------------------------
# Emission


def _fmt(value: float | bool | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return "%.17g" % value


def csv_text(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, col)) for col in RESULT_COLUMNS])
    return buf.getvalue()


def emit_csv(rows: list[ResultRow], path: str) -> None:
    if not rows:
        raise DomainError("refusing to emit an empty result set")
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(rows))


def read_csv(path: str) -> list[ResultRow]:
    """Inverse of emit_csv; floats survive bit-exactly via the 17g format."""
    rows: list[ResultRow] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise DomainError("unexpected CSV header")
        for rec in reader:
            kwargs = {}
            for col, cell in zip(RESULT_COLUMNS, rec):
                if col == "los":
                    kwargs[col] = cell == "true"
                else:
                    kwargs[col] = float(cell) if cell else None
            rows.append(ResultRow(**kwargs))
    return rows


def plotdata_text(rows: list[ResultRow]) -> str:
    """Whitespace series of (t, z_rel0), (t, z_ret), (t, plob_bits).

    Epoch runs without line of sight break each series with a blank line so
    plotting tools draw gaps instead of bridging them.
    """
    lines: list[str] = []
    for name, col in (("z_rel0", "z_rel0"), ("z_ret", "z_ret"),
                      ("plob_bits", "plob_bits")):
        lines.append(f"# series: {name}")
        in_gap = False
        for row in rows:
            value = getattr(row, col)
            if not row.los or value is None:
                if not in_gap:
                    lines.append("")
                    in_gap = True
                continue
            in_gap = False
            lines.append("%.17g %.17g" % (row.t_e, value))
        lines.append("")
    return "\n".join(lines) + "\n"


def emit_plotdata(rows: list[ResultRow], path: str) -> None:
    if not rows:
        raise DomainError("refusing to emit an empty result set")
    with open(path, "w") as fh:
        fh.write(plotdata_text(rows))
