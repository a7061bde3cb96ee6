"""Run configuration: defaults, file format, validation, serialization.

The config file is flat dotted-key text, one ``key = value`` per line,
``#`` comments.  Unknown keys are rejected; missing keys take the
defaults below (the reference constellation and radio parameters of the
evaluated scenario).  ``serialize`` emits the canonical form: every key,
sorted, with repr-round-trippable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .access import RachConfig
from .cells import TargetArea
from .linkbudget import ArrayConfig, LinkBudgetParams
from .mobility import AssociationPolicy
from .orbits import ConfigurationError, SnapshotPlan, WalkerConfig, build_snapshots

_POS = ("positive", lambda v: v > 0)
_NONNEG = ("non-negative", lambda v: v >= 0)
_ANY = ("any", lambda v: True)


def _choice(*opts):
    return ("one of " + "/".join(opts), lambda v: v in opts)


def _range(lo, hi):
    return (f"in [{lo}, {hi}]", lambda v: lo <= v <= hi)


# key -> (default, type, (description, validator))
SCHEMA: dict[str, tuple] = {
    "walker.pattern": ("delta", str, _choice("delta", "polar")),
    "walker.plane_count": (60, int, _POS),
    "walker.sats_per_plane": (30, int, _POS),
    "walker.inclination_deg": (55.0, float, _range(0.0, 180.0)),
    "walker.altitude_km": (508.0, float, _POS),
    "walker.phasing_factor": (1, int, _NONNEG),
    "walker.propagator": ("kepler", str, _choice("kepler", "j2")),

    "area.lon_min": (90.0, float, _range(-180.0, 180.0)),
    "area.lon_max": (110.0, float, _range(-180.0, 180.0)),
    "area.lat_min": (25.0, float, _range(-90.0, 90.0)),
    "area.lat_max": (45.0, float, _range(-90.0, 90.0)),
    "area.margin_deg": (5.0, float, _NONNEG),

    # H3-res-3/4 average-area equivalents; the Table-2 arrays give the
    # matching beam footprints (see decisions ledger)
    "cells.service_circumradius_km": (26.10, float, _POS),
    "cells.broadcast_circumradius_km": (69.07, float, _POS),
    "cells.hotspot_count": (10, int, _NONNEG),
    "cells.min_elevation_deg": (10.0, float, _range(0.0, 90.0)),

    "ue.per_normal_cell": (100, int, _NONNEG),
    "ue.per_hotspot_cell": (500, int, _NONNEG),

    "traffic.session_rate_per_s": (1.0 / 300.0, float, _NONNEG),
    "traffic.mean_session_duration_s": (30.0, float, _POS),
    "traffic.packet_bits": (4_000_000, int, _POS),
    "traffic.packet_interval_s": (3.0, float, _POS),

    "link.carrier_frequency_ghz": (3.65, float, _POS),
    "link.system_bandwidth_mhz": (30.0, float, _POS),
    "link.extra_loss_db": (5.5, float, _NONNEG),
    "link.shadow_sigma_db": (0.0, float, _NONNEG),
    "link.ue_rx_gain_dbi": (0.0, float, _ANY),
    "link.ue_g_over_t_db_k": (-33.62, float, _ANY),
    "link.noise_temperature_k": (2303.0, float, _POS),

    "array.service_elements": (20, int, _POS),
    "array.broadcast_elements": (7, int, _POS),
    "array.service_eirp_density_dbw_mhz": (41.41, float, _ANY),
    "array.broadcast_eirp_density_dbw_mhz": (32.29, float, _ANY),
    "array.element_beamwidth_deg": (58.0, float, _range(10.0, 120.0)),
    "array.element_peak_dbi": (5.0, float, _ANY),

    "beams.service": (50, int, _POS),
    "beams.broadcast": (5, int, _POS),

    "time.total_duration_s": (6000.0, float, _POS),
    "time.snapshot_count": (600, int, _POS),
    "time.slot_duration_s": (0.001, float, _POS),

    "rach.occasion_period_ms": (80.0, float, _POS),
    "rach.preambles_initial": (54, int, _POS),
    "rach.preambles_ho": (10, int, _POS),
    "rach.max_attempts": (10, int, _POS),
    "rach.ho_max_attempts": (1, int, _POS),
    "rach.backoff_max_occasions": (3, int, _NONNEG),
    "rach.response_delay_s": (0.010, float, _NONNEG),

    "mobility.variant": ("nearest", str, _choice("nearest", "ssb_plan_nearest")),
    "mobility.a4_threshold_db": (-6.0, float, _ANY),
    "mobility.t1_lookahead": (1, int, _POS),
    "mobility.ho_window_s": (1.0, float, _POS),

    "scheduler.pf_window_slots": (100, int, _POS),
    "scheduler.pf_floor_bps": (1.0, float, _POS),
    "scheduler.rate_cap_bps_hz": (7.4, float, _POS),
    "scheduler.rate_attenuation": (0.75, float, _POS),
    "scheduler.rate_min_sinr_db": (-10.0, float, _ANY),

    "kpi.n_asset_threshold_db": (-6.0, float, _ANY),
    "kpi.processing_delay_ms": (0.0, float, _NONNEG),

    "run.master_seed": (1, int, _NONNEG),
    "run.margin_traffic": ("proxy", str, _choice("proxy", "none")),
    "run.export_illumination": (False, bool, _ANY),
}


def _parse_value(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class SimConfig:
    """Fully resolved run configuration."""
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    # --- typed views -----------------------------------------------------
    @property
    def walker(self) -> WalkerConfig:
        return WalkerConfig(
            pattern=self["walker.pattern"],
            plane_count=self["walker.plane_count"],
            sats_per_plane=self["walker.sats_per_plane"],
            inclination_deg=self["walker.inclination_deg"],
            altitude_km=self["walker.altitude_km"],
            phasing_factor=self["walker.phasing_factor"])

    @property
    def area(self) -> TargetArea:
        return TargetArea(self["area.lon_min"], self["area.lon_max"],
                          self["area.lat_min"], self["area.lat_max"])

    @property
    def padded_area(self) -> TargetArea:
        return self.area.padded(self["area.margin_deg"])

    @property
    def plan(self) -> SnapshotPlan:
        return build_snapshots(self["time.total_duration_s"],
                               self["time.snapshot_count"],
                               self["time.slot_duration_s"])

    @property
    def link_params(self) -> LinkBudgetParams:
        return LinkBudgetParams(
            carrier_frequency_ghz=self["link.carrier_frequency_ghz"],
            system_bandwidth_mhz=self["link.system_bandwidth_mhz"],
            shadow_sigma_db=self["link.shadow_sigma_db"],
            extra_loss_db=self["link.extra_loss_db"],
            ue_rx_gain_dbi=self["link.ue_rx_gain_dbi"],
            ue_g_over_t_db_k=self["link.ue_g_over_t_db_k"],
            noise_temperature_k=self["link.noise_temperature_k"])

    def array_config(self, tier: str) -> ArrayConfig:
        n = self["array.service_elements" if tier == "service" else "array.broadcast_elements"]
        dens = self["array.service_eirp_density_dbw_mhz" if tier == "service"
                    else "array.broadcast_eirp_density_dbw_mhz"]
        return ArrayConfig(elements_x=n, elements_y=n,
                           boresight_eirp_density_dbw_mhz=dens, beam_tier=tier,
                           element_beamwidth_deg=self["array.element_beamwidth_deg"],
                           element_peak_dbi=self["array.element_peak_dbi"])

    @property
    def rach(self) -> RachConfig:
        return RachConfig(
            occasion_period_ms=self["rach.occasion_period_ms"],
            preambles_initial=self["rach.preambles_initial"],
            preambles_ho=self["rach.preambles_ho"],
            max_attempts=self["rach.max_attempts"],
            ho_max_attempts=self["rach.ho_max_attempts"],
            backoff_max_occasions=self["rach.backoff_max_occasions"],
            response_delay_s=self["rach.response_delay_s"])

    @property
    def policy(self) -> AssociationPolicy:
        return AssociationPolicy(
            variant=self["mobility.variant"],
            a4_threshold_db=self["mobility.a4_threshold_db"],
            t1_lookahead_snapshots=self["mobility.t1_lookahead"],
            ho_window_s=self["mobility.ho_window_s"])


def resolve(overrides: dict | None = None) -> SimConfig:
    """Apply overrides onto the defaults, validating every key."""
    values = {k: spec[0] for k, spec in SCHEMA.items()}
    for key, val in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[key] = val
    cfg = SimConfig(values=values)
    _validate(cfg)
    return cfg


def _validate(cfg: SimConfig):
    for key, (default, typ, (desc, check)) in SCHEMA.items():
        v = cfg.values[key]
        if not isinstance(v, typ) or (typ is int and isinstance(v, bool)):
            raise ConfigurationError(f"config key {key!r}: expected {typ.__name__}, got {v!r}")
        if not check(v):
            raise ConfigurationError(f"config key {key!r}: value {v!r} must be {desc}")
    # cross-field invariants construct the typed views
    cfg.walker
    cfg.area
    cfg.plan
    cfg.link_params
    cfg.rach
    cfg.policy
    cfg.array_config("service")
    cfg.array_config("broadcast")
    if cfg["walker.phasing_factor"] >= cfg["walker.plane_count"]:
        raise ConfigurationError("walker.phasing_factor must be < walker.plane_count")


def parse_text(text: str) -> dict:
    """Parse dotted-key config text to a raw override dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in SCHEMA:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, raw, SCHEMA[key][1])
    return out


def load_config(path) -> SimConfig:
    """Read and resolve a config file (missing keys take defaults)."""
    with open(path) as fh:
        text = fh.read()
    return resolve(parse_text(text))


def serialize(cfg: SimConfig) -> str:
    """Canonical text form: every key, sorted, values repr-round-trippable."""
    lines = [f"{key} = {_fmt_value(cfg.values[key])}" for key in sorted(SCHEMA)]
    return "\n".join(lines) + "\n"


def desk_profile() -> dict:
    """Desk-scale acceptance profile: quarter area, 50 snapshots."""
    return {
        "area.lon_min": 95.0, "area.lon_max": 105.0,
        "area.lat_min": 30.0, "area.lat_max": 40.0,
        "time.total_duration_s": 500.0, "time.snapshot_count": 50,
    }
