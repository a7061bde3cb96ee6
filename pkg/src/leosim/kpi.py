"""KPI computation: constellation KPIs and radio-interface KPIs.

Statistics are collected only over target cells/satellites; interferers
contribute interference but never samples.  Percentiles use the
nearest-rank method throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .constants import SPEED_OF_LIGHT_M_S
from .linkbudget import (ArrayConfig, LinkBudgetParams, element_gain_db,
                         noise_power, path_loss)
from .orbits import ConfigurationError

CONTROL_PLANE_TRAVERSALS = 7    # one-way propagation legs in the setup exchange


def nearest_rank(values, pct: float):
    """Nearest-rank percentile: value at index ceil(p/100 * n), 1-based."""
    arr = np.sort(np.asarray(values))
    if arr.size == 0:
        return None
    k = max(1, int(math.ceil(pct / 100.0 * arr.size)))
    return arr[k - 1].item()


def percentile_summary(values) -> dict:
    arr = np.asarray(values)
    if arr.size == 0:
        return {"p5": None, "p50": None, "p95": None, "n": 0}
    return {"p5": nearest_rank(arr, 5), "p50": nearest_rank(arr, 50),
            "p95": nearest_rank(arr, 95), "n": int(arr.size)}


def n_asset_coverage(cell_ecef: np.ndarray, sat_positions: np.ndarray,
                     service_array: ArrayConfig, params: LinkBudgetParams,
                     min_elevation_deg: float = 10.0,
                     threshold_db: float = -6.0) -> np.ndarray:
    """Per-cell count of visible satellites whose steered-beam SNR clears the threshold.

    Every visible satellite is evaluated with a hypothetical service beam
    steered at the cell center (peak gain less the element-pattern scan
    loss), clear-sky, no interference.
    """
    from .cells import elevation_matrix  # local import to avoid cycle

    elev, dist = elevation_matrix(cell_ecef, sat_positions)
    r_sat = np.linalg.norm(sat_positions, axis=-1)
    # off-nadir angle from satellite toward each cell center
    d_vec = cell_ecef[:, None, :] - sat_positions[None, :, :]
    cos_theta = np.einsum("cls,ls->cl", d_vec, -sat_positions / r_sat[:, None]) / dist
    scan = element_gain_db(cos_theta, service_array) - element_gain_db(1.0, service_array)
    eirp = (service_array.boresight_eirp_density_dbw_mhz
            + 10.0 * np.log10(params.system_bandwidth_mhz) + scan)
    pl = path_loss(dist, params.carrier_frequency_ghz, 0.0, params.extra_loss_db)
    n0 = noise_power(params.noise_temperature_k, params.system_bandwidth_mhz)
    snr = eirp + params.ue_rx_gain_dbi - pl - n0
    if math.isinf(threshold_db) and threshold_db < 0:
        ok = elev >= min_elevation_deg
    else:
        ok = (elev >= min_elevation_deg) & (snr > threshold_db)
    return ok.sum(axis=1)


def area_traffic_capacity(delivered_bits: float, area_km2: float,
                          duration_s: float) -> float:
    """Delivered downlink traffic per unit area (bps/km^2)."""
    if area_km2 <= 0 or duration_s <= 0:
        raise ConfigurationError("area and duration must be positive")
    return delivered_bits / (area_km2 * duration_s)


def service_availability(lit_slot_counts: np.ndarray, total_slots: int) -> np.ndarray:
    """Per-cell fraction of slots with at least one service beam."""
    if total_slots <= 0:
        raise ConfigurationError("total_slots must be positive")
    return np.asarray(lit_slot_counts, dtype=np.float64) / float(total_slots)


def user_experienced_rate(per_ue_rate_bps) -> float | None:
    """5th percentile of per-UE time-averaged throughput over connected time."""
    arr = np.asarray(per_ue_rate_bps, dtype=np.float64)
    if arr.size == 0:
        return None
    return float(nearest_rank(arr, 5))


def unmet_capacity(required_bps: np.ndarray, offered_bps: np.ndarray) -> np.ndarray:
    """Per-cell positive gap between required and offered rate."""
    return np.maximum(0.0, np.asarray(required_bps) - np.asarray(offered_bps))


def peak_data_rate(bandwidth_hz: float, spectral_efficiency_cap: float) -> float:
    if bandwidth_hz <= 0 or spectral_efficiency_cap <= 0:
        raise ConfigurationError("peak-rate inputs must be positive")
    return bandwidth_hz * spectral_efficiency_cap


def plane_latency(distance_km: float, processing_ms: float, purpose: str,
                  control_traversals: int = CONTROL_PLANE_TRAVERSALS) -> float:
    """One-way user-plane / message-sequence control-plane latency (ms)."""
    if distance_km <= 0:
        raise ConfigurationError("distance must be positive")
    prop_ms = distance_km * 1000.0 / SPEED_OF_LIGHT_M_S * 1000.0
    if purpose == "user":
        return prop_ms + processing_ms
    if purpose == "control":
        return control_traversals * prop_ms + processing_ms
    raise ConfigurationError(f"unknown latency purpose {purpose!r}")


@dataclass
class KpiInputs:
    """Aggregated run data feeding the report (target scope only)."""
    n_asset_samples: np.ndarray          # (cells x snapshots,) counts
    availability_fraction: np.ndarray    # per target cell
    capacity_per_snapshot_bps_km2: np.ndarray
    total_delivered_bits: int
    area_km2: float
    duration_s: float
    per_ue_rate_bps: np.ndarray
    required_bps_per_cell: np.ndarray
    offered_bps_per_cell: np.ndarray
    hotspot_cell_ids: list
    cell_ids: list                       # target service cell ids, aligned with per-cell arrays
    access_success_global: float | None
    access_success_per_cell: dict
    access_capacity_per_cell: dict
    interruption_s: np.ndarray
    ho_failure_per_cell: dict
    ho_failure_global: float | None
    ho_total_events: int
    bandwidth_hz: float
    rate_cap_bps_hz: float
    nadir_distance_km: float
    edge_distance_km: float
    processing_ms: float = 0.0


def summarize(data: KpiInputs) -> dict:
    """Build the canonical KPI report dictionary."""
    unmet = unmet_capacity(data.required_bps_per_cell, data.offered_bps_per_cell)
    demand = np.asarray(data.required_bps_per_cell, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        unmet_frac = np.where(demand > 0, unmet / demand, 0.0)

    access_vals = [v for v in data.access_success_per_cell.values() if v is not None]
    ho_vals = [v for v in data.ho_failure_per_cell.values() if v is not None]
    cap_counts = {c: sum(w.values()) for c, w in data.access_capacity_per_cell.items()}

    report = {
        "constellation": {
            "n_asset_coverage": percentile_summary(data.n_asset_samples),
            "area_traffic_capacity_bps_km2": {
                **percentile_summary(data.capacity_per_snapshot_bps_km2),
                "overall": area_traffic_capacity(
                    data.total_delivered_bits, data.area_km2, data.duration_s),
            },
            "service_availability_fraction": percentile_summary(data.availability_fraction),
        },
        "rit": {
            "peak_data_rate_bps": peak_data_rate(data.bandwidth_hz, data.rate_cap_bps_hz),
            "user_experienced_rate_bps": {
                "p5": user_experienced_rate(data.per_ue_rate_bps),
                **{k: v for k, v in percentile_summary(data.per_ue_rate_bps).items()
                   if k != "p5"},
            },
            "unmet_capacity_bps": percentile_summary(unmet),
            "unmet_fraction_of_demand": percentile_summary(unmet_frac),
            "user_plane_latency_ms": {
                "nadir_one_way": plane_latency(data.nadir_distance_km, data.processing_ms, "user"),
                "edge_one_way": plane_latency(data.edge_distance_km, data.processing_ms, "user"),
            },
            "control_plane_latency_ms": {
                "nadir": plane_latency(data.nadir_distance_km, data.processing_ms, "control"),
                "edge": plane_latency(data.edge_distance_km, data.processing_ms, "control"),
            },
            "access_success_probability": {
                "global": data.access_success_global,
                **percentile_summary(access_vals),
                "min": min(access_vals) if access_vals else None,
            },
            "access_capacity_connected_ues": percentile_summary(list(cap_counts.values())),
            "mobility_interruption_s": {
                **percentile_summary(data.interruption_s),
                "mean": float(np.mean(data.interruption_s)) if len(data.interruption_s) else None,
            },
            "handover_failure_rate": {
                "global": data.ho_failure_global,
                "total_events": data.ho_total_events,
                **percentile_summary(ho_vals),
                "max": max(ho_vals) if ho_vals else None,
            },
        },
        "scope": {
            "target_cells": len(data.cell_ids),
            "hotspot_cells": len(data.hotspot_cell_ids),
            "area_km2": data.area_km2,
            "duration_s": data.duration_s,
        },
    }
    return report


def _to_native(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def report_to_json(report: dict) -> str:
    """Canonical serialization: sorted keys, fixed layout."""
    return json.dumps(report, sort_keys=True, indent=2, default=_to_native) + "\n"
