"""UE deployment and Poisson session workloads.

UEs are stationary and uniformly placed inside their home hexagon (disk
rejection sampling).  Each UE generates sessions as a homogeneous Poisson
process; a session is an elastic transfer that injects one fixed-size
packet at its start and then every ``packet_interval_s`` of session time.
All bit accounting is integral so conservation checks are exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .cells import GeoPoint, SQRT3
from .constants import R_EARTH_KM
from .orbits import ConfigurationError
from .rng import stream

PACKET_BITS_DEFAULT = 4_000_000          # 0.5 MByte
PACKET_INTERVAL_S_DEFAULT = 3.0


@dataclass(frozen=True)
class UeRecord:
    ue_id: int
    home_cell_id: int
    position: GeoPoint
    rng_stream_id: int


@dataclass(frozen=True)
class Session:
    ue_id: int
    arrival_time_s: float
    duration_s: float
    demand_bits: int

    def __post_init__(self):
        if self.arrival_time_s < 0 or self.duration_s <= 0:
            raise ConfigurationError("session must have arrival >= 0 and duration > 0")


class TrafficState:
    """Per-cell generated/delivered bit accumulators for one window."""

    def __init__(self, n_cells: int):
        self.generated_bits = np.zeros(n_cells, dtype=np.int64)
        self.delivered_bits = np.zeros(n_cells, dtype=np.int64)

    def reset(self):
        self.generated_bits[:] = 0
        self.delivered_bits[:] = 0


def point_in_hexagon(x_km: float, y_km: float, circumradius_km: float) -> bool:
    """Membership test for a pointy-top hexagon centered at the origin."""
    r = circumradius_km
    return abs(x_km) <= SQRT3 * r / 2 + 1e-12 and abs(y_km) <= r - abs(x_km) / SQRT3 + 1e-12


def _sample_in_hexagon(rng, circumradius_km):
    # uniform in the circumscribing disk, rejected to the hexagon
    while True:
        x, y = rng.uniform(-circumradius_km, circumradius_km, size=2)
        if x * x + y * y > circumradius_km ** 2:
            continue
        if point_in_hexagon(x, y, circumradius_km):
            return x, y


def deploy_ues(cells, counts_by_class: dict, seed: int) -> list[UeRecord]:
    """Place UEs uniformly in each cell; count per cell set by traffic class."""
    for cls, count in counts_by_class.items():
        if count < 0:
            raise ConfigurationError(f"negative UE count for class {cls!r}")
    ues = []
    ue_id = 0
    for cell in cells:
        count = counts_by_class.get(cell.traffic_class, 0)
        if count == 0:
            continue
        rng = stream(seed, "ue_deploy", cell.cell_id)
        clat = cell.center.latitude_deg
        clon = cell.center.longitude_deg
        for _ in range(count):
            x, y = _sample_in_hexagon(rng, cell.circumradius_km)
            lat = clat + math.degrees(y / R_EARTH_KM)
            lon = clon + math.degrees(x / (R_EARTH_KM * math.cos(math.radians(lat))))
            ues.append(UeRecord(ue_id=ue_id, home_cell_id=cell.cell_id,
                                position=GeoPoint(lat, lon), rng_stream_id=ue_id))
            ue_id += 1
    return ues


def session_packet_count(duration_s: float, packet_interval_s: float) -> int:
    """Packets injected over a session: one at start, one per interval."""
    return int(math.ceil(duration_s / packet_interval_s))


def generate_sessions(ue_id: int, horizon_s: float, arrival_rate_per_s: float,
                      mean_duration_s: float, seed: int,
                      packet_interval_s: float = PACKET_INTERVAL_S_DEFAULT,
                      packet_bits: int = PACKET_BITS_DEFAULT) -> list[Session]:
    """Poisson session arrivals with exponential durations for one UE."""
    if horizon_s <= 0:
        raise ConfigurationError("horizon must be positive")
    if arrival_rate_per_s < 0:
        raise ConfigurationError("arrival rate must be >= 0")
    if arrival_rate_per_s == 0.0:
        return []
    rng = stream(seed, "sessions", ue_id)
    out = []
    t = rng.exponential(1.0 / arrival_rate_per_s)
    while t < horizon_s:
        duration = rng.exponential(mean_duration_s)
        if duration > 0.0:
            n_packets = session_packet_count(duration, packet_interval_s)
            out.append(Session(ue_id=ue_id, arrival_time_s=float(t),
                               duration_s=float(duration),
                               demand_bits=n_packets * packet_bits))
        t += rng.exponential(1.0 / arrival_rate_per_s)
    return out


def packet_times(session: Session, packet_interval_s: float = PACKET_INTERVAL_S_DEFAULT):
    """Injection instants of a session's packets."""
    n = session_packet_count(session.duration_s, packet_interval_s)
    return session.arrival_time_s + packet_interval_s * np.arange(n)


def offered_and_required(generated_bits: int, delivered_bits: int, window_s: float):
    """(offered bps, required bps, unmet bps) for one cell over a window."""
    if window_s <= 0:
        raise ConfigurationError("window must be positive")
    required = generated_bits / window_s
    offered = delivered_bits / window_s
    return offered, required, max(0.0, required - offered)


def workload_to_csv(sessions, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue_id", "arrival_time_s", "duration_s", "demand_bits"])
        for s in sessions:
            w.writerow([s.ue_id, repr(s.arrival_time_s), repr(s.duration_s), s.demand_bits])


def workload_from_csv(path) -> list[Session]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(Session(ue_id=int(row["ue_id"]),
                               arrival_time_s=float(row["arrival_time_s"]),
                               duration_s=float(row["duration_s"]),
                               demand_bits=int(row["demand_bits"])))
    return out
