"""Walker constellation generation and circular-orbit propagation.

Satellites move on circular orbits (e = 0).  Two propagation models are
available: pure Keplerian two-body motion and Kepler plus the secular J2
drift of the ascending node.  Positions are reported in an Earth-fixed
frame obtained by rotating the inertial frame about +z by the sidereal
angle; the frame coincides with the inertial frame at t = 0.

Velocity vectors are the inertial velocities expressed on Earth-fixed
axes (no transport term), so |v| = sqrt(mu/a) exactly for every epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import J2, MU_KM3_S2, OMEGA_EARTH_RAD_S, R_EARTH_KM, R_EQUATOR_KM

TWO_PI = 2.0 * math.pi


class ConfigurationError(ValueError):
    """Raised for invalid constellation or snapshot parameters."""


@dataclass(frozen=True)
class WalkerConfig:
    pattern: str = "delta"          # "delta" or "polar"
    plane_count: int = 60
    sats_per_plane: int = 30
    inclination_deg: float = 55.0
    altitude_km: float = 508.0
    phasing_factor: int = 1
    epoch_s: float = 0.0

    def __post_init__(self):
        if self.pattern not in ("delta", "polar"):
            raise ConfigurationError(f"walker pattern must be delta or polar, got {self.pattern!r}")
        if self.plane_count < 1 or self.sats_per_plane < 1:
            raise ConfigurationError("plane_count and sats_per_plane must be >= 1")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ConfigurationError(f"inclination {self.inclination_deg} outside [0, 180]")
        if not 0 <= self.phasing_factor < self.plane_count:
            raise ConfigurationError("phasing_factor must satisfy 0 <= F < plane_count")
        if self.altitude_km <= 0:
            raise ConfigurationError("altitude must be positive")

    @property
    def total_sats(self) -> int:
        return self.plane_count * self.sats_per_plane

    @property
    def raan_spacing_rad(self) -> float:
        span = TWO_PI if self.pattern == "delta" else math.pi
        return span / self.plane_count


@dataclass(frozen=True)
class OrbitalElements:
    sat_id: int
    semi_major_axis_km: float
    inclination_rad: float
    raan_rad: float
    mean_anomaly_rad: float
    eccentricity: float = 0.0
    arg_perigee_rad: float = 0.0


@dataclass(frozen=True)
class SatelliteEphemeris:
    sat_id: int
    position_km: np.ndarray     # Earth-fixed cartesian
    velocity_km_s: np.ndarray   # inertial velocity on Earth-fixed axes
    snapshot_index: int = 0


@dataclass(frozen=True)
class SnapshotPlan:
    snapshot_count: int
    snapshot_duration_s: float
    slot_duration_s: float
    slots_per_snapshot: int

    @property
    def total_duration_s(self) -> float:
        return self.snapshot_count * self.snapshot_duration_s

    def snapshot_start(self, index: int) -> float:
        return index * self.snapshot_duration_s


def generate_walker(config: WalkerConfig) -> list[OrbitalElements]:
    """Build the constellation's orbital elements in plane-major order.

    Plane k has RAAN = k * (360/P for delta, 180/P for polar); slot m of
    plane k has mean anomaly m * 360/S + k * F * 360/(P*S).
    """
    a = R_EARTH_KM + config.altitude_km
    inc = math.radians(config.inclination_deg)
    d_raan = config.raan_spacing_rad
    d_anom = TWO_PI / config.sats_per_plane
    d_phase = config.phasing_factor * TWO_PI / config.total_sats

    elements = []
    for k in range(config.plane_count):
        raan = (k * d_raan) % TWO_PI
        for m in range(config.sats_per_plane):
            anomaly = (m * d_anom + k * d_phase) % TWO_PI
            elements.append(OrbitalElements(
                sat_id=k * config.sats_per_plane + m,
                semi_major_axis_km=a,
                inclination_rad=inc,
                raan_rad=raan,
                mean_anomaly_rad=anomaly,
            ))
    return elements


def orbital_period_s(a_km: float) -> float:
    return TWO_PI * math.sqrt(a_km ** 3 / MU_KM3_S2)


def mean_motion_rad_s(a_km: float) -> float:
    return math.sqrt(MU_KM3_S2 / a_km ** 3)


def raan_drift_rad_s(a_km: float, inclination_rad: float) -> float:
    """Secular J2 nodal drift for a circular orbit."""
    n = mean_motion_rad_s(a_km)
    return -1.5 * n * J2 * (R_EQUATOR_KM / a_km) ** 2 * math.cos(inclination_rad)


def propagate_batch(a_km: float, inc_rad: float, raan: np.ndarray,
                    anomaly0: np.ndarray, t: float, j2: bool = False):
    """Propagate many same-shell satellites to time t.

    Returns (positions, velocities) with shape (n, 3), Earth-fixed.
    """
    raan = np.asarray(raan, dtype=np.float64)
    anomaly0 = np.asarray(anomaly0, dtype=np.float64)
    n = mean_motion_rad_s(a_km)
    u = anomaly0 + n * t                       # argument of latitude (circular)
    om = raan + (raan_drift_rad_s(a_km, inc_rad) * t if j2 else 0.0)

    cu, su = np.cos(u), np.sin(u)
    ci, si = math.cos(inc_rad), math.sin(inc_rad)
    co, so = np.cos(om), np.sin(om)

    # perifocal -> inertial (circular orbit, omega = 0)
    xi = a_km * cu
    yi = a_km * su * ci
    zi = a_km * su * si
    x_eci = co * xi - so * yi
    y_eci = so * xi + co * yi

    v = a_km * n
    vxi = -v * su
    vyi = v * cu * ci
    vzi = v * cu * si
    vx_eci = co * vxi - so * vyi
    vy_eci = so * vxi + co * vyi

    # inertial -> Earth-fixed: rotate about +z by the sidereal angle
    g = OMEGA_EARTH_RAD_S * t
    cg, sg = math.cos(g), math.sin(g)
    pos = np.empty(raan.shape + (3,))
    vel = np.empty_like(pos)
    pos[..., 0] = cg * x_eci + sg * y_eci
    pos[..., 1] = -sg * x_eci + cg * y_eci
    pos[..., 2] = zi
    vel[..., 0] = cg * vx_eci + sg * vy_eci
    vel[..., 1] = -sg * vx_eci + cg * vy_eci
    vel[..., 2] = vzi
    return pos, vel


def _propagate_one(elements: OrbitalElements, t: float, j2: bool,
                   snapshot_index: int) -> SatelliteEphemeris:
    pos, vel = propagate_batch(
        elements.semi_major_axis_km, elements.inclination_rad,
        np.array([elements.raan_rad]), np.array([elements.mean_anomaly_rad]),
        t, j2=j2)
    return SatelliteEphemeris(sat_id=elements.sat_id, position_km=pos[0],
                              velocity_km_s=vel[0], snapshot_index=snapshot_index)


def propagate_kepler(elements: OrbitalElements, t: float,
                     snapshot_index: int = 0) -> SatelliteEphemeris:
    """Two-body circular propagation: M(t) = M0 + n t."""
    if t < 0:
        raise ConfigurationError("propagation time must be >= 0")
    return _propagate_one(elements, t, j2=False, snapshot_index=snapshot_index)


def propagate_j2(elements: OrbitalElements, t: float,
                 snapshot_index: int = 0) -> SatelliteEphemeris:
    """Kepler propagation plus secular RAAN drift Omega(t) = Omega0 + dOmega t."""
    if t < 0:
        raise ConfigurationError("propagation time must be >= 0")
    return _propagate_one(elements, t, j2=True, snapshot_index=snapshot_index)


def build_snapshots(total_duration_s: float, snapshot_count: int,
                    slot_duration_s: float) -> SnapshotPlan:
    """Split the simulated time into equal snapshots on an exact slot grid."""
    if snapshot_count < 1:
        raise ConfigurationError("snapshot_count must be >= 1")
    if total_duration_s <= 0 or slot_duration_s <= 0:
        raise ConfigurationError("durations must be positive")
    snap = total_duration_s / snapshot_count
    if abs(snap * snapshot_count - total_duration_s) > 1e-9 * total_duration_s:
        raise ConfigurationError(
            f"total duration {total_duration_s} not divisible into {snapshot_count} snapshots")
    slots = round(snap / slot_duration_s)
    if slots < 1 or abs(slots * slot_duration_s - snap) > 1e-9 * snap:
        raise ConfigurationError(
            f"snapshot duration {snap} not divisible by slot {slot_duration_s}")
    return SnapshotPlan(snapshot_count=snapshot_count, snapshot_duration_s=snap,
                        slot_duration_s=slot_duration_s, slots_per_snapshot=slots)
