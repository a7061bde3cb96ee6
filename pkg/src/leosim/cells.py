"""Spherical-cell tessellation, hotspot classification and visibility sets.

Cells are regular hexagons laid out pointy-top on a row lattice: rows are
spaced 1.5 * r in latitude and each row's centers are spaced sqrt(3) * r
along its own parallel, with alternate rows offset by half a step.  Using
the row's own cos(latitude) keeps ground distances true everywhere, so
the lattice density is uniform and the covering radius stays below the
declared circumradius (a 0.5% spacing margin absorbs the residual
spherical distortion).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import R_EARTH_KM
from .orbits import ConfigurationError, SatelliteEphemeris
from .rng import stream

SQRT3 = math.sqrt(3.0)
# lattice spacing shrink keeping every point of the plane within the
# circumradius of a center despite projection distortion
SPACING_MARGIN = 0.995


@dataclass(frozen=True)
class GeoPoint:
    latitude_deg: float
    longitude_deg: float
    altitude_m: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ConfigurationError(f"latitude {self.latitude_deg} outside [-90, 90]")
        if not -180.0 <= self.longitude_deg <= 180.0:
            raise ConfigurationError(f"longitude {self.longitude_deg} outside [-180, 180]")
        if self.altitude_m < 0:
            raise ConfigurationError("altitude must be >= 0")


@dataclass(frozen=True)
class TargetArea:
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float

    def __post_init__(self):
        if not (self.lon_min < self.lon_max and self.lat_min < self.lat_max):
            raise ConfigurationError("target area bounds must satisfy min < max")

    def contains(self, lat_deg, lon_deg):
        return ((lat_deg >= self.lat_min) & (lat_deg <= self.lat_max)
                & (lon_deg >= self.lon_min) & (lon_deg <= self.lon_max))

    def padded(self, pad_deg: float) -> "TargetArea":
        return TargetArea(self.lon_min - pad_deg, self.lon_max + pad_deg,
                          self.lat_min - pad_deg, self.lat_max + pad_deg)

    @property
    def area_km2(self) -> float:
        dlon = math.radians(self.lon_max - self.lon_min)
        return (R_EARTH_KM ** 2 * dlon
                * (math.sin(math.radians(self.lat_max)) - math.sin(math.radians(self.lat_min))))


@dataclass(frozen=True)
class SphericalCell:
    cell_id: int
    center: GeoPoint
    circumradius_km: float
    vertices: tuple
    tier: str                   # "broadcast" | "service"
    traffic_class: str = "normal"   # "hotspot" | "normal"

    @property
    def area_km2(self) -> float:
        # nominal regular-hexagon area
        return 1.5 * SQRT3 * self.circumradius_km ** 2


@dataclass(frozen=True)
class LinkGeometry:
    elevation_deg: float
    azimuth_deg: float
    slant_distance_km: float
    off_boresight_theta_rad: float
    off_boresight_phi_rad: float


@dataclass(frozen=True)
class SnapshotSatSets:
    snapshot_index: int
    target_sat_ids: tuple
    interferer_sat_ids: tuple

    def __post_init__(self):
        if not set(self.target_sat_ids) <= set(self.interferer_sat_ids):
            raise ConfigurationError("target satellites must be a subset of the interfering set")


def geodetic_to_ecef_arrays(lat_deg, lon_deg, alt_m=0.0):
    """Spherical-Earth geodetic -> ECEF (km); accepts scalars or arrays."""
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    r = R_EARTH_KM + np.asarray(alt_m, dtype=np.float64) / 1000.0
    cl = np.cos(lat)
    return np.stack([r * cl * np.cos(lon), r * cl * np.sin(lon), r * np.sin(lat)], axis=-1)


def geodetic_to_ecef(p: GeoPoint) -> np.ndarray:
    return geodetic_to_ecef_arrays(p.latitude_deg, p.longitude_deg, p.altitude_m)


def ecef_to_geodetic(xyz) -> GeoPoint:
    xyz = np.asarray(xyz, dtype=np.float64)
    r = float(np.linalg.norm(xyz))
    lat = math.degrees(math.asin(xyz[2] / r))
    lon = math.degrees(math.atan2(xyz[1], xyz[0]))
    return GeoPoint(lat, lon, max(0.0, (r - R_EARTH_KM) * 1000.0))


def subsatellite_lat_lon(positions_km: np.ndarray):
    """Nadir-point latitudes/longitudes (deg) for position array (n, 3)."""
    r = np.linalg.norm(positions_km, axis=-1)
    lat = np.degrees(np.arcsin(positions_km[..., 2] / r))
    lon = np.degrees(np.arctan2(positions_km[..., 1], positions_km[..., 0]))
    return lat, lon


def slant_range_km(altitude_km: float, elevation_deg: float) -> float:
    """Slant range to a satellite at the given elevation (spherical Earth)."""
    if altitude_km <= 0:
        raise ConfigurationError("altitude must be positive")
    e = math.radians(elevation_deg)
    ratio = 1.0 + altitude_km / R_EARTH_KM
    return R_EARTH_KM * (math.sqrt(ratio ** 2 - math.cos(e) ** 2) - math.sin(e))


def coverage_central_angle_rad(altitude_km: float, min_elevation_deg: float) -> float:
    """Earth central angle of the visibility cone above the elevation mask."""
    e = math.radians(min_elevation_deg)
    return math.acos(R_EARTH_KM * math.cos(e) / (R_EARTH_KM + altitude_km)) - e


def great_circle_km(lat1, lon1, lat2, lon2):
    """Haversine distance on the spherical Earth (degrees in, km out)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * R_EARTH_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def geodesic_destination(lat_deg, lon_deg, bearing_deg, distance_km):
    """Point reached from (lat, lon) on the given initial bearing."""
    d = distance_km / R_EARTH_KM
    b = math.radians(bearing_deg)
    p1 = math.radians(lat_deg)
    l1 = math.radians(lon_deg)
    p2 = math.asin(math.sin(p1) * math.cos(d) + math.cos(p1) * math.sin(d) * math.cos(b))
    l2 = l1 + math.atan2(math.sin(b) * math.sin(d) * math.cos(p1),
                         math.cos(d) - math.sin(p1) * math.sin(p2))
    lon2 = math.degrees(l2)
    if lon2 > 180.0:
        lon2 -= 360.0
    elif lon2 < -180.0:
        lon2 += 360.0
    return math.degrees(p2), lon2


def _hex_vertices(center_lat, center_lon, circumradius_km):
    # pointy-top: first vertex due north
    return tuple(GeoPoint(*geodesic_destination(center_lat, center_lon, 60.0 * k, circumradius_km))
                 for k in range(6))


def tessellate(area: TargetArea, circumradius_km: float, tier: str) -> list[SphericalCell]:
    """Tile the area with hexagonal cells of the given circumradius.

    Cell centers may fall up to one circumradius outside the area so that
    every interior point is covered.  Ids are row-major: south-to-north
    rows, west-to-east within a row.
    """
    if circumradius_km <= 0:
        raise ConfigurationError("circumradius must be positive")
    if tier not in ("broadcast", "service"):
        raise ConfigurationError(f"unknown tier {tier!r}")

    r_s = circumradius_km * SPACING_MARGIN
    row_step_deg = math.degrees(1.5 * r_s / R_EARTH_KM)
    margin_deg = math.degrees(circumradius_km / R_EARTH_KM)

    lat_lo = area.lat_min - margin_deg
    lat_hi = area.lat_max + margin_deg
    lat_c = 0.5 * (area.lat_min + area.lat_max)
    lon_c = 0.5 * (area.lon_min + area.lon_max)

    j_min = math.floor((lat_lo - lat_c) / row_step_deg)
    j_max = math.ceil((lat_hi - lat_c) / row_step_deg)

    cells = []
    cid = 0
    for j in range(j_min, j_max + 1):
        lat = lat_c + j * row_step_deg
        if not lat_lo <= lat <= lat_hi or abs(lat) >= 90.0:
            continue
        col_step_deg = math.degrees(SQRT3 * r_s / (R_EARTH_KM * math.cos(math.radians(lat))))
        offset = 0.5 * col_step_deg if (j % 2) else 0.0
        lon_margin = margin_deg / math.cos(math.radians(lat))
        i_min = math.floor((area.lon_min - lon_margin - lon_c - offset) / col_step_deg)
        i_max = math.ceil((area.lon_max + lon_margin - lon_c - offset) / col_step_deg)
        for i in range(i_min, i_max + 1):
            lon = lon_c + offset + i * col_step_deg
            if not area.lon_min - lon_margin <= lon <= area.lon_max + lon_margin:
                continue
            cells.append(SphericalCell(
                cell_id=cid,
                center=GeoPoint(lat, lon),
                circumradius_km=circumradius_km,
                vertices=_hex_vertices(lat, lon, circumradius_km),
                tier=tier,
            ))
            cid += 1
    return cells


def cell_centers(cells) -> np.ndarray:
    return np.array([[c.center.latitude_deg, c.center.longitude_deg] for c in cells])


def adjacency_lists(cells, tolerance: float = 1.01) -> list[np.ndarray]:
    """Neighbor ids per cell: centers within sqrt(3) * circumradius * tolerance."""
    if not cells:
        return []
    ll = cell_centers(cells)
    thresh = SQRT3 * cells[0].circumradius_km * tolerance
    out = []
    for k in range(len(cells)):
        d = great_circle_km(ll[k, 0], ll[k, 1], ll[:, 0], ll[:, 1])
        nb = np.where((d <= thresh) & (np.arange(len(cells)) != k))[0]
        out.append(nb.astype(np.int32))
    return out


def classify_hotspots(cells, hotspot_count: int, rng_seed: int,
                      eligible_ids=None) -> list[SphericalCell]:
    """Mark hotspot_count cells as hotspots, deterministically per seed."""
    pool = list(eligible_ids) if eligible_ids is not None else [c.cell_id for c in cells]
    if hotspot_count > len(pool):
        raise ConfigurationError(
            f"hotspot_count {hotspot_count} exceeds eligible cells {len(pool)}")
    rng = stream(rng_seed, "hotspots")
    chosen = set(rng.choice(np.array(sorted(pool)), size=hotspot_count, replace=False).tolist()) \
        if hotspot_count else set()
    return [replace(c, traffic_class="hotspot" if c.cell_id in chosen else "normal")
            for c in cells]


def satellite_frame(sat_position_km: np.ndarray, sat_velocity_km_s: np.ndarray):
    """Antenna frame of a satellite: +z nadir, +x along-track, +y completing."""
    z = -sat_position_km / np.linalg.norm(sat_position_km)
    v = sat_velocity_km_s - np.dot(sat_velocity_km_s, z) * z
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        # degenerate (radial velocity); pick any deterministic transverse axis
        ref = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        v = ref - np.dot(ref, z) * z
        nv = np.linalg.norm(v)
    x = v / nv
    y = np.cross(z, x)
    return x, y, z


def link_geometry(ue: GeoPoint, sat: SatelliteEphemeris,
                  boresight: np.ndarray | None = None) -> LinkGeometry:
    """Elevation/azimuth/slant range and off-boresight angles to a satellite.

    The off-boresight angles are measured in the satellite antenna frame
    whose +z axis is the nadir direction (or an explicit boresight unit
    vector).  Negative elevations are returned, not raised.
    """
    ue_ecef = geodetic_to_ecef(ue)
    r_sat = np.linalg.norm(sat.position_km)
    if r_sat <= R_EARTH_KM:
        raise ConfigurationError("satellite below Earth surface")
    d_vec = sat.position_km - ue_ecef
    d = float(np.linalg.norm(d_vec))

    up = ue_ecef / np.linalg.norm(ue_ecef)
    east = np.cross(np.array([0.0, 0.0, 1.0]), up)
    ne = np.linalg.norm(east)
    east = east / ne if ne > 1e-12 else np.array([0.0, 1.0, 0.0])
    north = np.cross(up, east)

    d_hat = d_vec / d
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, float(np.dot(d_hat, up))))))
    azimuth = math.degrees(math.atan2(float(np.dot(d_hat, east)), float(np.dot(d_hat, north)))) % 360.0

    x, y, z = satellite_frame(sat.position_km, sat.velocity_km_s)
    if boresight is not None:
        z = np.asarray(boresight, dtype=np.float64)
        z = z / np.linalg.norm(z)
        x = np.cross((np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])), z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
    to_ue = -d_hat
    theta = math.acos(max(-1.0, min(1.0, float(np.dot(to_ue, z)))))
    phi = math.atan2(float(np.dot(to_ue, y)), float(np.dot(to_ue, x)))
    return LinkGeometry(elevation_deg=elevation, azimuth_deg=azimuth,
                        slant_distance_km=d, off_boresight_theta_rad=theta,
                        off_boresight_phi_rad=phi)


def elevation_matrix(cell_ecef: np.ndarray, sat_positions: np.ndarray):
    """Elevation (deg) and slant distance (km) for every (cell, satellite)."""
    d_vec = sat_positions[None, :, :] - cell_ecef[:, None, :]
    d = np.linalg.norm(d_vec, axis=-1)
    up = cell_ecef / np.linalg.norm(cell_ecef, axis=-1, keepdims=True)
    sin_el = np.einsum("cls,cs->cl", d_vec, up) / d
    return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0))), d


def select_target_satellites(sat_positions: np.ndarray, sat_ids: np.ndarray,
                             area: TargetArea) -> np.ndarray:
    """Satellites whose sub-satellite point lies inside the area."""
    lat, lon = subsatellite_lat_lon(sat_positions)
    return np.asarray(sat_ids)[area.contains(lat, lon)]


def select_interfering_satellites(sat_positions: np.ndarray, sat_ids: np.ndarray,
                                  cell_ecef: np.ndarray,
                                  min_elevation_deg: float) -> np.ndarray:
    """Satellites at or above min elevation from at least one cell center."""
    if len(cell_ecef) == 0:
        return np.asarray(sat_ids)[:0]
    elev, _ = elevation_matrix(cell_ecef, sat_positions)
    return np.asarray(sat_ids)[(elev >= min_elevation_deg).any(axis=0)]


def cells_to_csv(cells, path, in_target=None):
    """Write the cell set (id, center, radius, tier, class) as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["cell_id", "center_lat_deg", "center_lon_deg",
                  "circumradius_km", "tier", "traffic_class"]
        if in_target is not None:
            header.append("in_target")
        w.writerow(header)
        for k, c in enumerate(cells):
            row = [c.cell_id, f"{c.center.latitude_deg:.6f}", f"{c.center.longitude_deg:.6f}",
                   c.circumradius_km, c.tier, c.traffic_class]
            if in_target is not None:
                row.append(int(in_target[k]))
            w.writerow(row)
