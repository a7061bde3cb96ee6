"""Phased-array gain, path loss, received power, noise and SINR.

The transmit pattern is a uniform planar array factor (half-wavelength
element spacing) behind a cosine-shaped element.  Relative gains are
normalized to the steered beam's own peak; the element-pattern roll-off
of that peak versus nadir is exposed separately as ``scan_loss`` and
enters the effective EIRP, so a beam steered toward the horizon cannot
radiate boresight power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import BOLTZMANN_J_K
from .orbits import ConfigurationError

DEFAULT_ELEMENT_BEAMWIDTH_DEG = 58.0
DEFAULT_ELEMENT_PEAK_DBI = 5.0
DEFAULT_ELEMENT_FLOOR_DB = 30.0


def db_to_lin(x):
    return np.power(10.0, np.asarray(x) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class ArrayConfig:
    elements_x: int
    elements_y: int
    boresight_eirp_density_dbw_mhz: float
    beam_tier: str                      # "broadcast" | "service"
    element_spacing_wl: float = 0.5
    element_beamwidth_deg: float = DEFAULT_ELEMENT_BEAMWIDTH_DEG
    element_peak_dbi: float = DEFAULT_ELEMENT_PEAK_DBI
    element_floor_db: float = DEFAULT_ELEMENT_FLOOR_DB

    def __post_init__(self):
        if self.elements_x < 1 or self.elements_y < 1:
            raise ConfigurationError("array must have at least 1x1 elements")
        if self.element_spacing_wl != 0.5:
            raise ConfigurationError("element spacing is fixed at 0.5 wavelength")

    @property
    def cos_exponent(self) -> float:
        half = math.radians(self.element_beamwidth_deg / 2.0)
        return math.log(0.5) / math.log(math.cos(half))


@dataclass(frozen=True)
class LinkBudgetParams:
    carrier_frequency_ghz: float = 3.65
    system_bandwidth_mhz: float = 30.0
    shadow_sigma_db: float = 0.0
    extra_loss_db: float = 5.5          # atmospheric + scintillation + other
    ue_rx_gain_dbi: float = 0.0
    ue_g_over_t_db_k: float = -33.62
    noise_temperature_k: float = 2303.0

    def __post_init__(self):
        got = self.ue_rx_gain_dbi - 10.0 * math.log10(self.noise_temperature_k)
        if abs(got - self.ue_g_over_t_db_k) > 0.01:
            raise ConfigurationError(
                f"G/T {self.ue_g_over_t_db_k} inconsistent with G_R/T_sys (implies {got:.4f})")


@dataclass(frozen=True)
class SinrSample:
    ue_id: int
    slot: int
    serving_dbw: float
    intra_interference_dbw: float | None
    inter_interference_dbw: float | None
    noise_dbw: float
    sinr_db: float


def angles_to_uv(theta_rad, phi_rad):
    """Direction cosines (u, v) on the array axes from polar antenna angles."""
    st = np.sin(theta_rad)
    return st * np.cos(phi_rad), st * np.sin(phi_rad)


def element_gain_db(cos_theta, config: ArrayConfig):
    """Absolute element gain (dBi) of the cosine-shaped element pattern."""
    c = np.clip(np.asarray(cos_theta, dtype=np.float64), -1.0, 1.0)
    rolloff = np.where(c > 0.0,
                       config.cos_exponent * 10.0 * np.log10(np.maximum(c, 1e-12)),
                       -config.element_floor_db)
    return config.element_peak_dbi + np.maximum(rolloff, -config.element_floor_db)


def _dirichlet(x, m):
    """|sin(m x) / (m sin x)| with its limits at x = k*pi."""
    x = np.asarray(x, dtype=np.float64)
    s = np.sin(x)
    small = np.abs(s) < 1e-12
    safe = np.where(small, 1.0, s)
    out = np.abs(np.sin(m * x) / (m * safe))
    return np.where(small, 1.0, out)


def array_factor_db(du, dv, config: ArrayConfig):
    """Planar array-factor power gain relative to its peak (<= 0 dB)."""
    # phase across adjacent elements is 2*pi*spacing*du; Dirichlet arg is half
    fx = _dirichlet(np.pi * config.element_spacing_wl * np.asarray(du), config.elements_x)
    fy = _dirichlet(np.pi * config.element_spacing_wl * np.asarray(dv), config.elements_y)
    mag = np.maximum(fx * fy, 1e-30)
    return 20.0 * np.log10(mag)


def array_gain_uv(config: ArrayConfig, steer_uv, eval_uv):
    """Relative gain (dB) at eval for a beam phase-steered to steer.

    Includes the element-pattern shape; normalized so eval == steer gives
    0 dB (values are clipped at 0: the composite pattern's slight peak
    shift toward boresight is folded into the steered peak).
    """
    u0, v0 = steer_uv
    u, v = eval_uv
    af = array_factor_db(np.asarray(u) - u0, np.asarray(v) - v0, config)
    w_eval = np.sqrt(np.clip(1.0 - np.asarray(u) ** 2 - np.asarray(v) ** 2, 0.0, 1.0))
    w_steer = math.sqrt(max(0.0, 1.0 - float(u0) ** 2 - float(v0) ** 2))
    rel = af + element_gain_db(w_eval, config) - element_gain_db(w_steer, config)
    return np.minimum(rel, 0.0)


def array_gain(config: ArrayConfig, steer, eval) -> float:
    """Relative gain (dB vs the steered peak) for (theta, phi) angle pairs."""
    return float(array_gain_uv(config, angles_to_uv(*steer), angles_to_uv(*eval)))


def scan_loss_db(config: ArrayConfig, steer) -> float:
    """Element-pattern loss of the steered peak relative to nadir boresight."""
    theta0 = steer[0]
    return float(element_gain_db(math.cos(theta0), config)
                 - element_gain_db(1.0, config))


def effective_eirp(config: ArrayConfig, bandwidth_mhz: float, steer, eval) -> float:
    """Beam EIRP (dBW) at the eval direction.

    The configured EIRP density anchors the nadir-steered boresight; the
    steered peak is reduced by the element-pattern scan loss.
    """
    if bandwidth_mhz <= 0:
        raise ConfigurationError("bandwidth must be positive")
    return (config.boresight_eirp_density_dbw_mhz + 10.0 * math.log10(bandwidth_mhz)
            + scan_loss_db(config, steer) + array_gain(config, steer, eval))


def path_loss(distance_km, f0_ghz, shadow_db=0.0, extra_loss_db=0.0):
    """Total path loss (dB): 32.45 + 20 log10(f_GHz * d_m) + F_s + L_g + L_s."""
    d = np.asarray(distance_km, dtype=np.float64)
    if np.any(d <= 0) or f0_ghz <= 0:
        raise ConfigurationError("distance and frequency must be positive")
    out = (32.45 + 20.0 * np.log10(f0_ghz) + 20.0 * np.log10(d * 1000.0)
           + shadow_db + extra_loss_db)
    return float(out) if np.isscalar(distance_km) else out


def rx_power(eirp_dbw: float, rx_gain_dbi: float, path_loss_db: float) -> float:
    """Received power (dBW): EIRP + G_R - PL."""
    for name, val in (("eirp", eirp_dbw), ("rx_gain", rx_gain_dbi), ("path_loss", path_loss_db)):
        if not math.isfinite(val):
            raise ConfigurationError(f"non-finite {name}: {val}")
    return eirp_dbw + rx_gain_dbi - path_loss_db


def noise_power(noise_temperature_k: float, bandwidth_mhz: float) -> float:
    """Thermal noise power (dBW) over the system bandwidth."""
    if noise_temperature_k <= 0 or bandwidth_mhz <= 0:
        raise ConfigurationError("temperature and bandwidth must be positive")
    return 10.0 * math.log10(BOLTZMANN_J_K * noise_temperature_k * bandwidth_mhz * 1e6)


def compute_sinr(ue_id: int, ue_point, ue_cell_id: int, slot: int,
                 illumination, ephemerides: dict, cells_by_id: dict,
                 array_configs: dict, params: LinkBudgetParams,
                 shadow_db: float = 0.0) -> SinrSample | None:
    """Reference per-UE SINR over an explicit illumination map.

    Enumerates every active beam: the serving beam of the UE's cell gives
    the signal; co-satellite beams on other cells form the intra-satellite
    interference; beams of every other satellite form the inter-satellite
    interference.  Returns None (no-service marker) when the UE's cell has
    no active serving beam this slot.
    """
    from .cells import geodetic_to_ecef, satellite_frame  # local import to avoid cycle

    serving = illumination.serving_beam(slot, ue_cell_id)
    if serving is None:
        return None
    serving_sat, _serving_beam = serving

    ue_ecef = geodetic_to_ecef(ue_point)
    n0_dbw = noise_power(params.noise_temperature_k, params.system_bandwidth_mhz)
    n0 = float(db_to_lin(n0_dbw))

    def beam_power_dbw(sat_id, cell_id):
        eph = ephemerides[sat_id]
        x, y, z = satellite_frame(eph.position_km, eph.velocity_km_s)
        tgt = cells_by_id[cell_id]
        tgt_ecef = geodetic_to_ecef(tgt.center)
        cfg = array_configs[tgt.tier]

        def uv_of(point_ecef):
            d = point_ecef - eph.position_km
            d = d / np.linalg.norm(d)
            return float(np.dot(d, x)), float(np.dot(d, y))

        steer_uv = uv_of(tgt_ecef)
        eval_uv = uv_of(ue_ecef)
        af = float(array_gain_uv(cfg, steer_uv, eval_uv))
        w0 = math.sqrt(max(0.0, 1.0 - steer_uv[0] ** 2 - steer_uv[1] ** 2))
        scan = float(element_gain_db(w0, cfg) - element_gain_db(1.0, cfg))
        eirp = (cfg.boresight_eirp_density_dbw_mhz
                + 10.0 * math.log10(params.system_bandwidth_mhz) + scan + af)
        d_km = float(np.linalg.norm(eph.position_km - ue_ecef))
        pl = path_loss(d_km, params.carrier_frequency_ghz, shadow_db, params.extra_loss_db)
        return rx_power(eirp, params.ue_rx_gain_dbi, pl)

    serving_dbw = None
    intra = 0.0
    inter = 0.0
    for sat_id, beam_idx, cell_id, _tier in illumination.active_beams(slot):
        p = float(db_to_lin(beam_power_dbw(sat_id, cell_id)))
        if sat_id == serving_sat and cell_id == ue_cell_id:
            serving_dbw = lin_to_db(p)
        elif sat_id == serving_sat:
            intra += p
        else:
            inter += p
    if serving_dbw is None:
        return None

    s_lin = float(db_to_lin(serving_dbw))
    sinr = lin_to_db(s_lin / (intra + inter + n0))
    return SinrSample(
        ue_id=ue_id, slot=slot, serving_dbw=float(serving_dbw),
        intra_interference_dbw=float(lin_to_db(intra)) if intra > 0 else None,
        inter_interference_dbw=float(lin_to_db(inter)) if inter > 0 else None,
        noise_dbw=n0_dbw, sinr_db=float(sinr))
