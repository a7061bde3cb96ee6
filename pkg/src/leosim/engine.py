"""Two-timescale simulation engine and run persistence.

Outer loop: snapshots, where geometry, visibility sets and associations
are frozen.  Inner loop: 1 ms slots, where beam hopping, PRACH occasions,
PF scheduling and delivery happen.  Per-slot work runs in numba kernels
that parallelize over cells with results independent of worker count.

The tessellation covers the target area plus a margin: margin cells hold
no UEs and produce no KPI samples, but they occupy their satellite's beam
cycle and (by default) radiate when illuminated, supplying the
surrounding-layer interference.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time as _time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import (EV_BUSY_END, EV_CONNECT, EV_DISCONNECT, EV_PACKET,
                       gather_interference, hop_joint, hop_single_sat,
                       traffic_kernel)
from .access import (OUTCOME_COLLISION, OUTCOME_NO_COVERAGE, OUTCOME_SUCCESS,
                     AccessAttempt, access_capacity, access_success_probability,
                     attempts_to_csv, capacity_cdf, run_rach_occasion)
from .cells import (adjacency_lists, cells_to_csv, classify_hotspots,
                    geodetic_to_ecef_arrays, select_interfering_satellites,
                    select_target_satellites, slant_range_km, tessellate)
from .config import SimConfig, parse_text, resolve, serialize
from .kpi import KpiInputs, n_asset_coverage, report_to_json, summarize
from .linkbudget import (array_factor_db, db_to_lin, element_gain_db,
                         noise_power, path_loss)
from .mobility import HoEvent, associate, ho_events_to_csv
from .orbits import ConfigurationError, generate_walker, propagate_batch
from .rng import keyed_randint, keyed_uniform, stream
from .traffic import deploy_ues, generate_sessions

PHASE_IDLE, PHASE_ACCESSING, PHASE_CONNECTED, PHASE_HANDING_OVER = 0, 1, 2, 3

RUN_MODE_FULL = "full"
RUN_MODE_COVERAGE = "coverage"


class RunError(RuntimeError):
    """Unrecoverable inconsistency during a run (exit code 3)."""


@dataclass
class RunManifest:
    mode: str
    seed: int
    config_text: str
    version: str
    workers: int
    started_at: str
    finished_at: str
    file_checksums: dict

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _sat_frames(pos: np.ndarray, vel: np.ndarray):
    """Antenna frames for many satellites: +z nadir, +x along-track."""
    z = -pos / np.linalg.norm(pos, axis=1, keepdims=True)
    v = vel - np.einsum("ns,ns->n", vel, z)[:, None] * z
    x = v / np.linalg.norm(v, axis=1, keepdims=True)
    y = np.cross(z, x)
    return x, y, z


def _uv_dist(sat_pos, frame_x, frame_y, points):
    """Direction cosines of ground points in a satellite frame + distances."""
    d = points - sat_pos[None, :]
    dist = np.linalg.norm(d, axis=1)
    dhat = d / dist[:, None]
    return dhat @ frame_x, dhat @ frame_y, dist


def _merge_busy_periods(sessions):
    """Merge one UE's sessions into maximal busy intervals."""
    if not sessions:
        return []
    spans = sorted((s.arrival_time_s, s.arrival_time_s + s.duration_s) for s in sessions)
    merged = [list(spans[0])]
    for a, b in spans[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return merged


class Simulation:
    """One full simulation run; build with a resolved config, call execute()."""

    def __init__(self, cfg: SimConfig, workers: int = 1):
        self.cfg = cfg
        self.workers = max(1, int(workers))
        self.seed = cfg["run.master_seed"]
        self.plan = cfg.plan
        self.params = cfg.link_params
        self.rach = cfg.rach
        self.policy = cfg.policy
        self.ssb_variant = self.policy.variant == "ssb_plan_nearest"
        self._setup_geometry()
        self._setup_population()
        self._setup_state()

    # ------------------------------------------------------------------ setup
    def _setup_geometry(self):
        cfg = self.cfg
        elements = generate_walker(cfg.walker)
        self.a_km = elements[0].semi_major_axis_km
        self.inc_rad = elements[0].inclination_rad
        self.raan = np.array([e.raan_rad for e in elements])
        self.anom = np.array([e.mean_anomaly_rad for e in elements])
        self.sat_ids = np.arange(len(elements))
        self.use_j2 = cfg["walker.propagator"] == "j2"

        self.area = cfg.area
        padded = cfg.padded_area
        svc = tessellate(padded, cfg["cells.service_circumradius_km"], "service")
        centers = np.array([[c.center.latitude_deg, c.center.longitude_deg] for c in svc])
        in_target = self.area.contains(centers[:, 0], centers[:, 1])
        eligible = [c.cell_id for c, t in zip(svc, in_target) if t]
        svc = classify_hotspots(svc, cfg["cells.hotspot_count"], self.seed,
                                eligible_ids=eligible)
        self.svc_cells = svc
        self.svc_in_target = np.asarray(in_target)
        self.svc_ecef = geodetic_to_ecef_arrays(centers[:, 0], centers[:, 1])
        self.n_svc = len(svc)
        self.target_idx = np.where(self.svc_in_target)[0]
        self.n_target = len(self.target_idx)
        if self.n_target == 0:
            raise RunError("no service cells inside the target area")
        self.col_of = np.full(self.n_svc, -1, dtype=np.int64)
        self.col_of[self.target_idx] = np.arange(self.n_target)
        self.hotspot_cols = np.array(
            [self.col_of[i] for i in self.target_idx
             if svc[i].traffic_class == "hotspot"], dtype=np.int64)

        bc = tessellate(padded, cfg["cells.broadcast_circumradius_km"], "broadcast")
        self.bc_cells = bc
        bc_centers = np.array([[c.center.latitude_deg, c.center.longitude_deg] for c in bc])
        self.bc_ecef = geodetic_to_ecef_arrays(bc_centers[:, 0], bc_centers[:, 1])
        self.n_bc = len(bc)
        # enclosing broadcast cell of every service cell (nearest center)
        d2 = ((self.svc_ecef[:, None, :] - self.bc_ecef[None, :, :]) ** 2).sum(axis=2)
        self.bc_of_svc = np.argmin(d2, axis=1).astype(np.int64)

        nbrs = adjacency_lists(svc)
        self.nbr_indptr = np.zeros(self.n_svc + 1, dtype=np.int64)
        self.nbr_indptr[1:] = np.cumsum([len(v) for v in nbrs])
        self.nbr_indices = (np.concatenate(nbrs) if self.n_svc else
                            np.zeros(0, dtype=np.int32)).astype(np.int64)

        self.svc_array = cfg.array_config("service")
        self.bc_array = cfg.array_config("broadcast")
        self.noise_dbw = noise_power(self.params.noise_temperature_k,
                                     self.params.system_bandwidth_mhz)
        self.noise_lin = float(db_to_lin(self.noise_dbw))
        self.bandwidth_hz = self.params.system_bandwidth_mhz * 1e6

    def _setup_population(self):
        cfg = self.cfg
        counts = {"hotspot": cfg["ue.per_hotspot_cell"],
                  "normal": cfg["ue.per_normal_cell"]}
        target_cells = [self.svc_cells[i] for i in self.target_idx]
        ues = deploy_ues(target_cells, counts, self.seed)
        self.n_ue = len(ues)
        self.ue_cell = np.array([u.home_cell_id for u in ues], dtype=np.int64)
        lat = np.array([u.position.latitude_deg for u in ues])
        lon = np.array([u.position.longitude_deg for u in ues])
        self.ue_ecef = geodetic_to_ecef_arrays(lat, lon) if self.n_ue else np.zeros((0, 3))

        # CSR: target cell column -> ue indices (ascending ue ids)
        cols = self.col_of[self.ue_cell] if self.n_ue else np.zeros(0, dtype=np.int64)
        order = np.argsort(cols, kind="stable")
        self.cell_ue_idx = order.astype(np.int64)
        self.cell_ue_ptr = np.zeros(self.n_target + 1, dtype=np.int64)
        np.add.at(self.cell_ue_ptr[1:], cols, 1)
        self.cell_ue_ptr = np.cumsum(self.cell_ue_ptr).astype(np.int64)

        horizon = self.plan.total_duration_s
        lam = cfg["traffic.session_rate_per_s"]
        mean_dur = cfg["traffic.mean_session_duration_s"]
        self.packet_bits = cfg["traffic.packet_bits"]
        interval = cfg["traffic.packet_interval_s"]
        pk_t, pk_u = [], []
        bp_s, bp_e, bp_u = [], [], []
        for u in range(self.n_ue):
            sessions = generate_sessions(u, horizon, lam, mean_dur, self.seed,
                                         packet_interval_s=interval,
                                         packet_bits=self.packet_bits)
            for s in sessions:
                end = min(s.arrival_time_s + s.duration_s, horizon)
                k = 0
                while True:
                    t = s.arrival_time_s + k * interval
                    if t >= end:
                        break
                    pk_t.append(t)
                    pk_u.append(u)
                    k += 1
            for a, b in _merge_busy_periods(sessions):
                bp_s.append(a)
                bp_e.append(min(b, horizon))
                bp_u.append(u)
        pk_order = np.lexsort((np.array(pk_u, dtype=np.int64),
                               np.array(pk_t))) if pk_t else np.zeros(0, dtype=np.int64)
        self.pk_time = np.array(pk_t)[pk_order] if pk_t else np.zeros(0)
        self.pk_ue = np.array(pk_u, dtype=np.int64)[pk_order] if pk_t else np.zeros(0, dtype=np.int64)
        bp_order = np.lexsort((np.array(bp_u, dtype=np.int64),
                               np.array(bp_s))) if bp_s else np.zeros(0, dtype=np.int64)
        self.bp_start = np.array(bp_s)[bp_order] if bp_s else np.zeros(0)
        self.bp_end = np.array(bp_e)[bp_order] if bp_s else np.zeros(0)
        self.bp_ue = np.array(bp_u, dtype=np.int64)[bp_order] if bp_s else np.zeros(0, dtype=np.int64)
        be_order = np.lexsort((self.bp_ue, self.bp_end)) if len(self.bp_end) else np.zeros(0, dtype=np.int64)
        self.be_time = self.bp_end[be_order]
        self.be_ue = self.bp_ue[be_order]

    def _setup_state(self):
        n = self.n_ue
        self.phase = np.zeros(n, dtype=np.int8)
        self.serving = np.full(n, -1, dtype=np.int64)
        self.busy_end_cur = np.zeros(n)
        self.backlog = np.zeros(n, dtype=np.int64)
        self.rbar = np.full(n, self.cfg["scheduler.pf_floor_bps"])
        self.connected = np.zeros(n, dtype=np.uint8)
        self.conn_start = np.zeros(n, dtype=np.int64)
        self.ue_delivered = np.zeros(n, dtype=np.int64)
        self.ue_served = np.zeros(n, dtype=np.int64)
        self.ue_conn_slots = np.zeros(n, dtype=np.int64)
        self.ue_generated = np.zeros(n, dtype=np.int64)
        self.ue_dropped = np.zeros(n, dtype=np.int64)

        k = self.plan.snapshot_count
        self.lit_count = np.zeros(self.n_target, dtype=np.int64)
        self.nasset = np.zeros((k, self.n_target), dtype=np.int64)
        self.gen_by_cell = np.zeros((k, self.n_target), dtype=np.int64)
        self.del_by_cell = np.zeros((k, self.n_target), dtype=np.int64)
        self.drop_by_cell = np.zeros((k, self.n_target), dtype=np.int64)
        self.wasted_by_cell = np.zeros(self.n_target, dtype=np.int64)

        self.attempts: list[AccessAttempt] = []
        self.ho_events: list[HoEvent] = []
        self._proc_counter = 0
        self._occ_queue: dict[int, list] = defaultdict(list)
        self._pending_proc: dict[int, dict] = {}
        self._bp_ptr = 0
        self._be_ptr = 0
        self._next_occ = 1
        self._carry_events: list[tuple] = []
        self._prev_primary = None
        self._illum_rows = [] if self.cfg["run.export_illumination"] else None

    # ------------------------------------------------------------- geometry
    def _positions(self, t: float):
        pos, vel = propagate_batch(self.a_km, self.inc_rad, self.raan, self.anom,
                                   t, j2=self.use_j2)
        return pos, vel

    def _associations(self, t: float):
        pos, vel = self._positions(t)
        min_el = self.cfg["cells.min_elevation_deg"]
        target_ecef = self.svc_ecef[self.target_idx]
        interferers = select_interfering_satellites(pos, self.sat_ids, target_ecef, min_el)
        if len(interferers) == 0:
            raise RunError(f"no satellite visible to the target area at t={t}")
        ip = pos[interferers]
        svc_primary, svc_secondary = associate(
            self.svc_ecef, ip, interferers, min_el, two_nearest=self.ssb_variant)
        bc_primary, bc_secondary = associate(
            self.bc_ecef, ip, interferers, min_el, two_nearest=self.ssb_variant)
        targets = select_target_satellites(pos, self.sat_ids, self.area)
        return {
            "t": t, "pos": pos, "vel": vel, "interferers": interferers,
            "targets": targets, "svc_primary": svc_primary,
            "svc_secondary": svc_secondary, "bc_primary": bc_primary,
            "bc_secondary": bc_secondary,
        }

    def _power_matrix(self, sat_pos, frame, steer_points, eval_points, array_cfg,
                      eval_dist=None):
        """Received power (linear W) at eval points from beams steered at
        steer points, one row per steered beam."""
        fx, fy, _ = frame
        u0, v0, _ = _uv_dist(sat_pos, fx, fy, steer_points)
        ue, ve, dist = _uv_dist(sat_pos, fx, fy, eval_points)
        du = ue[None, :] - u0[:, None]
        dv = ve[None, :] - v0[:, None]
        af = array_factor_db(du, dv, array_cfg)
        w_eval = np.sqrt(np.clip(1.0 - ue ** 2 - ve ** 2, 0.0, 1.0))
        w_steer = np.sqrt(np.clip(1.0 - u0 ** 2 - v0 ** 2, 0.0, 1.0))
        e_eval = element_gain_db(w_eval, array_cfg)
        e_steer = element_gain_db(w_steer, array_cfg)
        e_nadir = element_gain_db(1.0, array_cfg)
        rel = np.minimum(af + e_eval[None, :] - e_steer[:, None], 0.0)
        scan = e_steer - e_nadir
        eirp = (array_cfg.boresight_eirp_density_dbw_mhz
                + 10.0 * math.log10(self.params.system_bandwidth_mhz)
                + scan[:, None] + rel)
        pl = path_loss(dist, self.params.carrier_frequency_ghz,
                       0.0, self.params.extra_loss_db)
        return db_to_lin(eirp + self.params.ue_rx_gain_dbi - pl[None, :])

    # ------------------------------------------------------------- RACH
    def _new_procedure(self, ue, purpose, sat, cell_idx, start_time,
                       decision=None, reaccess=False):
        self._proc_counter += 1
        proc = {
            "ue": int(ue), "purpose": purpose, "sat": int(sat),
            "cell": int(cell_idx), "attempt": 1,
            "budget": self.rach.attempt_budget(purpose),
            "pid": self._proc_counter, "decision": decision,
            "reaccess": reaccess,
        }
        if sat < 0:
            self.attempts.append(AccessAttempt(
                ue_id=int(ue), procedure_id=proc["pid"], purpose=purpose,
                attempt_index=1, occasion_index=-1, chosen_preamble=-1,
                outcome=OUTCOME_NO_COVERAGE, cell_id=int(cell_idx), sat_id=-1,
                reaccess_after_ho_failure=reaccess))
            self.phase[ue] = PHASE_IDLE
            return
        occ = int(math.floor(start_time / self.rach.occasion_period_s)) + 1
        self._occ_queue[occ].append(proc)
        self._pending_proc[int(ue)] = proc

    def _apply_busy_ends(self, upto_time, conn_events):
        while self._be_ptr < len(self.be_time) and self.be_time[self._be_ptr] <= upto_time:
            t = self.be_time[self._be_ptr]
            ue = int(self.be_ue[self._be_ptr])
            self._be_ptr += 1
            if self.phase[ue] == PHASE_CONNECTED:
                self.phase[ue] = PHASE_IDLE
                self.serving[ue] = -1
                conn_events.append((t, EV_DISCONNECT, ue))
            elif self.phase[ue] == PHASE_ACCESSING:
                # session over before access completed: cancel the procedure
                proc = self._pending_proc.pop(ue, None)
                if proc is not None:
                    proc["cancelled"] = True
                self.phase[ue] = PHASE_IDLE

    def _resolve_occasions(self, t_end, assoc, conn_events):
        """Process every PRACH occasion strictly before t_end."""
        period = self.rach.occasion_period_s
        svc_primary = assoc["svc_primary"]
        while self._next_occ * period < t_end:
            o = self._next_occ
            t_occ = o * period
            self._apply_busy_ends(t_occ, conn_events)
            # newly started busy periods whose first occasion is o
            while (self._bp_ptr < len(self.bp_start)
                   and math.floor(self.bp_start[self._bp_ptr] / period) + 1 <= o):
                ue = int(self.bp_ue[self._bp_ptr])
                start = self.bp_start[self._bp_ptr]
                self.busy_end_cur[ue] = self.bp_end[self._bp_ptr]
                self._bp_ptr += 1
                if self.phase[ue] == PHASE_IDLE:
                    cell = int(self.ue_cell[ue])
                    self.phase[ue] = PHASE_ACCESSING
                    self._new_procedure(ue, "initial", int(svc_primary[cell]),
                                        cell, start)
            procs = self._occ_queue.pop(o, None)
            self._next_occ += 1
            if not procs:
                continue
            groups = defaultdict(list)
            for p in procs:
                if p.get("cancelled"):
                    continue
                groups[(p["sat"], p["cell"], p["purpose"])].append(p)
            for key in sorted(groups):
                sat, cell, purpose = key
                group = sorted(groups[key], key=lambda p: p["ue"])
                pool = self.rach.pool_size(purpose)
                rng = stream(self.seed, "rach", o, sat, cell,
                             0 if purpose == "initial" else 1)
                outcomes = run_rach_occasion([p["ue"] for p in group], pool, rng)
                for p in group:
                    preamble, outcome = outcomes[p["ue"]]
                    self.attempts.append(AccessAttempt(
                        ue_id=p["ue"], procedure_id=p["pid"], purpose=purpose,
                        attempt_index=p["attempt"], occasion_index=o,
                        chosen_preamble=preamble, outcome=outcome,
                        cell_id=cell, sat_id=sat,
                        reaccess_after_ho_failure=p["reaccess"]))
                    if outcome == OUTCOME_SUCCESS:
                        self._on_ra_success(p, t_occ, conn_events)
                    else:
                        self._on_ra_collision(p, o, t_occ, conn_events)

    def _on_ra_success(self, proc, t_occ, conn_events):
        ue = proc["ue"]
        completion = t_occ + self.rach.response_delay_s
        self._pending_proc.pop(ue, None)
        decision = proc["decision"]
        if decision is not None:
            self.ho_events.append(HoEvent(
                ue_id=ue, trigger=decision["trigger"], source_sat=decision["source"],
                target_sat=proc["sat"], cell_id=proc["cell"],
                start_time_s=decision["cease"], ra_start_time_s=decision["ra_start"],
                end_time_s=completion, outcome="success",
                interruption_s=completion - decision["cease"]))
        if self.busy_end_cur[ue] <= completion:
            self.phase[ue] = PHASE_IDLE
            self.serving[ue] = -1
            return
        self.phase[ue] = PHASE_CONNECTED
        self.serving[ue] = proc["sat"]
        conn_events.append((completion, EV_CONNECT, ue))

    def _on_ra_collision(self, proc, o, t_occ, conn_events):
        ue = proc["ue"]
        if proc["attempt"] >= proc["budget"]:
            self._pending_proc.pop(ue, None)
            decision = proc["decision"]
            self.phase[ue] = PHASE_IDLE
            self.serving[ue] = -1
            if decision is not None:
                self.ho_events.append(HoEvent(
                    ue_id=ue, trigger=decision["trigger"], source_sat=decision["source"],
                    target_sat=proc["sat"], cell_id=proc["cell"],
                    start_time_s=decision["cease"], ra_start_time_s=decision["ra_start"],
                    end_time_s=None, outcome="failure", interruption_s=None))
                # re-attach through initial access while the session lasts
                if self.busy_end_cur[ue] > t_occ:
                    self.phase[ue] = PHASE_ACCESSING
                    self._new_procedure(ue, "initial", decision["current_primary"],
                                        proc["cell"], t_occ, reaccess=True)
            return
        proc["attempt"] += 1
        backoff = int(keyed_randint(self.seed, "backoff",
                                    self.rach.backoff_max_occasions + 1, ue, o))
        self._occ_queue[o + 1 + backoff].append(proc)

    # ------------------------------------------------------------- snapshots
    def _process_boundary(self, k, assoc, prev_primary, conn_events):
        """Handle serving-satellite changes at the boundary entering snapshot k."""
        t0 = self.plan.snapshot_start(k)
        svc_primary = assoc["svc_primary"]
        changed = np.where((prev_primary != svc_primary))[0]
        for cell_idx in changed:
            col = self.col_of[cell_idx]
            if col < 0:
                continue
            new_sat = int(svc_primary[cell_idx])
            for j in range(self.cell_ue_ptr[col], self.cell_ue_ptr[col + 1]):
                ue = int(self.cell_ue_idx[j])
                ph = self.phase[ue]
                if ph == PHASE_ACCESSING:
                    proc = self._pending_proc.get(ue)
                    if proc is not None and proc["purpose"] == "initial":
                        proc["sat"] = new_sat
                    continue
                if ph != PHASE_CONNECTED or self.serving[ue] == new_sat:
                    continue
                if new_sat < 0:
                    self.phase[ue] = PHASE_IDLE
                    self.serving[ue] = -1
                    conn_events.append((t0, EV_DISCONNECT, ue))
                    continue
                offset = float(keyed_uniform(self.seed, "ho_start", ue, k))
                ra_start = t0 + offset * self.policy.ho_window_s
                decision = {"trigger": "t1", "source": int(self.serving[ue]),
                            "cease": t0, "ra_start": ra_start,
                            "current_primary": new_sat}
                self.phase[ue] = PHASE_HANDING_OVER
                conn_events.append((t0, EV_DISCONNECT, ue))
                self._new_procedure(ue, "handover", new_sat, int(cell_idx),
                                    ra_start, decision=decision)

    def _arm_conditional_ho(self, k, assoc, assoc_next, layers, conn_events):
        """ssb_plan_nearest: execute conditional HOs early when A4 allows."""
        t0 = self.plan.snapshot_start(k)
        svc_primary = assoc["svc_primary"]
        next_primary = assoc_next["svc_primary"]
        changed = np.where(svc_primary != next_primary)[0]
        for cell_idx in changed:
            col = self.col_of[cell_idx]
            if col < 0:
                continue
            candidate = int(next_primary[cell_idx])
            if candidate < 0:
                continue
            a4 = self._a4_measurement(int(cell_idx), candidate, layers)
            if a4 is None:
                continue
            sinr_db, t_meas = a4
            if sinr_db < self.policy.a4_threshold_db:
                continue
            source = int(svc_primary[cell_idx])
            for j in range(self.cell_ue_ptr[col], self.cell_ue_ptr[col + 1]):
                ue = int(self.cell_ue_idx[j])
                if self.phase[ue] != PHASE_CONNECTED or self.serving[ue] != source:
                    continue
                offset = float(keyed_uniform(self.seed, "ho_start", ue, k))
                ra_start = t_meas + offset * self.policy.ho_window_s
                decision = {"trigger": "a4", "source": source,
                            "cease": ra_start, "ra_start": ra_start,
                            "current_primary": source}
                self.phase[ue] = PHASE_HANDING_OVER
                conn_events.append((ra_start, EV_DISCONNECT, ue))
                self._new_procedure(ue, "handover", candidate, int(cell_idx),
                                    ra_start, decision=decision)

    def _a4_measurement(self, cell_idx, candidate_sat, layers):
        """Candidate's SSB-SINR at the cell center at its first SSB slot."""
        bcell = int(self.bc_of_svc[cell_idx])
        col = self.col_of[cell_idx]
        layer = layers["bc_by_sat"].get(candidate_sat)
        if layer is None:
            return None
        commits, ptr = layer["commits"], layer["ptr"]
        hits = np.where(commits == bcell)[0]
        if len(hits) == 0:
            return None
        slot = int(np.searchsorted(ptr, hits[0], side="right") - 1)
        serving_lin = layer["power"][layer["row_of"][bcell], col]
        total = 0.0
        lp = layers["layer_pattern"]
        for l in range(lp.shape[0]):
            total += layers["pattern_power"][lp[l, slot], col]
        interference = max(total - serving_lin, 0.0)
        sinr_db = 10.0 * math.log10(serving_lin / (interference + self.noise_lin))
        t_meas = self.plan.snapshot_start(layers["snapshot"]) + slot * self.plan.slot_duration_s
        return sinr_db, t_meas

    def _build_layers(self, k, assoc):
        """Hop all beams for snapshot k and precompute interference tables."""
        n_slots = self.plan.slots_per_snapshot
        pos, vel = assoc["pos"], assoc["vel"]
        frames = _sat_frames(pos, vel)
        target_ecef = self.svc_ecef[self.target_idx]
        margin_silent = self.cfg["run.margin_traffic"] == "none"

        pattern_rows = []          # list of (n_target,) power rows
        layer_patterns = []        # per layer: (n_slots,) global row index
        svc_layers = {}
        bc_by_sat = {}
        lit_by_col = [None] * self.n_target
        serving_cc = np.zeros(self.n_target)

        # --- service beams: per-satellite independent sweeps
        svc_primary = assoc["svc_primary"]
        owners = np.unique(svc_primary[svc_primary >= 0])
        stamp = np.zeros(self.n_svc, dtype=np.int64)
        beams = self.cfg["beams.service"]
        for sat in owners.tolist():
            eligible = np.where(svc_primary == sat)[0].astype(np.int64)
            order = eligible.copy()
            commit_cells = np.zeros(min(beams, len(eligible)) * n_slots, dtype=np.int64)
            commit_ptr = np.zeros(n_slots + 1, dtype=np.int64)
            slot_hash = np.zeros(n_slots, dtype=np.uint64)
            stamp[:] = 0
            hop_single_sat(order, beams, self.nbr_indptr, self.nbr_indices,
                           n_slots, stamp, commit_cells, commit_ptr, slot_hash)
            frame = (frames[0][sat], frames[1][sat], frames[2][sat])
            power = self._power_matrix(pos[sat], frame, self.svc_ecef[eligible],
                                       target_ecef, self.svc_array)
            if margin_silent:
                power[~self.svc_in_target[eligible], :] = 0.0
            row_of = np.full(self.n_svc, -1, dtype=np.int64)
            row_of[eligible] = np.arange(len(eligible))
            # serving power at own target cells' centers
            own_targets = eligible[self.svc_in_target[eligible]]
            for c in own_targets:
                serving_cc[self.col_of[c]] = power[row_of[c], self.col_of[c]]
            lp = self._patterns_for_layer(commit_cells, commit_ptr, slot_hash,
                                          row_of, power, pattern_rows, n_slots)
            layer_patterns.append(lp)
            svc_layers[sat] = {"commits": commit_cells[:commit_ptr[n_slots]],
                               "ptr": commit_ptr, "power": power, "row_of": row_of,
                               "eligible": eligible}
            # lit slots for its in-target cells
            commits = commit_cells[:commit_ptr[n_slots]]
            slots = np.repeat(np.arange(n_slots, dtype=np.int64),
                              np.diff(commit_ptr))
            sel = self.svc_in_target[commits]
            cc, ss = commits[sel], slots[sel]
            grp = np.argsort(cc, kind="stable")
            cc_s, ss_s = cc[grp], ss[grp]
            bounds = np.searchsorted(cc_s, np.unique(cc_s))
            uniq = np.unique(cc_s)
            for i, c in enumerate(uniq.tolist()):
                lo = bounds[i]
                hi = bounds[i + 1] if i + 1 < len(bounds) else len(cc_s)
                lit_by_col[self.col_of[c]] = ss_s[lo:hi]

        # --- broadcast beams: jointly coordinated sweep
        bc_primary, bc_secondary = assoc["bc_primary"], assoc["bc_secondary"]
        bc_owner_sets = defaultdict(list)
        for b in range(self.n_bc):
            if bc_primary[b] >= 0:
                bc_owner_sets[int(bc_primary[b])].append(b)
            if self.ssb_variant and bc_secondary[b] >= 0 and bc_secondary[b] != bc_primary[b]:
                bc_owner_sets[int(bc_secondary[b])].append(b)
        bc_sats = sorted(bc_owner_sets)
        if bc_sats:
            orders = np.concatenate([np.array(sorted(bc_owner_sets[s]), dtype=np.int64)
                                     for s in bc_sats])
            order_ptr = np.zeros(len(bc_sats) + 1, dtype=np.int64)
            order_ptr[1:] = np.cumsum([len(bc_owner_sets[s]) for s in bc_sats])
            bc_beams = self.cfg["beams.broadcast"]
            max_commits = bc_beams * n_slots
            commit_cells = np.zeros((len(bc_sats), max_commits), dtype=np.int64)
            commit_ptr = np.zeros((len(bc_sats), n_slots + 1), dtype=np.int64)
            slot_hash = np.zeros((len(bc_sats), n_slots), dtype=np.uint64)
            hop_joint(orders, order_ptr, bc_beams, n_slots, self.n_bc,
                      commit_cells, commit_ptr, slot_hash)
            for si, sat in enumerate(bc_sats):
                own = np.array(sorted(bc_owner_sets[sat]), dtype=np.int64)
                frame = (frames[0][sat], frames[1][sat], frames[2][sat])
                power = self._power_matrix(pos[sat], frame, self.bc_ecef[own],
                                           target_ecef, self.bc_array)
                row_of = np.full(self.n_bc, -1, dtype=np.int64)
                row_of[own] = np.arange(len(own))
                total = commit_ptr[si, n_slots]
                lp = self._patterns_for_layer(commit_cells[si, :total],
                                              commit_ptr[si], slot_hash[si],
                                              row_of, power, pattern_rows, n_slots)
                layer_patterns.append(lp)
                bc_by_sat[sat] = {"commits": commit_cells[si, :total],
                                  "ptr": commit_ptr[si], "power": power,
                                  "row_of": row_of}

        pattern_power = (np.stack(pattern_rows) if pattern_rows
                         else np.zeros((1, self.n_target)))
        layer_pattern = (np.stack(layer_patterns).astype(np.int64) if layer_patterns
                         else np.zeros((0, n_slots), dtype=np.int64))
        return {
            "snapshot": k, "svc_layers": svc_layers, "bc_by_sat": bc_by_sat,
            "pattern_power": pattern_power, "layer_pattern": layer_pattern,
            "lit_by_col": lit_by_col, "serving_cc": serving_cc,
        }

    def _patterns_for_layer(self, commits, commit_ptr, slot_hash, row_of,
                            power, pattern_rows, n_slots):
        """Map per-slot commit sets to global pattern-power rows."""
        uniq, first_idx, inverse = np.unique(slot_hash, return_index=True,
                                             return_inverse=True)
        base = len(pattern_rows)
        for i, slot in enumerate(first_idx.tolist()):
            members = commits[commit_ptr[slot]:commit_ptr[slot + 1]]
            if len(members):
                row = power[row_of[members], :].sum(axis=0)
            else:
                row = np.zeros(self.n_target)
            pattern_rows.append(row)
        return base + inverse.astype(np.int64)

    def _serving_power(self, assoc, snapshot_index: int):
        """Per-UE serving power (linear W) from its cell's owning beam."""
        out = np.zeros(self.n_ue)
        if self.n_ue == 0:
            return out
        pos, vel = assoc["pos"], assoc["vel"]
        frames = _sat_frames(pos, vel)
        svc_primary = assoc["svc_primary"]
        ue_sat = svc_primary[self.ue_cell]
        for sat in np.unique(ue_sat[ue_sat >= 0]).tolist():
            mask = ue_sat == sat
            idx = np.where(mask)[0]
            fx, fy = frames[0][sat], frames[1][sat]
            u0, v0, _ = _uv_dist(pos[sat], fx, fy, self.svc_ecef[self.ue_cell[idx]])
            ue_u, ue_v, dist = _uv_dist(pos[sat], fx, fy, self.ue_ecef[idx])
            af = array_factor_db(ue_u - u0, ue_v - v0, self.svc_array)
            w_eval = np.sqrt(np.clip(1.0 - ue_u ** 2 - ue_v ** 2, 0.0, 1.0))
            w_steer = np.sqrt(np.clip(1.0 - u0 ** 2 - v0 ** 2, 0.0, 1.0))
            e_eval = element_gain_db(w_eval, self.svc_array)
            e_steer = element_gain_db(w_steer, self.svc_array)
            e_nadir = element_gain_db(1.0, self.svc_array)
            rel = np.minimum(af + e_eval - e_steer, 0.0)
            eirp = (self.svc_array.boresight_eirp_density_dbw_mhz
                    + 10.0 * math.log10(self.params.system_bandwidth_mhz)
                    + (e_steer - e_nadir) + rel)
            shadow = 0.0
            if self.params.shadow_sigma_db > 0.0:
                draws = keyed_uniform(self.seed, "shadow", idx, snapshot_index)
                # Box-Muller on keyed uniforms keeps draws order-independent
                pair = keyed_uniform(self.seed, "shadow", idx + self.n_ue, snapshot_index)
                normal = np.sqrt(-2.0 * np.log(np.clip(draws, 1e-12, 1.0))) \
                    * np.cos(2 * np.pi * pair)
                shadow = self.params.shadow_sigma_db * normal
            pl = path_loss(dist, self.params.carrier_frequency_ghz, shadow,
                           self.params.extra_loss_db)
            out[idx] = db_to_lin(eirp + self.params.ue_rx_gain_dbi - pl)
        return out

    # ------------------------------------------------------------- main loop
    def execute(self):
        import numba
        numba.set_num_threads(self.workers)
        plan = self.plan
        n_slots = plan.slots_per_snapshot
        slot_s = plan.slot_duration_s
        rate_min_lin = float(db_to_lin(self.cfg["scheduler.rate_min_sinr_db"]))
        assoc = self._associations(0.0)
        self.sat_set_log = []

        for k in range(plan.snapshot_count):
            t0 = plan.snapshot_start(k)
            t1 = t0 + plan.snapshot_duration_s
            conn_events: list[tuple] = []

            if k > 0:
                self._process_boundary(k, assoc, self._prev_primary, conn_events)
            layers = self._build_layers(k, assoc)
            if self._illum_rows is not None:
                self._collect_illumination(k, layers, n_slots)

            assoc_next = None
            if k + 1 < plan.snapshot_count:
                assoc_next = self._associations(plan.snapshot_start(k + 1))
                if self.ssb_variant:
                    self._arm_conditional_ho(k, assoc, assoc_next, layers, conn_events)

            self._resolve_occasions(t1, assoc, conn_events)
            self._apply_busy_ends(t1 - 1e-12, conn_events)

            self._run_slots(k, assoc, layers, conn_events, n_slots, slot_s,
                            rate_min_lin)

            self.nasset[k, :] = n_asset_coverage(
                self.svc_ecef[self.target_idx], assoc["pos"], self.svc_array,
                self.params, self.cfg["cells.min_elevation_deg"],
                self.cfg["kpi.n_asset_threshold_db"])
            self.sat_set_log.append((k, len(assoc["targets"]), len(assoc["interferers"])))

            self._prev_primary = assoc["svc_primary"]
            assoc = assoc_next if assoc_next is not None else assoc
        return self._results()

    def _run_slots(self, k, assoc, layers, conn_events, n_slots, slot_s,
                   rate_min_lin):
        plan = self.plan
        t0 = plan.snapshot_start(k)
        t1 = t0 + plan.snapshot_duration_s

        # lit slots CSR + interference
        lit_ptr = np.zeros(self.n_target + 1, dtype=np.int64)
        for col in range(self.n_target):
            lit = layers["lit_by_col"][col]
            lit_ptr[col + 1] = lit_ptr[col] + (0 if lit is None else len(lit))
        lit_slots = np.zeros(lit_ptr[-1], dtype=np.int64)
        for col in range(self.n_target):
            lit = layers["lit_by_col"][col]
            if lit is not None:
                lit_slots[lit_ptr[col]:lit_ptr[col + 1]] = lit
        lit_interference = np.zeros(len(lit_slots))
        if len(lit_slots) and layers["layer_pattern"].shape[0]:
            gather_interference(lit_ptr, lit_slots, layers["layer_pattern"],
                                layers["pattern_power"], layers["serving_cc"],
                                lit_interference)
        self.lit_count += np.diff(lit_ptr)

        # events: packets, busy ends, connection changes
        lo = np.searchsorted(self.pk_time, t0, side="left")
        hi = np.searchsorted(self.pk_time, t1, side="left")
        pk_t, pk_u = self.pk_time[lo:hi], self.pk_ue[lo:hi]
        lo = np.searchsorted(self.be_time, t0, side="left")
        hi = np.searchsorted(self.be_time, t1, side="left")
        be_t, be_u = self.be_time[lo:hi], self.be_ue[lo:hi]
        conn_now = []
        for t, kind, ue in self._carry_events + conn_events:
            if t >= t1:
                conn_now.append(None)
            else:
                conn_now.append((t, kind, ue))
        self._carry_events = [e for e, keep in
                              zip(self._carry_events + conn_events, conn_now)
                              if keep is None]
        conn_now = [e for e in conn_now if e is not None]

        ev_time = np.concatenate([
            pk_t, be_t, np.array([e[0] for e in conn_now], dtype=np.float64)])
        ev_kind = np.concatenate([
            np.full(len(pk_t), EV_PACKET, dtype=np.int64),
            np.full(len(be_t), EV_BUSY_END, dtype=np.int64),
            np.array([e[1] for e in conn_now], dtype=np.int64)])
        ev_ue = np.concatenate([
            pk_u.astype(np.int64), be_u.astype(np.int64),
            np.array([e[2] for e in conn_now], dtype=np.int64)])
        ev_val = np.concatenate([
            np.full(len(pk_t), self.packet_bits, dtype=np.int64),
            np.zeros(len(be_t) + len(conn_now), dtype=np.int64)])
        ev_slot = np.clip(((ev_time - t0) / self.plan.slot_duration_s).astype(np.int64),
                          0, n_slots - 1)
        ev_slot = np.where(ev_kind == EV_CONNECT,
                           np.minimum(ev_slot + 1, n_slots - 1), ev_slot)
        ev_cell = self.col_of[self.ue_cell[ev_ue]] if len(ev_ue) else ev_ue
        order = np.lexsort((ev_ue, ev_kind, ev_slot, ev_cell))
        ev_slot, ev_kind, ev_ue, ev_val, ev_cell = (
            a[order] for a in (ev_slot, ev_kind, ev_ue, ev_val, ev_cell))
        ev_ptr = np.zeros(self.n_target + 1, dtype=np.int64)
        np.add.at(ev_ptr[1:], ev_cell, 1)
        ev_ptr = np.cumsum(ev_ptr).astype(np.int64)

        serving_lin = self._serving_power(assoc, k)
        cell_generated = np.zeros(self.n_target, dtype=np.int64)
        cell_delivered = np.zeros(self.n_target, dtype=np.int64)
        cell_dropped = np.zeros(self.n_target, dtype=np.int64)
        cell_wasted = np.zeros(self.n_target, dtype=np.int64)
        traffic_kernel(self.cell_ue_ptr, self.cell_ue_idx,
                       lit_ptr, lit_slots, lit_interference,
                       ev_ptr, ev_slot, ev_kind, ev_ue, ev_val,
                       serving_lin, self.backlog, self.rbar, self.connected,
                       self.conn_start,
                       self.noise_lin, self.plan.slot_duration_s, self.bandwidth_hz,
                       float(self.cfg["scheduler.pf_window_slots"]),
                       self.cfg["scheduler.pf_floor_bps"],
                       self.cfg["scheduler.rate_attenuation"],
                       self.cfg["scheduler.rate_cap_bps_hz"], rate_min_lin,
                       n_slots,
                       self.ue_delivered, self.ue_served, self.ue_conn_slots,
                       self.ue_generated, self.ue_dropped,
                       cell_generated, cell_delivered, cell_dropped, cell_wasted)
        self.gen_by_cell[k] = cell_generated
        self.del_by_cell[k] = cell_delivered
        self.drop_by_cell[k] = cell_dropped
        self.wasted_by_cell += cell_wasted

    def _collect_illumination(self, k, layers, n_slots):
        for sat in sorted(layers["svc_layers"]):
            layer = layers["svc_layers"][sat]
            ptr, commits = layer["ptr"], layer["commits"]
            for t in range(n_slots):
                for b in range(ptr[t], ptr[t + 1]):
                    self._illum_rows.append(
                        (k, t, sat, b - ptr[t], int(commits[b]), "service"))
        for sat in sorted(layers["bc_by_sat"]):
            layer = layers["bc_by_sat"][sat]
            ptr, commits = layer["ptr"], layer["commits"]
            for t in range(n_slots):
                for b in range(ptr[t], ptr[t + 1]):
                    self._illum_rows.append(
                        (k, t, sat, b - ptr[t], int(commits[b]), "broadcast"))

    def _results(self):
        return {
            "lit_count": self.lit_count,
            "total_slots": self.plan.snapshot_count * self.plan.slots_per_snapshot,
            "nasset": self.nasset,
            "gen_by_cell": self.gen_by_cell,
            "del_by_cell": self.del_by_cell,
            "attempts": self.attempts,
            "ho_events": self.ho_events,
            "ue": {
                "delivered": self.ue_delivered, "served": self.ue_served,
                "connected_slots": self.ue_conn_slots,
                "generated": self.ue_generated, "dropped": self.ue_dropped,
                "backlog": self.backlog, "cell": self.ue_cell,
            },
            "sat_set_log": self.sat_set_log,
        }


# ---------------------------------------------------------------- run output

def _write_run_files(sim: Simulation, results: dict, out: Path):
    cfg = sim.cfg
    plan = sim.plan
    cells_to_csv(sim.svc_cells + sim.bc_cells, out / "cells.csv",
                 in_target=np.concatenate([
                     sim.svc_in_target,
                     sim.area.contains(
                         np.array([c.center.latitude_deg for c in sim.bc_cells]),
                         np.array([c.center.longitude_deg for c in sim.bc_cells]))]))

    with open(out / "availability.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_id", "lit_slots", "total_slots"])
        for col, idx in enumerate(sim.target_idx.tolist()):
            w.writerow([sim.svc_cells[idx].cell_id,
                        int(results["lit_count"][col]), results["total_slots"]])

    with open(out / "nasset.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snapshot", "cell_id", "count"])
        for k in range(plan.snapshot_count):
            for col, idx in enumerate(sim.target_idx.tolist()):
                w.writerow([k, sim.svc_cells[idx].cell_id,
                            int(results["nasset"][k, col])])

    with open(out / "traffic_by_cell.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snapshot", "cell_id", "generated_bits", "delivered_bits"])
        for k in range(plan.snapshot_count):
            for col, idx in enumerate(sim.target_idx.tolist()):
                w.writerow([k, sim.svc_cells[idx].cell_id,
                            int(results["gen_by_cell"][k, col]),
                            int(results["del_by_cell"][k, col])])

    ue = results["ue"]
    with open(out / "per_ue_throughput.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue_id", "cell_id", "delivered_bits", "generated_bits",
                    "dropped_bits", "residual_bits", "connected_slots",
                    "served_slots"])
        for u in range(sim.n_ue):
            w.writerow([u, int(ue["cell"][u]), int(ue["delivered"][u]),
                        int(ue["generated"][u]), int(ue["dropped"][u]),
                        int(ue["backlog"][u]), int(ue["connected_slots"][u]),
                        int(ue["served"][u])])

    attempts_to_csv(results["attempts"], out / "access_log.csv")
    ho_events_to_csv(results["ho_events"], out / "ho_events.csv")

    if sim._illum_rows is not None:
        with open(out / "illumination.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["snapshot", "slot", "sat_id", "beam", "cell_id", "tier"])
            w.writerows(sim._illum_rows)


def _load_attempts(path: Path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(AccessAttempt(
                ue_id=int(row["ue_id"]), procedure_id=int(row["procedure_id"]),
                purpose=row["purpose"], attempt_index=int(row["attempt_index"]),
                occasion_index=int(row["occasion_index"]),
                chosen_preamble=int(row["chosen_preamble"]), outcome=row["outcome"],
                cell_id=int(row["cell_id"]), sat_id=int(row["sat_id"]),
                reaccess_after_ho_failure=bool(int(row["reaccess_after_ho_failure"]))))
    return out


def _load_ho_events(path: Path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            success = row["outcome"] == "success"
            out.append(HoEvent(
                ue_id=int(row["ue_id"]), trigger=row["trigger"],
                source_sat=int(row["source_sat"]), target_sat=int(row["target_sat"]),
                cell_id=int(row["cell_id"]), start_time_s=float(row["start_time_s"]),
                ra_start_time_s=float(row["ra_start_time_s"]),
                end_time_s=float(row["end_time_s"]) if success else None,
                outcome=row["outcome"],
                interruption_s=float(row["interruption_s"]) if success else None))
    return out


def regenerate_report(run_dir) -> str:
    """Rebuild kpi_report.json (and KPI CSV tables) from persisted logs."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    cfg = resolve(parse_text(manifest["config_text"]))
    plan = cfg.plan
    area = cfg.area

    nasset_rows = []
    with open(run_dir / "nasset.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            nasset_rows.append(int(row["count"]))
    nasset = np.array(nasset_rows, dtype=np.int64)

    if manifest["mode"] == RUN_MODE_COVERAGE:
        from .kpi import percentile_summary
        report = {"mode": RUN_MODE_COVERAGE,
                  "constellation": {"n_asset_coverage": percentile_summary(nasset)}}
        text = report_to_json(report)
        (run_dir / "kpi_report.json").write_text(text)
        _write_kpi_tables(run_dir, report, None, None, None)
        return text

    avail_rows = []
    target_cell_ids = []
    with open(run_dir / "availability.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            target_cell_ids.append(int(row["cell_id"]))
            avail_rows.append(int(row["lit_slots"]) / int(row["total_slots"]))
    availability = np.array(avail_rows)

    gen_by_snapshot = defaultdict(int)
    cell_gen = defaultdict(int)
    cell_del = defaultdict(int)
    del_by_snapshot = defaultdict(int)
    with open(run_dir / "traffic_by_cell.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["snapshot"])
            g, d = int(row["generated_bits"]), int(row["delivered_bits"])
            gen_by_snapshot[k] += g
            del_by_snapshot[k] += d
            cell_gen[int(row["cell_id"])] += g
            cell_del[int(row["cell_id"])] += d
    duration = plan.total_duration_s
    snap_dur = plan.snapshot_duration_s
    cap_per_snap = np.array([del_by_snapshot.get(k, 0) / (area.area_km2 * snap_dur)
                             for k in range(plan.snapshot_count)])
    total_delivered = int(sum(del_by_snapshot.values()))
    required = np.array([cell_gen.get(c, 0) / duration for c in target_cell_ids])
    offered = np.array([cell_del.get(c, 0) / duration for c in target_cell_ids])

    per_ue_rate = []
    slot_s = plan.slot_duration_s
    with open(run_dir / "per_ue_throughput.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            slots = int(row["connected_slots"])
            if slots > 0:
                per_ue_rate.append(int(row["delivered_bits"]) / (slots * slot_s))
    per_ue_rate = np.array(per_ue_rate)

    attempts = _load_attempts(run_dir / "access_log.csv")
    events = _load_ho_events(run_dir / "ho_events.csv")

    hotspot_ids = []
    with open(run_dir / "cells.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["tier"] == "service" and row["traffic_class"] == "hotspot":
                hotspot_ids.append(int(row["cell_id"]))

    from .mobility import interruption_and_failure_stats
    ho_stats = interruption_and_failure_stats(events)
    acc_global = access_success_probability(attempts)
    acc_cells = access_success_probability(attempts, per_cell=True)
    acc_capacity = access_capacity(attempts, snap_dur, cfg.rach.occasion_period_s)

    inputs = KpiInputs(
        n_asset_samples=nasset,
        availability_fraction=availability,
        capacity_per_snapshot_bps_km2=cap_per_snap,
        total_delivered_bits=total_delivered,
        area_km2=area.area_km2,
        duration_s=duration,
        per_ue_rate_bps=per_ue_rate,
        required_bps_per_cell=required,
        offered_bps_per_cell=offered,
        hotspot_cell_ids=hotspot_ids,
        cell_ids=target_cell_ids,
        access_success_global=acc_global,
        access_success_per_cell=acc_cells,
        access_capacity_per_cell=acc_capacity,
        interruption_s=ho_stats["interruption_sorted_s"],
        ho_failure_per_cell=ho_stats["per_cell_failure_rate"],
        ho_failure_global=ho_stats["global_failure_rate"],
        ho_total_events=ho_stats["total_events"],
        bandwidth_hz=cfg["link.system_bandwidth_mhz"] * 1e6,
        rate_cap_bps_hz=cfg["scheduler.rate_cap_bps_hz"],
        nadir_distance_km=cfg["walker.altitude_km"],
        edge_distance_km=slant_range_km(cfg["walker.altitude_km"],
                                        cfg["cells.min_elevation_deg"]),
        processing_ms=cfg["kpi.processing_delay_ms"],
    )
    report = summarize(inputs)
    report["mode"] = RUN_MODE_FULL
    text = report_to_json(report)
    (run_dir / "kpi_report.json").write_text(text)
    _write_kpi_tables(run_dir, report, ho_stats, acc_capacity, inputs)
    return text


def _write_kpi_tables(run_dir: Path, report: dict, ho_stats, acc_capacity, inputs):
    with open(run_dir / "kpi_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kpi", "p5", "p50", "p95", "n"])

        def emit(name, d):
            if isinstance(d, dict) and "p5" in d:
                w.writerow([name, d.get("p5"), d.get("p50"), d.get("p95"), d.get("n")])
        for section in ("constellation", "rit"):
            for name, d in report.get(section, {}).items():
                emit(f"{section}.{name}", d)
    if ho_stats is None:
        return
    with open(run_dir / "interruption_cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interruption_s", "cdf"])
        arr = ho_stats["interruption_sorted_s"]
        cdf = ho_stats["interruption_cdf"]
        for i in range(len(arr)):
            w.writerow([repr(float(arr[i])), repr(float(cdf[i]))])
    with open(run_dir / "ho_failure_by_cell.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_id", "failure_rate"])
        for c, rate in sorted(ho_stats["per_cell_failure_rate"].items()):
            w.writerow([c, "" if rate is None else repr(float(rate))])
    with open(run_dir / "access_capacity_cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["connected_ues", "cdf"])
        vals, cdf = capacity_cdf(acc_capacity)
        for i in range(len(vals)):
            w.writerow([repr(float(vals[i])), repr(float(cdf[i]))])


def _finalize_manifest(out: Path, mode: str, cfg: SimConfig, workers: int,
                       started: str) -> RunManifest:
    finished = _time.strftime("%Y-%m-%dT%H:%M:%SZ", _time.gmtime())
    checksums = {p.name: _sha256(p) for p in sorted(out.iterdir())
                 if p.is_file() and p.name != "manifest.json"}
    manifest = RunManifest(mode=mode, seed=cfg["run.master_seed"],
                           config_text=serialize(cfg), version=__version__,
                           workers=workers, started_at=started,
                           finished_at=finished, file_checksums=checksums)
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def _manifest_stub(out: Path, mode: str, cfg: SimConfig, workers: int) -> str:
    """Write a pre-run manifest so report generation can read the config."""
    started = _time.strftime("%Y-%m-%dT%H:%M:%SZ", _time.gmtime())
    stub = RunManifest(mode=mode, seed=cfg["run.master_seed"],
                       config_text=serialize(cfg), version=__version__,
                       workers=workers, started_at=started, finished_at="",
                       file_checksums={})
    (out / "manifest.json").write_text(stub.to_json())
    return started


def run(cfg: SimConfig, out_dir, workers: int = 1) -> RunManifest:
    """Full simulation: execute, persist logs, build the KPI report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _manifest_stub(out, RUN_MODE_FULL, cfg, workers)
    sim = Simulation(cfg, workers=workers)
    results = sim.execute()
    _write_run_files(sim, results, out)
    regenerate_report(out)
    return _finalize_manifest(out, RUN_MODE_FULL, cfg, workers, started)


def coverage_run(cfg: SimConfig, out_dir, workers: int = 1) -> RunManifest:
    """Geometry-only N-asset coverage evaluation (no traffic, no slots)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _manifest_stub(out, RUN_MODE_COVERAGE, cfg, workers)

    area = cfg.area
    svc = tessellate(area, cfg["cells.service_circumradius_km"], "service")
    centers = np.array([[c.center.latitude_deg, c.center.longitude_deg] for c in svc])
    in_target = area.contains(centers[:, 0], centers[:, 1])
    svc_ecef = geodetic_to_ecef_arrays(centers[:, 0], centers[:, 1])[in_target]
    cell_ids = [c.cell_id for c, t in zip(svc, in_target) if t]

    elements = generate_walker(cfg.walker)
    raan = np.array([e.raan_rad for e in elements])
    anom = np.array([e.mean_anomaly_rad for e in elements])
    a = elements[0].semi_major_axis_km
    inc = elements[0].inclination_rad
    plan = cfg.plan
    svc_array = cfg.array_config("service")
    params = cfg.link_params

    with open(out / "nasset.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snapshot", "cell_id", "count"])
        for k in range(plan.snapshot_count):
            pos, _ = propagate_batch(a, inc, raan, anom, plan.snapshot_start(k),
                                     j2=cfg["walker.propagator"] == "j2")
            counts = n_asset_coverage(svc_ecef, pos, svc_array, params,
                                      cfg["cells.min_elevation_deg"],
                                      cfg["kpi.n_asset_threshold_db"])
            for cid, n in zip(cell_ids, counts.tolist()):
                w.writerow([k, cid, int(n)])
    cells_to_csv(svc, out / "cells.csv", in_target=in_target)
    regenerate_report(out)
    return _finalize_manifest(out, RUN_MODE_COVERAGE, cfg, workers, started)
