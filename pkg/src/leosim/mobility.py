"""Satellite-cell association, handover triggers and HO accounting.

Two association schemes are supported.  ``nearest``: every cell is served
by the closest visible satellite; when that satellite changes at a
snapshot boundary, connected UEs re-access the new one at a start time
drawn uniformly within the following second.  ``ssb_plan_nearest``: the
two nearest satellites cover each cell; a conditional handover is armed
one snapshot ahead of a serving change and executes early (during the
current snapshot) as soon as the target's SSB-SINR clears the A4
threshold, falling back to the boundary otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .cells import elevation_matrix
from .orbits import ConfigurationError

PHASES = ("idle", "accessing", "connected", "handing_over")
_LEGAL = {
    "idle": {"accessing"},
    "accessing": {"connected", "idle"},
    "connected": {"handing_over", "idle"},
    "handing_over": {"connected", "idle"},
}


@dataclass(frozen=True)
class AssociationPolicy:
    variant: str = "nearest"            # "nearest" | "ssb_plan_nearest"
    a4_threshold_db: float = -6.0
    t1_lookahead_snapshots: int = 1
    ho_window_s: float = 1.0            # uniform execution stagger

    def __post_init__(self):
        if self.variant not in ("nearest", "ssb_plan_nearest"):
            raise ConfigurationError(f"unknown association variant {self.variant!r}")
        if not math.isfinite(self.a4_threshold_db):
            raise ConfigurationError("a4 threshold must be finite")
        if self.ho_window_s <= 0:
            raise ConfigurationError("ho window must be positive")


@dataclass
class UeConnState:
    ue_id: int
    phase: str = "idle"
    serving_sat: int | None = None
    candidate_sat: int | None = None
    phase_entry_time_s: float = 0.0

    def transition(self, new_phase: str, time_s: float, serving_sat=None):
        if new_phase not in _LEGAL[self.phase]:
            raise ConfigurationError(
                f"illegal UE state transition {self.phase} -> {new_phase} (ue {self.ue_id})")
        self.phase = new_phase
        self.phase_entry_time_s = time_s
        if new_phase in ("connected", "handing_over"):
            if serving_sat is None and self.serving_sat is None:
                raise ConfigurationError("connected/handing_over requires a serving satellite")
            if serving_sat is not None:
                self.serving_sat = serving_sat
        else:
            self.serving_sat = None
            self.candidate_sat = None


@dataclass(frozen=True)
class HoDecision:
    ue_id: int
    trigger: str                 # "t1" | "a4"
    source_sat: int
    target_sat: int
    cell_id: int
    service_cease_time_s: float  # when the source stops serving this UE
    ra_start_time_s: float


@dataclass(frozen=True)
class HoEvent:
    ue_id: int
    trigger: str
    source_sat: int
    target_sat: int
    cell_id: int
    start_time_s: float          # service cease
    ra_start_time_s: float
    end_time_s: float | None
    outcome: str                 # "success" | "failure"
    interruption_s: float | None

    def __post_init__(self):
        if self.end_time_s is not None and self.end_time_s < self.start_time_s:
            raise ConfigurationError("HO end before start")
        if (self.interruption_s is not None) != (self.outcome == "success"):
            raise ConfigurationError("interruption defined iff outcome is success")


def associate(cell_ecef: np.ndarray, sat_positions: np.ndarray,
              sat_ids: np.ndarray, min_elevation_deg: float,
              two_nearest: bool = False):
    """Map each cell to its nearest visible satellite(s) by slant distance.

    Returns (primary, secondary) arrays of satellite ids; -1 marks an
    uncovered cell (or a missing second choice).  Ties break on the lower
    satellite id (satellite arrays are id-ordered).
    """
    elev, dist = elevation_matrix(cell_ecef, sat_positions)
    masked = np.where(elev >= min_elevation_deg, dist, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")
    best = order[:, 0]
    primary = np.where(np.isfinite(masked[np.arange(len(best)), best]),
                       np.asarray(sat_ids)[best], -1)
    if not two_nearest:
        return primary.astype(np.int64), np.full(len(primary), -1, dtype=np.int64)
    second = order[:, 1] if masked.shape[1] > 1 else best
    secondary = np.where(
        (masked.shape[1] > 1)
        & np.isfinite(masked[np.arange(len(second)), second]),
        np.asarray(sat_ids)[second], -1)
    return primary.astype(np.int64), secondary.astype(np.int64)


def evaluate_triggers(ue_id: int, cell_id: int, connected_sat: int,
                      policy: AssociationPolicy,
                      next_primary: int, boundary_time_s: float,
                      start_offset_uniform: float,
                      a4_met: bool = False, a4_time_s: float | None = None):
    """Handover decision for one connected UE at/around a snapshot boundary.

    ``next_primary`` is the cell's serving satellite after the boundary;
    no decision is returned when it matches the current one.  For the
    nearest policy the UE detaches at the boundary and re-accesses within
    the stagger window.  For ssb_plan_nearest an armed conditional HO
    executes early when A4 was met (source keeps serving until the RA
    start), otherwise at the boundary (T1).
    """
    if next_primary == connected_sat or next_primary < 0:
        return None
    offset = start_offset_uniform * policy.ho_window_s
    if policy.variant == "nearest":
        ra_start = boundary_time_s + offset
        return HoDecision(ue_id=ue_id, trigger="t1", source_sat=connected_sat,
                          target_sat=next_primary, cell_id=cell_id,
                          service_cease_time_s=boundary_time_s,
                          ra_start_time_s=ra_start)
    if a4_met:
        t0 = a4_time_s if a4_time_s is not None else boundary_time_s - 0.0
        ra_start = t0 + offset
        return HoDecision(ue_id=ue_id, trigger="a4", source_sat=connected_sat,
                          target_sat=next_primary, cell_id=cell_id,
                          service_cease_time_s=ra_start,
                          ra_start_time_s=ra_start)
    ra_start = boundary_time_s + offset
    return HoDecision(ue_id=ue_id, trigger="t1", source_sat=connected_sat,
                      target_sat=next_primary, cell_id=cell_id,
                      service_cease_time_s=boundary_time_s,
                      ra_start_time_s=ra_start)


def execute_handover(decision: HoDecision, ra_success: bool,
                     completion_time_s: float | None) -> HoEvent:
    """Materialize the HO outcome of the target-side random access."""
    if ra_success:
        if completion_time_s is None:
            raise ConfigurationError("successful HO requires a completion time")
        return HoEvent(ue_id=decision.ue_id, trigger=decision.trigger,
                       source_sat=decision.source_sat, target_sat=decision.target_sat,
                       cell_id=decision.cell_id,
                       start_time_s=decision.service_cease_time_s,
                       ra_start_time_s=decision.ra_start_time_s,
                       end_time_s=completion_time_s, outcome="success",
                       interruption_s=completion_time_s - decision.service_cease_time_s)
    return HoEvent(ue_id=decision.ue_id, trigger=decision.trigger,
                   source_sat=decision.source_sat, target_sat=decision.target_sat,
                   cell_id=decision.cell_id,
                   start_time_s=decision.service_cease_time_s,
                   ra_start_time_s=decision.ra_start_time_s,
                   end_time_s=None, outcome="failure", interruption_s=None)


def interruption_and_failure_stats(events, cell_ids=None) -> dict:
    """Interruption distribution and per-cell/global HO failure rates."""
    interruptions = np.sort(np.array([e.interruption_s for e in events
                                      if e.outcome == "success"], dtype=np.float64))
    per_cell_tot: dict[int, int] = {}
    per_cell_fail: dict[int, int] = {}
    for e in events:
        per_cell_tot[e.cell_id] = per_cell_tot.get(e.cell_id, 0) + 1
        if e.outcome == "failure":
            per_cell_fail[e.cell_id] = per_cell_fail.get(e.cell_id, 0) + 1
    ids = sorted(per_cell_tot) if cell_ids is None else list(cell_ids)
    failure_rate = {c: (per_cell_fail.get(c, 0) / per_cell_tot[c]
                        if per_cell_tot.get(c) else None) for c in ids}
    total = len(events)
    failures = sum(per_cell_fail.values())
    cdf = np.arange(1, len(interruptions) + 1) / len(interruptions) if len(interruptions) else np.array([])
    return {
        "interruption_sorted_s": interruptions,
        "interruption_cdf": cdf,
        "per_cell_failure_rate": failure_rate,
        "global_failure_rate": (failures / total) if total else None,
        "total_events": total,
        "failures": failures,
    }


def ho_events_to_csv(events, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue_id", "trigger", "source_sat", "target_sat", "cell_id",
                    "start_time_s", "ra_start_time_s", "end_time_s", "outcome",
                    "interruption_s"])
        for e in events:
            w.writerow([e.ue_id, e.trigger, e.source_sat, e.target_sat, e.cell_id,
                        repr(e.start_time_s), repr(e.ra_start_time_s),
                        "" if e.end_time_s is None else repr(e.end_time_s),
                        e.outcome,
                        "" if e.interruption_s is None else repr(e.interruption_s)])
