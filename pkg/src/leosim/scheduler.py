"""SC-centric beam hopping and per-beam proportional-fair scheduling.

Beam hopping is round robin with interference avoidance: each satellite
keeps its eligible cells in a circular queue (cell-id order) and every
slot commits up to its beam budget starting from the queue front.  A
candidate adjacent to an already-committed cell is deferred: it keeps its
place at the front of the queue instead of moving to the back, so no cell
loses its turn.  Broadcast (SSB) beams of two satellites covering the
same cell are kept to disjoint slots by the same mechanism with a
same-cell conflict rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .orbits import ConfigurationError

RATE_CAP_BPS_HZ = 7.4
RATE_ATTENUATION = 0.75
RATE_MIN_SINR_DB = -10.0
PF_WINDOW_SLOTS = 100
PF_RATE_FLOOR_BPS = 1.0


@dataclass
class BeamAssignment:
    slot: int
    sat_id: int
    beam_index: int
    cell_id: int
    tier: str


@dataclass
class Allocation:
    slot: int
    sat_id: int
    beam_index: int
    cell_id: int
    ue_id: int
    granted_bandwidth_hz: float
    achieved_rate_bps: float


class IlluminationMap:
    """Binary beam-to-cell assignment per slot with per-satellite budgets."""

    def __init__(self, service_beams: int = 50, broadcast_beams: int = 5):
        self.budgets = {"service": service_beams, "broadcast": broadcast_beams}
        self._slots: dict[int, list[BeamAssignment]] = {}

    def add(self, slot: int, sat_id: int, beam_index: int, cell_id: int, tier: str):
        entries = self._slots.setdefault(slot, [])
        used = sum(1 for e in entries if e.sat_id == sat_id and e.tier == tier)
        if used >= self.budgets[tier]:
            raise ConfigurationError(
                f"satellite {sat_id} exceeds {tier} beam budget at slot {slot}")
        if tier == "service" and any(e.sat_id == sat_id and e.cell_id == cell_id
                                     and e.tier == "service" for e in entries):
            raise ConfigurationError(
                f"duplicate service beam for (sat {sat_id}, cell {cell_id}) at slot {slot}")
        entries.append(BeamAssignment(slot, sat_id, beam_index, cell_id, tier))

    def active_beams(self, slot: int):
        for e in self._slots.get(slot, []):
            yield e.sat_id, e.beam_index, e.cell_id, e.tier

    def serving_beam(self, slot: int, cell_id: int, tier: str = "service"):
        for e in self._slots.get(slot, []):
            if e.cell_id == cell_id and e.tier == tier:
                return e.sat_id, e.beam_index
        return None


class HopQueue:
    """Circular cell queue: committed cells go to the back, deferred stay put."""

    def __init__(self, eligible_cells, beams: int):
        self.order = sorted(eligible_cells)
        self.beams = beams

    def step(self, conflict_fn) -> list:
        """Select up to ``beams`` non-conflicting cells for one slot."""
        selected = []
        kept = []
        n = len(self.order)
        idx = 0
        while idx < n and len(selected) < self.beams:
            cand = self.order[idx]
            if conflict_fn(cand):
                kept.append(cand)
            else:
                selected.append(cand)
            idx += 1
        self.order = kept + self.order[idx:] + selected
        return selected


def hop_round_robin(queue: HopQueue, slot: int, committed_cells: set,
                    adjacency: dict) -> list:
    """One slot of RR hopping for one satellite against a shared commit set.

    ``committed_cells`` holds every cell already granted a beam this slot
    by this satellite or a coordinated one; a candidate is deferred when
    any of its lattice neighbors is in that set.  Selected cells are added
    to the set.
    """
    def conflict(cell):
        return any(nb in committed_cells for nb in adjacency.get(cell, ()))

    chosen = queue.step(conflict)
    committed_cells.update(chosen)
    return chosen


def coordinate_ssb(queue_lo: HopQueue, queue_hi: HopQueue, slot: int) -> tuple:
    """One slot of coordinated broadcast sweeps for a satellite pair.

    The lower-id satellite commits first; the partner defers any cell the
    first already illuminates this slot, so a shared cell receives the two
    satellites' SSB in disjoint slots whenever capacity allows.
    """
    committed = set()

    def conflict(cell):
        return cell in committed

    first = queue_lo.step(conflict)
    committed.update(first)
    second = queue_hi.step(conflict)
    return first, second


def rate_map(sinr_db: float, bandwidth_hz: float,
             min_sinr_db: float = RATE_MIN_SINR_DB,
             attenuation: float = RATE_ATTENUATION,
             cap_bps_hz: float = RATE_CAP_BPS_HZ) -> float:
    """Attenuated, capped Shannon link-to-rate mapping (0 below cutoff)."""
    if not math.isfinite(sinr_db):
        raise ConfigurationError("sinr must be finite")
    if sinr_db < min_sinr_db:
        return 0.0
    se = attenuation * math.log2(1.0 + 10.0 ** (sinr_db / 10.0))
    return bandwidth_hz * min(cap_bps_hz, se)


class PfState:
    """Exponentially averaged throughput per UE with a positive floor."""

    def __init__(self, window_slots: int = PF_WINDOW_SLOTS,
                 floor_bps: float = PF_RATE_FLOOR_BPS):
        self.window = window_slots
        self.floor = floor_bps
        self.avg: dict[int, float] = {}

    def get(self, ue_id: int) -> float:
        return self.avg.get(ue_id, self.floor)

    def update(self, backlogged_ues, served_ue, served_rate_bps: float):
        a = 1.0 - 1.0 / self.window
        b = 1.0 / self.window
        for ue in backlogged_ues:
            rate = served_rate_bps if ue == served_ue else 0.0
            self.avg[ue] = max(self.floor, a * self.get(ue) + b * rate)


def schedule_pf(slot: int, sat_id: int, beam_index: int, cell_id: int,
                backlogged_ues, pf_state: PfState, sinr_db_of,
                bandwidth_hz: float) -> list[Allocation]:
    """Grant the whole beam bandwidth to the PF-best backlogged UE.

    ``sinr_db_of`` maps ue_id -> SINR (dB) for this slot.  Ties break on
    the lower ue_id.  Returns an empty list when nothing is backlogged
    (the beam slot is wasted).
    """
    best = None
    best_metric = -1.0
    for ue in sorted(backlogged_ues):
        rate = rate_map(sinr_db_of(ue), bandwidth_hz)
        metric = rate / pf_state.get(ue)
        if metric > best_metric + 1e-15:
            best, best_metric, best_rate = ue, metric, rate
    if best is None:
        return []
    pf_state.update(backlogged_ues, best, best_rate)
    return [Allocation(slot=slot, sat_id=sat_id, beam_index=beam_index,
                       cell_id=cell_id, ue_id=best,
                       granted_bandwidth_hz=bandwidth_hz,
                       achieved_rate_bps=best_rate)]
