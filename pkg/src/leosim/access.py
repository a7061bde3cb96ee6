"""Contention-based random access (PRACH) with separate preamble pools.

Each occasion, every contender of a (satellite, cell) pool draws one
preamble uniformly; a preamble drawn by exactly one UE succeeds, any
preamble drawn by two or more collides for all of them.  Collided UEs
retry after a uniform backoff until their attempt budget is exhausted.
No capture effect and no power ramping are modeled.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .orbits import ConfigurationError

OUTCOME_SUCCESS = "success"
OUTCOME_COLLISION = "collision"
OUTCOME_NO_COVERAGE = "no-coverage"


@dataclass(frozen=True)
class RachConfig:
    occasion_period_ms: float = 80.0
    preambles_initial: int = 54
    preambles_ho: int = 10
    max_attempts: int = 10          # initial-access attempt budget
    ho_max_attempts: int = 1        # handover attempt budget (single-shot)
    backoff_max_occasions: int = 3  # uniform 0..backoff_max extra occasions
    response_delay_s: float = 0.010

    def __post_init__(self):
        if self.max_attempts < 1 or self.ho_max_attempts < 1:
            raise ConfigurationError("attempt budgets must be >= 1")
        if self.preambles_initial < 1 or self.preambles_ho < 1:
            raise ConfigurationError("preamble pools must be non-empty")
        if self.occasion_period_ms <= 0:
            raise ConfigurationError("occasion period must be positive")

    def pool_size(self, purpose: str) -> int:
        return self.preambles_initial if purpose == "initial" else self.preambles_ho

    def attempt_budget(self, purpose: str) -> int:
        return self.max_attempts if purpose == "initial" else self.ho_max_attempts

    @property
    def occasion_period_s(self) -> float:
        return self.occasion_period_ms / 1000.0


@dataclass(frozen=True)
class AccessAttempt:
    ue_id: int
    procedure_id: int
    purpose: str                 # "initial" | "handover"
    attempt_index: int           # 1-based
    occasion_index: int
    chosen_preamble: int
    outcome: str
    cell_id: int = -1
    sat_id: int = -1
    reaccess_after_ho_failure: bool = False


def run_rach_occasion(contender_ue_ids, pool_size: int, rng) -> dict:
    """Resolve one occasion: ue_id -> (chosen_preamble, outcome)."""
    ids = list(contender_ue_ids)
    if not ids:
        return {}
    draws = rng.integers(0, pool_size, size=len(ids))
    counts = np.bincount(draws, minlength=pool_size)
    return {ue: (int(p), OUTCOME_SUCCESS if counts[p] == 1 else OUTCOME_COLLISION)
            for ue, p in zip(ids, draws)}


def _procedures(attempts):
    procs = defaultdict(list)
    for a in attempts:
        procs[(a.ue_id, a.procedure_id)].append(a)
    return procs


def access_success_probability(attempts, purpose: str = "initial",
                               per_cell: bool = False):
    """Fraction of procedures that succeeded within their attempt budget.

    No-coverage procedures are excluded.  Returns None (undefined marker)
    when no procedure matches; per_cell gives a {cell_id: fraction|None}
    map over cells that started at least one procedure.
    """
    started = defaultdict(int)
    succeeded = defaultdict(int)
    for (ue, pid), rows in _procedures(attempts).items():
        if rows[0].purpose != purpose:
            continue
        if all(r.outcome == OUTCOME_NO_COVERAGE for r in rows):
            continue
        cell = rows[0].cell_id
        started[cell] += 1
        if any(r.outcome == OUTCOME_SUCCESS for r in rows):
            succeeded[cell] += 1
    if per_cell:
        return {c: (succeeded[c] / started[c] if started[c] else None) for c in started}
    total = sum(started.values())
    return (sum(succeeded.values()) / total) if total else None


def access_capacity(attempts, window_s: float, occasion_period_s: float):
    """Distinct UEs completing initial access per cell per window.

    Returns {cell_id: {window_index: count}}; windows are [k*w, (k+1)*w).
    """
    if window_s <= 0:
        raise ConfigurationError("window must be positive")
    per_cell = defaultdict(lambda: defaultdict(set))
    for (ue, pid), rows in _procedures(attempts).items():
        if rows[0].purpose != "initial":
            continue
        for r in rows:
            if r.outcome == OUTCOME_SUCCESS:
                win = int((r.occasion_index * occasion_period_s) / window_s)
                per_cell[r.cell_id][win].add(ue)
                break
    return {c: {w: len(s) for w, s in wins.items()} for c, wins in per_cell.items()}


def capacity_cdf(per_cell_counts: dict):
    """Sorted per-cell connected-UE counts and their empirical CDF."""
    vals = sorted(sum(wins.values()) for wins in per_cell_counts.values())
    if not vals:
        return np.array([]), np.array([])
    v = np.array(vals, dtype=np.float64)
    return v, np.arange(1, len(v) + 1) / len(v)


def attempts_to_csv(attempts, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ue_id", "procedure_id", "purpose", "attempt_index",
                    "occasion_index", "chosen_preamble", "outcome",
                    "cell_id", "sat_id", "reaccess_after_ho_failure"])
        for a in attempts:
            w.writerow([a.ue_id, a.procedure_id, a.purpose, a.attempt_index,
                        a.occasion_index, a.chosen_preamble, a.outcome,
                        a.cell_id, a.sat_id, int(a.reaccess_after_ho_failure)])
