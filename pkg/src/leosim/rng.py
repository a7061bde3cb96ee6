"""Deterministic random-stream management.

Every random quantity in a run is drawn from a stream that is a pure
function of (master_seed, entity kind, entity ids).  Draw order therefore
never depends on scheduling or worker count.

Two mechanisms are provided:

* ``stream`` builds a numpy Generator for bulk per-entity draws
  (workloads, hotspot selection).
* ``keyed_uniform`` / ``keyed_randint`` are stateless counter-based draws
  (SplitMix64 mixing) for fine-grained per-event values such as preamble
  choices, where allocating a Generator per event would dominate runtime.
"""

from __future__ import annotations

import numpy as np

_KIND_CODES = {
    "hotspots": 1,
    "ue_deploy": 2,
    "sessions": 3,
    "rach": 4,
    "ho_start": 5,
    "backoff": 6,
    "shadow": 7,
}


def kind_code(kind: str) -> int:
    try:
        return _KIND_CODES[kind]
    except KeyError:
        raise ValueError(f"unknown rng stream kind: {kind!r}") from None


def stream(master_seed: int, kind: str, *ids: int) -> np.random.Generator:
    """Generator for (master_seed, kind, ids); independent across entities."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(kind_code(kind), *map(int, ids)))
    return np.random.Generator(np.random.PCG64(ss))


def _mix64(x: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer
    x = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x += np.uint64(0x9E3779B97F4A7C15)
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def keyed_u64(master_seed: int, kind: str, *ids) -> np.ndarray:
    """Vectorized 64-bit hash of (master_seed, kind, ids...).

    ``ids`` are integer scalars or equal-length integer arrays; the result
    broadcasts to their common shape.
    """
    acc = _mix64(np.asarray(master_seed, dtype=np.uint64)
                 ^ np.uint64(kind_code(kind) * 0x9E3779B97F4A7C15 & 0xFFFFFFFFFFFFFFFF))
    for part in ids:
        arr = np.asarray(part, dtype=np.uint64)
        with np.errstate(over="ignore"):
            acc = _mix64(acc ^ _mix64(arr))
    return acc


def keyed_uniform(master_seed: int, kind: str, *ids) -> np.ndarray:
    """Uniform [0, 1) floats keyed by (master_seed, kind, ids...)."""
    u = keyed_u64(master_seed, kind, *ids)
    return (u >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def keyed_randint(master_seed: int, kind: str, bound: int, *ids) -> np.ndarray:
    """Integers in [0, bound) keyed by (master_seed, kind, ids...)."""
    u = keyed_u64(master_seed, kind, *ids)
    return (u % np.uint64(bound)).astype(np.int64)
