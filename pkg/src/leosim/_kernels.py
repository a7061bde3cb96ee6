"""Numba kernels for the slot-level simulation loops.

Cells are processed independently inside a snapshot (their interference
is a function of the illumination pattern alone), so the scheduling
kernel parallelizes over cells with bit-identical results regardless of
thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

EV_PACKET = 0
EV_BUSY_END = 1
EV_CONNECT = 2
EV_DISCONNECT = 3

_MIX = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True)
def hop_single_sat(order, n_beams, nbr_indptr, nbr_indices, n_slots,
                   stamp, commit_cells, commit_ptr, slot_hash):
    """Round-robin sweep with own-beam adjacency avoidance for one satellite.

    ``order`` is the circular queue (cell indices); committed cells move
    to the back, deferred ones keep their position.  ``stamp`` is a
    scratch array over all cells.  Outputs flat commits per slot plus a
    per-slot pattern hash.
    """
    n = order.shape[0]
    scratch = np.empty(n, dtype=order.dtype)
    total = 0
    for t in range(n_slots):
        commit_ptr[t] = total
        selected = 0
        kept = 0
        h = np.uint64(0xCBF29CE484222325)
        idx = 0
        while idx < n and selected < n_beams:
            cand = order[idx]
            conflict = False
            for j in range(nbr_indptr[cand], nbr_indptr[cand + 1]):
                if stamp[nbr_indices[j]] == t + 1:
                    conflict = True
                    break
            if conflict:
                scratch[kept] = cand
                kept += 1
            else:
                stamp[cand] = t + 1
                commit_cells[total + selected] = cand
                h = (h ^ (np.uint64(cand) + np.uint64(1))) * _MIX
                selected += 1
            idx += 1
        # rebuild queue: deferred + unexamined + committed
        pos = kept
        for j in range(idx, n):
            scratch[pos] = order[j]
            pos += 1
        for j in range(selected):
            scratch[pos] = commit_cells[total + j]
            pos += 1
        order[:] = scratch[:n]
        total += selected
        slot_hash[t] = h
    commit_ptr[n_slots] = total
    return total


@njit(cache=True)
def hop_joint(orders, order_ptr, n_beams, n_slots, n_cells,
              commit_cells, commit_ptr_per_sat, slot_hash_per_sat):
    """Coordinated sweep over several satellites sharing one commit set.

    Satellites are processed in array order (ascending id) each slot; a
    candidate conflicts when the shared set already holds the same cell.
    Used for broadcast/SSB coordination: a cell shared by two satellites
    receives their beams in disjoint slots whenever capacity allows.
    """
    n_sats = order_ptr.shape[0] - 1
    stamp = np.zeros(n_cells, dtype=np.int64)
    scratch = np.empty(n_cells, dtype=orders.dtype)
    totals = np.zeros(n_sats, dtype=np.int64)
    for t in range(n_slots):
        for s in range(n_sats):
            commit_ptr_per_sat[s, t] = totals[s]
            lo, hi = order_ptr[s], order_ptr[s + 1]
            n = hi - lo
            selected = 0
            kept = 0
            h = np.uint64(0xCBF29CE484222325)
            idx = 0
            while idx < n and selected < n_beams:
                cand = orders[lo + idx]
                if stamp[cand] == t + 1:
                    scratch[kept] = cand
                    kept += 1
                else:
                    stamp[cand] = t + 1
                    commit_cells[s, totals[s] + selected] = cand
                    h = (h ^ (np.uint64(cand) + np.uint64(1))) * _MIX
                    selected += 1
                idx += 1
            pos = kept
            for j in range(idx, n):
                scratch[pos] = orders[lo + j]
                pos += 1
            for j in range(selected):
                scratch[pos] = commit_cells[s, totals[s] + j]
                pos += 1
            for j in range(n):
                orders[lo + j] = scratch[j]
            totals[s] += selected
            slot_hash_per_sat[s, t] = h
    for s in range(n_sats):
        commit_ptr_per_sat[s, n_slots] = totals[s]
    return totals


@njit(parallel=True, cache=True)
def gather_interference(lit_ptr, lit_slots, layer_pattern, pattern_power,
                        serving_cc, out_interference):
    """Total interference at each target cell for each of its lit slots.

    ``layer_pattern[l, t]`` is the global pattern-row index of layer l at
    slot t; ``pattern_power[p, c]`` the summed received power (linear W)
    of pattern p at cell c.  The cell's own serving-beam contribution
    (evaluated at the cell center) is subtracted.
    """
    n_cells = lit_ptr.shape[0] - 1
    n_layers = layer_pattern.shape[0]
    for c in prange(n_cells):
        for k in range(lit_ptr[c], lit_ptr[c + 1]):
            t = lit_slots[k]
            acc = 0.0
            for l in range(n_layers):
                acc += pattern_power[layer_pattern[l, t], c]
            out_interference[k] = acc - serving_cc[c]


@njit(parallel=True, cache=True)
def traffic_kernel(cell_ue_ptr, cell_ue_idx,
                   lit_ptr, lit_slots, lit_interference,
                   ev_ptr, ev_slot, ev_kind, ev_ue, ev_value,
                   serving_lin, backlog, rbar, connected, conn_start,
                   noise_lin, slot_duration_s, bandwidth_hz,
                   pf_window, pf_floor, rate_att, rate_cap, rate_min_lin,
                   n_slots,
                   ue_delivered, ue_served_slots, ue_connected_slots,
                   ue_generated, ue_dropped,
                   cell_generated, cell_delivered, cell_dropped,
                   cell_wasted_lit):
    """Slot-level PF scheduling and delivery accounting, one cell at a time.

    All bit quantities are integral; every generated bit is delivered,
    dropped at a busy-period end, or left in the backlog.
    """
    n_cells = cell_ue_ptr.shape[0] - 1
    a = 1.0 - 1.0 / pf_window
    b = 1.0 / pf_window
    for c in prange(n_cells):
        ev_lo, ev_hi = ev_ptr[c], ev_ptr[c + 1]
        ei = ev_lo
        for k in range(lit_ptr[c], lit_ptr[c + 1]):
            t = lit_slots[k]
            # apply events up to and including this slot
            while ei < ev_hi and ev_slot[ei] <= t:
                ue = ev_ue[ei]
                kind = ev_kind[ei]
                if kind == EV_PACKET:
                    backlog[ue] += ev_value[ei]
                    ue_generated[ue] += ev_value[ei]
                    cell_generated[c] += ev_value[ei]
                elif kind == EV_BUSY_END:
                    cell_dropped[c] += backlog[ue]
                    ue_dropped[ue] += backlog[ue]
                    backlog[ue] = 0
                elif kind == EV_CONNECT:
                    if connected[ue] == 0:
                        connected[ue] = 1
                        conn_start[ue] = ev_slot[ei]
                else:  # EV_DISCONNECT
                    if connected[ue] == 1:
                        connected[ue] = 0
                        ue_connected_slots[ue] += ev_slot[ei] - conn_start[ue]
                ei += 1
            interference = lit_interference[k]
            denom = interference + noise_lin
            # PF selection among connected backlogged UEs (lowest index wins ties)
            best = -1
            best_metric = 0.0
            best_rate = 0.0
            for j in range(cell_ue_ptr[c], cell_ue_ptr[c + 1]):
                ue = cell_ue_idx[j]
                if connected[ue] == 0 or backlog[ue] <= 0:
                    continue
                sinr = serving_lin[ue] / denom
                if sinr < rate_min_lin:
                    rate = 0.0
                else:
                    se = rate_att * np.log2(1.0 + sinr)
                    if se > rate_cap:
                        se = rate_cap
                    rate = bandwidth_hz * se
                metric = rate / rbar[ue]
                if metric > best_metric:
                    best = ue
                    best_metric = metric
                    best_rate = rate
            if best < 0:
                cell_wasted_lit[c] += 1
            else:
                bits = np.int64(best_rate * slot_duration_s)
                if bits > backlog[best]:
                    bits = backlog[best]
                backlog[best] -= bits
                ue_delivered[best] += bits
                ue_served_slots[best] += 1
                cell_delivered[c] += bits
                served_rate = bits / slot_duration_s
                # EMA update for every backlogged connected UE
                for j in range(cell_ue_ptr[c], cell_ue_ptr[c + 1]):
                    ue = cell_ue_idx[j]
                    if connected[ue] == 0:
                        continue
                    if backlog[ue] <= 0 and ue != best:
                        continue
                    r = served_rate if ue == best else 0.0
                    v = a * rbar[ue] + b * r
                    rbar[ue] = v if v > pf_floor else pf_floor
        # flush remaining events of the snapshot
        while ei < ev_hi:
            ue = ev_ue[ei]
            kind = ev_kind[ei]
            if kind == EV_PACKET:
                backlog[ue] += ev_value[ei]
                ue_generated[ue] += ev_value[ei]
                cell_generated[c] += ev_value[ei]
            elif kind == EV_BUSY_END:
                cell_dropped[c] += backlog[ue]
                ue_dropped[ue] += backlog[ue]
                backlog[ue] = 0
            elif kind == EV_CONNECT:
                if connected[ue] == 0:
                    connected[ue] = 1
                    conn_start[ue] = ev_slot[ei]
            else:
                if connected[ue] == 1:
                    connected[ue] = 0
                    ue_connected_slots[ue] += ev_slot[ei] - conn_start[ue]
            ei += 1
        # close out connected time at snapshot end
        for j in range(cell_ue_ptr[c], cell_ue_ptr[c + 1]):
            ue = cell_ue_idx[j]
            if connected[ue] == 1:
                ue_connected_slots[ue] += n_slots - conn_start[ue]
                conn_start[ue] = 0
