"""Pure-Python event kernel (fallback and reference for ``_ckernel``).

One attempt clock per site, of rate ``clock_rates[i]``, plus an optional
injection clock. Clocks are merged through a heap keyed by ``(time, order)``
with the injection clock ordered before site 0. Each site owns a counter
based stream: draw 0 is its first waiting time; every firing then consumes
one thinning uniform (general rate functions only) followed by the next
waiting time. Draw consumption never depends on the configuration, which is
what makes the shared-clock coupling exact.

Tag rows are ``(mode, ref, pos, h)``:

* mode 0: second-class particle relative to configuration ``ref``; it jumps
  when ``ref`` would not move at its site but would with one more particle.
* mode 1: labeled particle of the difference ``xi - eta`` (configs 1 and 0);
  ``h`` counts difference particles sharing its site with higher labels,
  which move first.

Positions are window indices; on a ring they are unwrapped.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .rng import GAMMA, MASK64, TWO_M53

RIGHT_ABSORB = 0
RIGHT_CLOSED = 1
RIGHT_RING = 2


def _mix(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _uniform(key, n):
    return (_mix(key + (n + 1) * GAMMA) >> 11) * TWO_M53


def run(clock_rates, occ, site_keys, inject_rate, inject_key, right_mode,
        thresholds, t_max, snap_times, tags, record_disc):
    n = len(clock_rates)
    nconf = occ.shape[0]
    rates = [float(r) for r in clock_rates]
    keys = [int(k) for k in site_keys]
    inject_key = int(inject_key)
    thr = [float(x) for x in thresholds]
    kmax = len(thr) - 1
    indicator = len(thr) == 0
    state = [[int(k) for k in occ[c]] for c in range(nconf)]
    bonds = [[0] * (n + 1) for _ in range(nconf)]
    departures = [[] for _ in range(nconf)]
    injections = []
    snaps = [float(s) for s in snap_times]
    nsnap = len(snaps)
    snap_occ = np.zeros((nsnap, nconf, n), dtype=np.int64)
    snap_bonds = np.zeros((nsnap, nconf, n + 1), dtype=np.int64)
    tag_rows = [[int(v) for v in row] for row in tags]
    tag_alive = [True] * len(tag_rows)
    tag_paths = [[] for _ in tag_rows]
    tag_exit = [math.nan] * len(tag_rows)
    disc_log = []

    def moves(k, u):
        if indicator:
            return k > 0
        return u < thr[k if k < kmax else kmax]

    pos_total = neg_total = 0
    if record_disc:
        for i in range(n):
            d = state[0][i] - state[1][i]
            if d > 0:
                pos_total += d
            else:
                neg_total -= d

    counters = [1] * n
    heap = [(-math.log(1.0 - _uniform(keys[i], 0)) / rates[i], i) for i in range(n)]
    inj_count = 0
    if inject_rate > 0:
        heap.append((-math.log(1.0 - _uniform(inject_key, 0)) / inject_rate, -1))
        inj_count = 1
    heapq.heapify(heap)

    j = 0
    n_events = 0

    def record(idx):
        for c in range(nconf):
            snap_occ[idx, c] = state[c]
            snap_bonds[idx, c] = bonds[c]

    while heap:
        t, s = heap[0]
        if t > t_max:
            break
        while j < nsnap and snaps[j] < t:
            record(j)
            j += 1
        n_events += 1
        if s < 0:
            for c in range(nconf):
                state[c][0] += 1
                bonds[c][0] += 1
            injections.append(t)
            nxt = t + (-math.log(1.0 - _uniform(inject_key, inj_count))) / inject_rate
            inj_count += 1
            heapq.heapreplace(heap, (nxt, -1))
            continue

        u = 0.0
        if not indicator:
            u = _uniform(keys[s], counters[s])
            counters[s] += 1
        blocked = s == n - 1 and right_mode == RIGHT_CLOSED
        if not blocked:
            dest = s + 1
            if dest == n:
                dest = 0 if right_mode == RIGHT_RING else -1

            for ti, row in enumerate(tag_rows):
                if not tag_alive[ti]:
                    continue
                site = row[2] % n if right_mode == RIGHT_RING else row[2]
                if site != s:
                    continue
                if row[0] == 0:
                    k = state[row[1]][s]
                    jump = (not moves(k, u)) and moves(k + 1, u)
                    advance = jump
                else:
                    jump = moves(state[1][s], u) and not moves(state[0][s], u)
                    advance = False
                    if jump:
                        if row[3] > 0:
                            row[3] -= 1
                        else:
                            advance = True
                            if dest >= 0:
                                row[3] = state[1][dest] - state[0][dest]
                if advance:
                    if dest < 0:
                        tag_alive[ti] = False
                        tag_exit[ti] = t
                    else:
                        row[2] += 1
                        tag_paths[ti].append((t, row[2]))

            if record_disc:
                old = state[0][s] - state[1][s]
                contrib = (old if old > 0 else 0, -old if old < 0 else 0)
                p_old, n_old = contrib
                if dest >= 0:
                    old_d = state[0][dest] - state[1][dest]
                    p_old += old_d if old_d > 0 else 0
                    n_old += -old_d if old_d < 0 else 0

            for c in range(nconf):
                row = state[c]
                if moves(row[s], u):
                    row[s] -= 1
                    bonds[c][s + 1] += 1
                    if dest < 0:
                        departures[c].append(t)
                    else:
                        row[dest] += 1

            if record_disc:
                new = state[0][s] - state[1][s]
                p_new = new if new > 0 else 0
                n_new = -new if new < 0 else 0
                if dest >= 0:
                    new_d = state[0][dest] - state[1][dest]
                    p_new += new_d if new_d > 0 else 0
                    n_new += -new_d if new_d < 0 else 0
                if p_new != p_old or n_new != n_old:
                    pos_total += p_new - p_old
                    neg_total += n_new - n_old
                    disc_log.append((t, pos_total, neg_total))

        nxt = t + (-math.log(1.0 - _uniform(keys[s], counters[s]))) / rates[s]
        counters[s] += 1
        heapq.heapreplace(heap, (nxt, s))

    while j < nsnap:
        record(j)
        j += 1

    return {
        "occ": np.array(state, dtype=np.int64).reshape(nconf, n),
        "bonds": np.array(bonds, dtype=np.int64).reshape(nconf, n + 1),
        "departures": [np.array(d, dtype=np.float64) for d in departures],
        "injections": np.array(injections, dtype=np.float64),
        "snap_occ": snap_occ,
        "snap_bonds": snap_bonds,
        "disc_log": disc_log,
        "tag_paths": tag_paths,
        "tag_exit": tag_exit,
        "tag_pos": [row[2] for row in tag_rows],
        "n_events": n_events,
    }
