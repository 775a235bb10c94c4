# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event kernel; same contract and bit-identical output as ``_pykernel``."""

import numpy as np
from libc.math cimport log, NAN
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free


cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0

cdef enum:
    RIGHT_ABSORB = 0
    RIGHT_CLOSED = 1
    RIGHT_RING = 2


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, int64_t n) nogil:
    return <double>(mix64(key + <uint64_t>(n + 1) * GAMMA) >> 11) * TWO_M53


cdef struct Entry:
    double t
    int64_t s


cdef inline bint key_less(double t1, int64_t s1, double t2, int64_t s2) nogil:
    return t1 < t2 or (t1 == t2 and s1 < s2)


cdef void sift_down(Entry* h, int64_t m, int64_t i) nogil:
    cdef Entry e = h[i]
    cdef int64_t child
    while True:
        child = 2 * i + 1
        if child >= m:
            break
        if child + 1 < m and key_less(h[child + 1].t, h[child + 1].s, h[child].t, h[child].s):
            child += 1
        if not key_less(h[child].t, h[child].s, e.t, e.s):
            break
        h[i] = h[child]
        i = child
    h[i] = e


cdef inline bint moves(int64_t k, double u, bint indicator, const double* thr, int64_t kmax) nogil:
    if indicator:
        return k > 0
    if k > kmax:
        k = kmax
    return u < thr[k]


def run(double[::1] clock_rates, int64_t[:, ::1] occ_in, uint64_t[::1] site_keys,
        double inject_rate, uint64_t inject_key, int right_mode,
        double[::1] thresholds, double t_max, double[::1] snap_times,
        int64_t[:, ::1] tags, bint record_disc):
    cdef int64_t n = clock_rates.shape[0]
    cdef int64_t nconf = occ_in.shape[0]
    cdef int64_t kmax = thresholds.shape[0] - 1
    cdef bint indicator = thresholds.shape[0] == 0
    cdef const double* thr = NULL
    if not indicator:
        thr = &thresholds[0]
    cdef int64_t nsnap = snap_times.shape[0]
    cdef int64_t ntag = tags.shape[0]

    occ_arr = np.array(occ_in, dtype=np.int64, copy=True)
    cdef int64_t[:, ::1] occ = occ_arr
    bonds_arr = np.zeros((nconf, n + 1), dtype=np.int64)
    cdef int64_t[:, ::1] bonds = bonds_arr
    snap_occ_arr = np.zeros((nsnap, nconf, n), dtype=np.int64)
    cdef int64_t[:, :, ::1] snap_occ = snap_occ_arr
    snap_bonds_arr = np.zeros((nsnap, nconf, n + 1), dtype=np.int64)
    cdef int64_t[:, :, ::1] snap_bonds = snap_bonds_arr
    tag_arr = np.array(tags, dtype=np.int64, copy=True).reshape(ntag, 4)
    cdef int64_t[:, ::1] tg = tag_arr
    tag_alive_arr = np.ones(ntag, dtype=np.int64)
    cdef int64_t[::1] tag_alive = tag_alive_arr
    tag_exit = [NAN] * ntag
    tag_paths = [[] for _ in range(ntag)]
    departures = [[] for _ in range(nconf)]
    injections = []
    disc_log = []

    cdef int64_t m = n + (1 if inject_rate > 0 else 0)
    cdef Entry* h = <Entry*> malloc(m * sizeof(Entry))
    cdef int64_t* counters = <int64_t*> malloc(n * sizeof(int64_t))
    if h == NULL or counters == NULL:
        free(h); free(counters)
        raise MemoryError()

    cdef int64_t i, c, s, dest, j = 0, ti, site, k, d
    cdef int64_t inj_count = 0, n_events = 0
    cdef int64_t pos_total = 0, neg_total = 0, p_old = 0, n_old = 0, p_new, n_new
    cdef double t, nxt, u
    cdef bint blocked, jump, advance

    try:
        if record_disc:
            for i in range(n):
                d = occ[0, i] - occ[1, i]
                if d > 0:
                    pos_total += d
                else:
                    neg_total -= d
        for i in range(n):
            h[i].t = -log(1.0 - uniform(site_keys[i], 0)) / clock_rates[i]
            h[i].s = i
            counters[i] = 1
        if inject_rate > 0:
            h[n].t = -log(1.0 - uniform(inject_key, 0)) / inject_rate
            h[n].s = -1
            inj_count = 1
        i = m // 2 - 1
        while i >= 0:
            sift_down(h, m, i)
            i -= 1

        while m > 0:
            t = h[0].t
            s = h[0].s
            if t > t_max:
                break
            while j < nsnap and snap_times[j] < t:
                snap_occ[j, :, :] = occ
                snap_bonds[j, :, :] = bonds
                j += 1
            n_events += 1
            if s < 0:
                for c in range(nconf):
                    occ[c, 0] += 1
                    bonds[c, 0] += 1
                injections.append(t)
                nxt = t + (-log(1.0 - uniform(inject_key, inj_count))) / inject_rate
                inj_count += 1
                h[0].t = nxt
                sift_down(h, m, 0)
                continue

            u = 0.0
            if not indicator:
                u = uniform(site_keys[s], counters[s])
                counters[s] += 1
            blocked = s == n - 1 and right_mode == RIGHT_CLOSED
            if not blocked:
                dest = s + 1
                if dest == n:
                    dest = 0 if right_mode == RIGHT_RING else -1

                for ti in range(ntag):
                    if not tag_alive[ti]:
                        continue
                    site = tg[ti, 2] % n if right_mode == RIGHT_RING else tg[ti, 2]
                    if site != s:
                        continue
                    if tg[ti, 0] == 0:
                        k = occ[tg[ti, 1], s]
                        advance = (not moves(k, u, indicator, thr, kmax)) and \
                            moves(k + 1, u, indicator, thr, kmax)
                    else:
                        jump = moves(occ[1, s], u, indicator, thr, kmax) and \
                            not moves(occ[0, s], u, indicator, thr, kmax)
                        advance = False
                        if jump:
                            if tg[ti, 3] > 0:
                                tg[ti, 3] -= 1
                            else:
                                advance = True
                                if dest >= 0:
                                    tg[ti, 3] = occ[1, dest] - occ[0, dest]
                    if advance:
                        if dest < 0:
                            tag_alive[ti] = 0
                            tag_exit[ti] = t
                        else:
                            tg[ti, 2] += 1
                            tag_paths[ti].append((t, tg[ti, 2]))

                if record_disc:
                    d = occ[0, s] - occ[1, s]
                    p_old = d if d > 0 else 0
                    n_old = -d if d < 0 else 0
                    if dest >= 0:
                        d = occ[0, dest] - occ[1, dest]
                        p_old += d if d > 0 else 0
                        n_old += -d if d < 0 else 0

                for c in range(nconf):
                    if moves(occ[c, s], u, indicator, thr, kmax):
                        occ[c, s] -= 1
                        bonds[c, s + 1] += 1
                        if dest < 0:
                            departures[c].append(t)
                        else:
                            occ[c, dest] += 1

                if record_disc:
                    d = occ[0, s] - occ[1, s]
                    p_new = d if d > 0 else 0
                    n_new = -d if d < 0 else 0
                    if dest >= 0:
                        d = occ[0, dest] - occ[1, dest]
                        p_new += d if d > 0 else 0
                        n_new += -d if d < 0 else 0
                    if p_new != p_old or n_new != n_old:
                        pos_total += p_new - p_old
                        neg_total += n_new - n_old
                        disc_log.append((t, pos_total, neg_total))

            nxt = t + (-log(1.0 - uniform(site_keys[s], counters[s]))) / clock_rates[s]
            counters[s] += 1
            h[0].t = nxt
            sift_down(h, m, 0)

        while j < nsnap:
            snap_occ[j, :, :] = occ
            snap_bonds[j, :, :] = bonds
            j += 1
    finally:
        free(h)
        free(counters)

    return {
        "occ": occ_arr,
        "bonds": bonds_arr,
        "departures": [np.array(dep, dtype=np.float64) for dep in departures],
        "injections": np.array(injections, dtype=np.float64),
        "snap_occ": snap_occ_arr,
        "snap_bonds": snap_bonds_arr,
        "disc_log": disc_log,
        "tag_paths": tag_paths,
        "tag_exit": tag_exit,
        "tag_pos": [int(tag_arr[ti, 2]) for ti in range(ntag)],
        "n_events": n_events,
    }
