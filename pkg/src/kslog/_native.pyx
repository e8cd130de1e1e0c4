# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native implementations of the hot kernels: counter-based site sampling
and the quartet four-point tally. Mirrors kslog._kernels_py bit for bit."""

import numpy as np

from libc.stdint cimport uint64_t, int64_t, int8_t, int32_t

INF_GRID = np.int64(1) << np.int64(40)

cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL
cdef uint64_t _GAMMA = 0x9E3779B97F4A7C15ULL
cdef double _U53 = 1.0 / 9007199254740992.0
cdef int64_t _INF = (<int64_t>1) << 40


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


def sample_states(seed, rep, k, order, parent, root_cum, edge_cum):
    """See kslog._kernels_py.sample_states."""
    cdef uint64_t h0 = _mix(<uint64_t>seed)
    cdef uint64_t h1 = _mix(h0 ^ (<uint64_t>rep + _GAMMA))
    cdef const int32_t[:] order_v = np.ascontiguousarray(order, dtype=np.int32)
    cdef const int32_t[:] parent_v = np.ascontiguousarray(parent, dtype=np.int32)
    cdef const double[:] root_cum_v = np.ascontiguousarray(root_cum, dtype=np.float64)
    cdef const double[:, :, :] edge_cum_v = np.ascontiguousarray(edge_cum, dtype=np.float64)
    cdef Py_ssize_t kk = k
    cdef Py_ssize_t nv = parent_v.shape[0]
    cdef int phi = root_cum_v.shape[0]
    out = np.empty((kk, nv), dtype=np.int8)
    cdef int8_t[:, :] states = out
    cdef Py_ssize_t i, oi
    cdef int v, root, s, p
    cdef uint64_t hs, z
    cdef double u
    root = order_v[0]
    with nogil:
        for i in range(kk):
            hs = _mix(h1 ^ (<uint64_t>i + _GAMMA))
            z = _mix(hs ^ (<uint64_t>root + _GAMMA))
            u = <double>(z >> 11) * _U53
            s = 0
            while s < phi - 1 and u >= root_cum_v[s]:
                s += 1
            states[i, root] = <int8_t>s
            for oi in range(1, nv):
                v = order_v[oi]
                z = _mix(hs ^ (<uint64_t>v + _GAMMA))
                u = <double>(z >> 11) * _U53
                p = states[i, parent_v[v]]
                s = 0
                while s < phi - 1 and u >= edge_cum_v[v, p, s]:
                    s += 1
                states[i, v] = <int8_t>s
    return out


def four_point_tally(dgrid, double delta, double min_split):
    """See kslog._kernels_py.four_point_tally."""
    cdef const int64_t[:, :] d = np.ascontiguousarray(dgrid, dtype=np.int64)
    cdef Py_ssize_t m = d.shape[0]
    same_np = np.zeros((m, m), dtype=np.int64)
    opp_np = np.zeros((m, m), dtype=np.int64)
    cdef int64_t[:, :] same = same_np
    cdef int64_t[:, :] opp = opp_np
    cdef long n_pass = 0
    cdef long n_multi = 0
    cdef Py_ssize_t a, b, c, e
    cdef int64_t dab, dac, dad, dbc, dbd, dcd
    cdef int64_t cross1, cross2, cross3, lo
    cdef bint ok, p1, p2, p3
    cdef int hits
    if m < 4:
        return same_np, opp_np, 0, 0
    with nogil:
        for a in range(m - 3):
            for b in range(a + 1, m - 2):
                dab = d[a, b]
                for c in range(b + 1, m - 1):
                    dac = d[a, c]
                    dbc = d[b, c]
                    for e in range(c + 1, m):
                        dad = d[a, e]
                        dbd = d[b, e]
                        dcd = d[c, e]
                        ok = (dab < _INF and dac < _INF and dad < _INF
                              and dbc < _INF and dbd < _INF and dcd < _INF)
                        if not ok:
                            continue
                        cross1 = dac + dbd
                        cross2 = dad + dbc
                        cross3 = dab + dcd
                        lo = cross1 if cross1 < cross2 else cross2
                        p1 = (lo - cross3) * delta > min_split
                        lo = cross3 if cross3 < cross2 else cross2
                        p2 = (lo - cross1) * delta > min_split
                        lo = cross3 if cross3 < cross1 else cross1
                        p3 = (lo - cross2) * delta > min_split
                        hits = 0
                        if p1:
                            hits += 1
                            same[a, b] += 1
                            same[b, a] += 1
                            same[c, e] += 1
                            same[e, c] += 1
                            opp[a, c] += 1
                            opp[c, a] += 1
                            opp[a, e] += 1
                            opp[e, a] += 1
                            opp[b, c] += 1
                            opp[c, b] += 1
                            opp[b, e] += 1
                            opp[e, b] += 1
                        if p2:
                            hits += 1
                            same[a, c] += 1
                            same[c, a] += 1
                            same[b, e] += 1
                            same[e, b] += 1
                            opp[a, b] += 1
                            opp[b, a] += 1
                            opp[a, e] += 1
                            opp[e, a] += 1
                            opp[c, b] += 1
                            opp[b, c] += 1
                            opp[c, e] += 1
                            opp[e, c] += 1
                        if p3:
                            hits += 1
                            same[a, e] += 1
                            same[e, a] += 1
                            same[b, c] += 1
                            same[c, b] += 1
                            opp[a, b] += 1
                            opp[b, a] += 1
                            opp[a, c] += 1
                            opp[c, a] += 1
                            opp[e, b] += 1
                            opp[b, e] += 1
                            opp[e, c] += 1
                            opp[c, e] += 1
                        if hits:
                            n_pass += hits
                            if hits > 1:
                                n_multi += 1
    return same_np, opp_np, n_pass, n_multi
