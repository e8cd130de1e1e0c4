"""Pure numpy implementations of the two hot kernels.

These mirror kslog._native exactly: same counter-based random stream, same
comparison conventions, bit-identical outputs. The native module is
preferred at import time when present (see kslog._kernels).
"""

from __future__ import annotations

import itertools

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_U53 = 1.0 / 9007199254740992.0  # 2**-53
_MASK = (1 << 64) - 1

INF_GRID = np.int64(1) << np.int64(40)


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64 (wrapping)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    """Same finalizer on Python ints (avoids numpy scalar overflow noise)."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _site_streams(seed: int, rep: int, k: int) -> np.ndarray:
    """Per-site stream states derived from (seed, replicate, site)."""
    h = _mix_int(int(seed) & _MASK)
    h = _mix_int(h ^ ((int(rep) + 0x9E3779B97F4A7C15) & _MASK))
    sites = np.arange(k, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(h) ^ (sites + _GAMMA))


def _vertex_uniforms(site_state: np.ndarray, vertex: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = _mix(site_state ^ (np.uint64(int(vertex) & _MASK) + _GAMMA))
    return (z >> np.uint64(11)).astype(np.float64) * _U53


def sample_states(seed, rep, k, order, parent, root_cum, edge_cum):
    """Draw k independent site columns of states at every vertex.

    order: topological order, root first. root_cum: cumulative stationary
    distribution. edge_cum[v]: cumulative transition rows for the edge above
    vertex v (row index = parent state). Returns int8 array (k, n_vertices).
    """
    order = np.asarray(order, dtype=np.int32)
    parent = np.asarray(parent, dtype=np.int32)
    nv = parent.shape[0]
    phi = root_cum.shape[0]
    states = np.empty((k, nv), dtype=np.int8)
    stream = _site_streams(seed, rep, k)
    root = int(order[0])
    u = _vertex_uniforms(stream, root)
    states[:, root] = np.sum(u[:, None] >= root_cum[None, : phi - 1], axis=1)
    for v in order[1:]:
        v = int(v)
        u = _vertex_uniforms(stream, v)
        rows = edge_cum[v][states[:, parent[v]]]
        states[:, v] = np.sum(u[:, None] >= rows[:, : phi - 1], axis=1)
    return states


_TRIPLES_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _triples(mm: int):
    """All i<j<k triples over range(mm), sorted by k (prefix-sliceable)."""
    if mm not in _TRIPLES_CACHE:
        if mm < 3:
            empty = np.empty(0, dtype=np.int64)
            _TRIPLES_CACHE[mm] = (empty, empty, empty)
        else:
            trip = np.array(
                [(i, j, kk) for kk in range(2, mm)
                 for i, j in itertools.combinations(range(kk), 2)],
                dtype=np.int64)
            _TRIPLES_CACHE[mm] = (trip[:, 0], trip[:, 1], trip[:, 2])
    return _TRIPLES_CACHE[mm]


def four_point_tally(dgrid, delta, min_split):
    """Run the deep four-point test over every quartet of m vertices.

    dgrid: (m, m) int64 grid indices of the distorted distances, INF_GRID
    where infinite. A pairing passes when all six quartet distances are
    finite and its four-point gap exceeds min_split / 2 for both labelings
    of the pairs, i.e. with the smaller of the two cross sums (a wrong
    pairing then scores at most minus the inner span instead of zero).

    Returns (same, opp, n_pass, n_multi): same-side and opposite-side
    co-occurrence counts per vertex pair over all passing splits, the number
    of passing (quartet, pairing) events, and the number of quartets with
    more than one passing pairing.
    """
    d = np.asarray(dgrid, dtype=np.int64)
    m = d.shape[0]
    same = np.zeros((m, m), dtype=np.int64)
    opp = np.zeros((m, m), dtype=np.int64)
    n_pass = 0
    n_multi = 0
    if m < 4:
        return same, opp, 0, 0
    ti, tj, tk = _triples(m - 1)
    # threshold on the doubled-gap grid integer: s * delta > min_split
    for a in range(m - 3):
        cnt = int(np.searchsorted(tk, m - 1 - a, side="left"))
        if cnt == 0:
            continue
        b = a + 1 + ti[:cnt]
        c = a + 1 + tj[:cnt]
        e = a + 1 + tk[:cnt]
        dab = d[a, b]
        dac = d[a, c]
        dad = d[a, e]
        dbc = d[b, c]
        dbd = d[b, e]
        dcd = d[c, e]
        ok = ((dab < INF_GRID) & (dac < INF_GRID) & (dad < INF_GRID)
              & (dbc < INF_GRID) & (dbd < INF_GRID) & (dcd < INF_GRID))
        cross1 = dac + dbd
        cross2 = dad + dbc
        cross3 = dab + dcd
        s1 = np.where(ok, np.minimum(cross1, cross2) - cross3, 0)
        p1 = ok & (s1 * delta > min_split)
        s2 = np.where(ok, np.minimum(cross3, cross2) - cross1, 0)
        p2 = ok & (s2 * delta > min_split)
        s3 = np.where(ok, np.minimum(cross3, cross1) - cross2, 0)
        p3 = ok & (s3 * delta > min_split)
        n_pass += int(p1.sum() + p2.sum() + p3.sum())
        n_multi += int(np.sum((p1.astype(np.int8) + p2.astype(np.int8)
                               + p3.astype(np.int8)) > 1))
        for mask, pair1, pair2 in (
            (p1, (np.full(cnt, a), b), (c, e)),
            (p2, (np.full(cnt, a), c), (b, e)),
            (p3, (np.full(cnt, a), e), (b, c)),
        ):
            if not mask.any():
                continue
            x1, y1 = pair1[0][mask], pair1[1][mask]
            x2, y2 = pair2[0][mask], pair2[1][mask]
            np.add.at(same, (x1, y1), 1)
            np.add.at(same, (y1, x1), 1)
            np.add.at(same, (x2, y2), 1)
            np.add.at(same, (y2, x2), 1)
            for u, v in ((x1, x2), (x1, y2), (y1, x2), (y1, y2)):
                np.add.at(opp, (u, v), 1)
                np.add.at(opp, (v, u), 1)
    return same, opp, n_pass, n_multi
