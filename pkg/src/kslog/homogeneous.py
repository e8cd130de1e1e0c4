"""Level-by-level reconstruction of complete balanced trees.

Each round computes the grid distorted metric between the current roots by
exponential averaging over their leaf sets, runs the deep four-point test
over every quartet, pairs up the cherries, and estimates the decay weights
of the newly created edges from a three-point combination of grid
distances. Those weights feed the next round's averaging.

The driver consumes only a distance table; alignments never reach it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kslog._kernels import INF_GRID, four_point_tally
from kslog.averaging import GridParams, distorted_grid
from kslog.errors import ReconstructionFailure
from kslog.trees import UnrootedTopology

__all__ = ["deep_four_point", "reconstruct_homogeneous",
           "HomogeneousResult", "LevelReport", "topology_from_parents"]


def topology_from_parents(parent, n_leaves: int) -> UnrootedTopology:
    """Unrooted topology of a rooted parent array (root suppressed)."""
    parent = np.asarray(parent)
    root = int(np.nonzero(parent < 0)[0][0])
    edges = []
    root_kids = []
    for v in range(parent.shape[0]):
        p = int(parent[v])
        if p == root:
            root_kids.append(v)
        elif p >= 0:
            edges.append((v, p))
    edges.append((root_kids[0], root_kids[1]))
    remap = {}
    nxt = n_leaves
    for a, b in edges:
        for x in (a, b):
            if x not in remap:
                remap[x] = x if x < n_leaves else None
    for a, b in sorted(edges):
        for x in (a, b):
            if remap[x] is None:
                remap[x] = nxt
                nxt += 1
    return UnrootedTopology(n_leaves, [(remap[a], remap[b]) for a, b in edges])


def deep_four_point(dgrid: np.ndarray, a: int, b: int, c: int, d: int,
                    params: GridParams):
    """Classify one quartet from the grid distance matrix.

    A pairing passes when its four-point gap exceeds edge_min / 2 under
    both labelings of its pairs (the smaller cross sum is used). Returns
    ("split", ((x, y), (z, w))) for the unique passing pairing,
    ("far", None) if any of the six distances is infinite, or
    ("ambiguous", None) when no pairing (or more than one) passes.
    """
    idx = (a, b, c, d)
    if len(set(idx)) != 4:
        raise ValueError("quartet vertices must be distinct")
    for i in range(4):
        for j in range(i + 1, 4):
            if dgrid[idx[i], idx[j]] >= INF_GRID:
                return ("far", None)
    sums = {
        frozenset((frozenset((a, b)), frozenset((c, d)))):
            int(dgrid[a, b]) + int(dgrid[c, d]),
        frozenset((frozenset((a, c)), frozenset((b, d)))):
            int(dgrid[a, c]) + int(dgrid[b, d]),
        frozenset((frozenset((a, d)), frozenset((b, c)))):
            int(dgrid[a, d]) + int(dgrid[b, c]),
    }
    hits = []
    for pairing, within in sums.items():
        gap = min(v for p, v in sums.items() if p != pairing) - within
        if gap * params.delta > params.edge_min:
            p1, p2 = sorted(pairing, key=min)
            hits.append((tuple(sorted(p1)), tuple(sorted(p2))))
    if len(hits) == 1:
        return ("split", hits[0])
    return ("ambiguous", None)


@dataclass
class LevelReport:
    level: int
    size: int
    passing_splits: int
    multi_pass_quartets: int
    conflict_pairs: int
    allowed_pairs: int
    cherries: int
    used_greedy_matching: bool

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class HomogeneousResult:
    """Reconstructed rooted shape with estimated edge weights.

    ``clade_theta`` maps each reconstructed clade (frozen leaf set) to the
    estimated decay of the edge above it; the two clades meeting at the
    root carry no estimate (the root is not identifiable).
    """

    topology: UnrootedTopology
    parent: np.ndarray
    clade_theta: dict
    clade_grid_length: dict
    levels: list = field(default_factory=list)

    def diagnostics(self):
        return {"levels": [lv.as_dict() for lv in self.levels]}


class _Cluster:
    __slots__ = ("node", "leaf_ids", "weights")

    def __init__(self, node, leaf_ids, weights):
        self.node = node
        self.leaf_ids = leaf_ids
        self.weights = weights

    @property
    def label(self) -> int:
        return int(self.leaf_ids.min())


def _match_cherries(allowed, dgrid, m):
    """Pair up the level's vertices from the allowed-pair evidence.

    The direct rule (every vertex in exactly one allowed pair) is used when
    it already forms a perfect pairing; otherwise pairs are taken greedily
    by increasing grid distance, which keeps true siblings ahead of any
    radius-boundary artifacts. Returns (pairs, used_greedy).
    """
    degree = np.zeros(m, dtype=np.int64)
    for i, j in allowed:
        degree[i] += 1
        degree[j] += 1
    if np.all(degree == 1):
        return sorted(allowed), False
    order = sorted(allowed, key=lambda ij: (int(dgrid[ij[0], ij[1]]), ij))
    used = np.zeros(m, dtype=bool)
    pairs = []
    for i, j in order:
        if not used[i] and not used[j]:
            pairs.append((i, j))
            used[i] = used[j] = True
    if len(pairs) * 2 != m:
        raise ReconstructionFailure(
            f"cherry pairing is not perfect: matched {len(pairs)} pairs "
            f"out of {m} vertices")
    return sorted(pairs), True


def reconstruct_homogeneous(table, params: GridParams) -> HomogeneousResult:
    """Reconstruct a complete balanced tree from leaf distances only."""
    n = table.n
    if n < 4 or n & (n - 1):
        raise ValueError("leaf count must be a power of two, at least 4")
    expneg = table.expneg
    out_parent = np.full(2 * n - 1, -1, dtype=np.int32)
    next_id = n
    clade_theta: dict = {}
    clade_grid: dict = {}
    levels: list[LevelReport] = []
    clusters = [_Cluster(i, np.array([i], dtype=np.int64), np.array([1.0]))
                for i in range(n)]
    level = 0
    while len(clusters) > 2:
        m = len(clusters)
        w = np.zeros((m, n))
        for i, cl in enumerate(clusters):
            w[i, cl.leaf_ids] = cl.weights
        corr = w @ expneg @ w.T
        dg = distorted_grid(corr, params)
        same, opp, n_pass, n_multi = four_point_tally(
            dg, params.delta, params.edge_min)
        iu, ju = np.triu_indices(m, 1)
        amask = (same[iu, ju] > 0) & (opp[iu, ju] == 0)
        allowed = [(int(i), int(j)) for i, j in zip(iu[amask], ju[amask])]
        conflicts = int(np.sum((same[iu, ju] > 0) & (opp[iu, ju] > 0)))
        try:
            pairs, greedy = _match_cherries(allowed, dg, m)
        except ReconstructionFailure as exc:
            exc.diagnostics = {"level": level, "size": m,
                               "levels": [lv.as_dict() for lv in levels]}
            raise
        levels.append(LevelReport(
            level=level, size=m, passing_splits=n_pass,
            multi_pass_quartets=n_multi, conflict_pairs=conflicts,
            allowed_pairs=len(allowed), cherries=len(pairs),
            used_greedy_matching=greedy))
        new_clusters = []
        for i, j in pairs:
            witness = None
            for t in sorted(range(m), key=lambda t: clusters[t].label):
                if t in (i, j):
                    continue
                if dg[i, t] < INF_GRID and dg[j, t] < INF_GRID:
                    witness = t
                    break
            if witness is None:
                raise ReconstructionFailure(
                    f"no witness within radius for cherry "
                    f"({clusters[i].label}, {clusters[j].label})",
                    diagnostics={"level": level, "size": m,
                                 "levels": [lv.as_dict() for lv in levels]})
            num_i = int(dg[i, j]) + int(dg[i, witness]) - int(dg[j, witness])
            num_j = int(dg[i, j]) + int(dg[j, witness]) - int(dg[i, witness])
            theta_i = math.exp(-(params.delta * num_i) / 2.0)
            theta_j = math.exp(-(params.delta * num_j) / 2.0)
            ci, cj = clusters[i], clusters[j]
            clade_theta[frozenset(ci.leaf_ids.tolist())] = theta_i
            clade_theta[frozenset(cj.leaf_ids.tolist())] = theta_j
            clade_grid[frozenset(ci.leaf_ids.tolist())] = num_i
            clade_grid[frozenset(cj.leaf_ids.tolist())] = num_j
            node = next_id
            next_id += 1
            out_parent[ci.node] = node
            out_parent[cj.node] = node
            new_clusters.append(_Cluster(
                node,
                np.concatenate([ci.leaf_ids, cj.leaf_ids]),
                np.concatenate([(0.5 / theta_i) * ci.weights,
                                (0.5 / theta_j) * cj.weights])))
        clusters = sorted(new_clusters, key=lambda c: c.label)
        level += 1
    root = next_id
    out_parent[clusters[0].node] = root
    out_parent[clusters[1].node] = root
    topology = topology_from_parents(out_parent, n)
    return HomogeneousResult(topology=topology, parent=out_parent,
                             clade_theta=clade_theta,
                             clade_grid_length=clade_grid, levels=levels)
