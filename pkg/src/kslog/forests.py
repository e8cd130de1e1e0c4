"""Distance computation between edge-disjoint rooted subtrees and a greedy
forest-merging driver for general trees.

The core primitive computes the grid distance between two subtree roots by
running the averaging estimator between all four pairs of their children
and insisting the four candidate values agree exactly on the grid; any
disagreement (the signature of a non-dangling configuration) yields an
infinite estimate rather than a wrong one.

The driver grows a forest from singleton leaves, merging the closest
never-contradicted root pair each round. It is a best-effort companion to
the exact primitive: correct whenever every merge presents a dangling
configuration (all balanced instances qualify), and failing loudly with
the surviving forest otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kslog._kernels import INF_GRID, four_point_tally
from kslog.averaging import GridParams, grid_index
from kslog.errors import ReconstructionFailure
from kslog.homogeneous import topology_from_parents
from kslog.trees import Phylogeny, UnrootedTopology

__all__ = ["Subtree", "BasicDisjointSetup", "distorted_metric_routine",
           "forest_reconstruct", "ForestResult", "subtree_from_vertex",
           "subtree_from_leaves"]


@dataclass(frozen=True)
class Subtree:
    """A reconstructed rooted subtree: averaging weights over its leaves
    and grid lengths of the two edges below its root."""

    node: int
    leaf_ids: np.ndarray
    weights: np.ndarray
    children: tuple = ()            # (Subtree, Subtree) or () for a leaf
    child_grid_len: tuple = ()      # edge lengths root->child, in grid units

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def label(self) -> int:
        return int(self.leaf_ids.min())

    def root_children(self):
        """(y, z) with their root-edge grid lengths; a leaf is its own
        child pair with zero-length edges."""
        if self.is_leaf:
            return ((self, 0), (self, 0))
        return ((self.children[0], self.child_grid_len[0]),
                (self.children[1], self.child_grid_len[1]))


@dataclass(frozen=True)
class BasicDisjointSetup:
    """Two edge-disjoint rooted subtrees with known internal edge lengths."""

    t1: Subtree
    t2: Subtree

    def __post_init__(self):
        if set(self.t1.leaf_ids.tolist()) & set(self.t2.leaf_ids.tolist()):
            raise ValueError("subtrees share leaves")


def _pair_distance_grid(table, a: Subtree, b: Subtree,
                        params: GridParams) -> int:
    """Grid index of the distorted averaged distance between two subtree
    roots, INF_GRID when saturated or out of radius."""
    expneg = table.expneg if hasattr(table, "expneg") else np.asarray(table)
    raw = float(a.weights @ expneg[np.ix_(a.leaf_ids, b.leaf_ids)] @ b.weights)
    if raw <= 0.0:
        return INF_GRID
    m = max(0, grid_index(-math.log(raw), params.delta))
    if m * params.delta <= params.sd_limit + 1e-12:
        return m
    return INF_GRID


def distorted_metric_routine(setup: BasicDisjointSetup, params: GridParams,
                             table=None, dbar_fn=None) -> int:
    """Grid distance between the two subtree roots, or INF_GRID.

    For every child pair (a, b), computes the averaged grid distance minus
    the known root-edge lengths; returns the common value only when all
    four agree exactly on the grid. ``dbar_fn(a, b) -> grid index`` may
    replace the table-driven distance (used to exercise the agreement test
    directly).
    """
    if dbar_fn is None:
        if table is None:
            raise ValueError("need a distance table or an injected metric")
        def dbar_fn(a, b):
            return _pair_distance_grid(table, a, b, params)
    values = []
    for a, la in setup.t1.root_children():
        for b, lb in setup.t2.root_children():
            d = dbar_fn(a, b)
            if d >= INF_GRID:
                return INF_GRID
            values.append((int(d) - la - lb, a is setup.t1.root_children()[1][0]
                           and b is setup.t2.root_children()[1][0]))
    if any(v != values[0][0] for v, _ in values):
        return INF_GRID
    return values[-1][0]


@dataclass
class RoundReport:
    size: int
    finite_pairs: int
    forbidden_pairs: int
    merged: tuple
    supported: bool

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class ForestResult:
    topology: UnrootedTopology
    parent: np.ndarray
    rounds: list = field(default_factory=list)

    def diagnostics(self):
        return {"rounds": [r.as_dict() for r in self.rounds]}


def forest_reconstruct(table, params: GridParams) -> ForestResult:
    """Greedy forest growth over the distance table.

    Each round scores every root pair with the agreement-tested distance,
    vetoes pairs separated by any passing four-point split among the roots,
    and merges the closest surviving pair (co-occurring pairs first, ties
    by leaf labels). Fails loudly when nothing is mergeable.
    """
    n = table.n
    if n < 4:
        raise ValueError("need at least 4 leaves")
    out_parent = np.full(2 * n - 1, -1, dtype=np.int32)
    next_id = n
    roots = [Subtree(i, np.array([i], dtype=np.int64), np.array([1.0]))
             for i in range(n)]
    rounds: list[RoundReport] = []
    while len(roots) > 2:
        m = len(roots)
        ug = np.full((m, m), INF_GRID, dtype=np.int64)
        for i in range(m):
            for j in range(i + 1, m):
                v = distorted_metric_routine(
                    BasicDisjointSetup(roots[i], roots[j]), params, table)
                ug[i, j] = ug[j, i] = v
        if m >= 4:
            same, opp, _, _ = four_point_tally(ug, params.delta, params.edge_min)
        else:
            same = np.zeros((m, m), dtype=np.int64)
            opp = np.zeros((m, m), dtype=np.int64)
        candidates = []
        for i in range(m):
            for j in range(i + 1, m):
                if ug[i, j] < INF_GRID and opp[i, j] == 0:
                    candidates.append((same[i, j] == 0, int(ug[i, j]),
                                       roots[i].label, roots[j].label, i, j))
        if not candidates:
            raise ReconstructionFailure(
                f"no mergeable root pair among {m} roots",
                diagnostics={"surviving_roots": [
                    sorted(r.leaf_ids.tolist()) for r in roots],
                    "rounds": [r.as_dict() for r in rounds]})
        candidates.sort()
        unsupported, _, _, _, i, j = candidates[0]
        ri, rj = roots[i], roots[j]
        if m >= 4:
            witness = None
            for t in sorted(range(m), key=lambda t: roots[t].label):
                if t in (i, j):
                    continue
                if ug[i, t] < INF_GRID and ug[j, t] < INF_GRID:
                    witness = t
                    break
            if witness is None:
                raise ReconstructionFailure(
                    f"no witness within radius to weight the merge of "
                    f"({ri.label}, {rj.label})",
                    diagnostics={"surviving_roots": [
                        sorted(r.leaf_ids.tolist()) for r in roots],
                        "rounds": [r.as_dict() for r in rounds]})
            num_i = int(ug[i, j]) + int(ug[i, witness]) - int(ug[j, witness])
            num_j = int(ug[i, j]) + int(ug[j, witness]) - int(ug[i, witness])
            theta_i = math.exp(-(params.delta * num_i) / 2.0)
            theta_j = math.exp(-(params.delta * num_j) / 2.0)
            len_i = math.floor(num_i / 2.0 + 0.5)
            len_j = math.floor(num_j / 2.0 + 0.5)
        else:
            # the merged subtree only takes part in the final join, where
            # no further distances are computed
            theta_i = theta_j = 1.0
            len_i = len_j = 0
        node = next_id
        next_id += 1
        out_parent[ri.node] = node
        out_parent[rj.node] = node
        merged = Subtree(
            node,
            np.concatenate([ri.leaf_ids, rj.leaf_ids]),
            np.concatenate([(0.5 / theta_i) * ri.weights,
                            (0.5 / theta_j) * rj.weights]),
            children=(ri, rj), child_grid_len=(len_i, len_j))
        rounds.append(RoundReport(
            size=m, finite_pairs=int(np.sum(ug[np.triu_indices(m, 1)] < INF_GRID)),
            forbidden_pairs=int(np.sum(opp[np.triu_indices(m, 1)] > 0)),
            merged=(ri.label, rj.label), supported=not unsupported))
        roots = sorted([r for t, r in enumerate(roots) if t not in (i, j)]
                       + [merged], key=lambda r: r.label)
    root = next_id
    out_parent[roots[0].node] = root
    out_parent[roots[1].node] = root
    return ForestResult(topology=topology_from_parents(out_parent, n),
                        parent=out_parent, rounds=rounds)


# ----------------------------------------------------------------------
# Builders over a known tree (oracle setups for the routine's tests)
# ----------------------------------------------------------------------

def subtree_from_vertex(tree: Phylogeny, v: int,
                        delta: float) -> Subtree:
    """The full subtree of the host below v, with exact averaging weights
    and exact grid edge lengths."""
    metric = tree.tree_metric()

    def build(u):
        if not tree.children[u]:
            return Subtree(u, np.array([u], dtype=np.int64), np.array([1.0]))
        c1, c2 = tree.children[u]
        s1, s2 = build(c1), build(c2)
        th1 = math.exp(-float(tree.edge_length[c1]))
        th2 = math.exp(-float(tree.edge_length[c2]))
        return Subtree(
            u, np.concatenate([s1.leaf_ids, s2.leaf_ids]),
            np.concatenate([(0.5 / th1) * s1.weights,
                            (0.5 / th2) * s2.weights]),
            children=(s1, s2),
            child_grid_len=(grid_index(float(tree.edge_length[c1]), delta),
                            grid_index(float(tree.edge_length[c2]), delta)))

    _ = metric
    return build(v)


def subtree_from_leaves(tree: Phylogeny, leaves, delta: float) -> Subtree:
    """Restriction of the host to a leaf subset, rooted at the meeting
    vertex, with exact weights (contracted edges get summed lengths)."""
    metric = tree.tree_metric()
    leaves = sorted(int(x) for x in leaves)

    def lca(group):
        anc = None
        for leaf in group:
            chain = []
            x = leaf
            while x >= 0:
                chain.append(x)
                x = int(tree.parent[x])
            s = set(chain)
            anc = s if anc is None else (anc & s)
        best, depth = None, -1
        for x in anc:
            d = 0
            y = x
            while tree.parent[y] >= 0:
                y = int(tree.parent[y])
                d += 1
            if d > depth:
                best, depth = x, d
        return best

    def build(group):
        if len(group) == 1:
            leaf = group[0]
            return Subtree(leaf, np.array([leaf], dtype=np.int64),
                           np.array([1.0]))
        r = lca(group)
        g1 = [x for x in group
              if tree.children[r][0] in tree.path_vertices(r, x)]
        g2 = [x for x in group if x not in g1]
        s1, s2 = build(g1), build(g2)
        t1 = float(metric[r, s1.node])
        t2 = float(metric[r, s2.node])
        th1, th2 = math.exp(-t1), math.exp(-t2)
        return Subtree(
            r, np.concatenate([s1.leaf_ids, s2.leaf_ids]),
            np.concatenate([(0.5 / th1) * s1.weights,
                            (0.5 / th2) * s2.weights]),
            children=(s1, s2),
            child_grid_len=(grid_index(t1, delta), grid_index(t2, delta)))

    return build(leaves)
