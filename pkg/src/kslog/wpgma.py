"""Agglomerative clustering on uncorrected distances under a molecular
clock: repeatedly merge the closest cluster pair and average the merged
row into the table.

Every cluster carries implicit per-leaf weights halving at each merge, so
the maintained table always equals the leaf-weighted average of the
pairwise uncorrected estimates; correctness under the clock follows from
that averaging, and no branch-length discretization is needed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from kslog.homogeneous import topology_from_parents
from kslog.trees import UnrootedTopology

__all__ = ["ClockResult", "wpgma", "cluster_average"]


@dataclass
class ClockResult:
    """Merge tree of the clustering: leaves 0..n-1, internal ids n..2n-2
    in merge order, root last. Heights are the table values at merge time
    (diagnostic only)."""

    parent: np.ndarray
    n_leaves: int
    heights: dict = field(default_factory=dict)
    merge_order: list = field(default_factory=list)

    def topology(self) -> UnrootedTopology:
        return topology_from_parents(self.parent, self.n_leaves)

    def newick_with_heights(self) -> str:
        """Rooted Newick with branch annotations height(parent)-height(child)."""
        v = self.parent.shape[0]
        kids: list[list[int]] = [[] for _ in range(v)]
        root = -1
        for i in range(v):
            p = int(self.parent[i])
            if p < 0:
                root = i
            else:
                kids[p].append(i)

        def height(u):
            return self.heights.get(u, 0.0)

        def min_leaf(u):
            return u if u < self.n_leaves else min(min_leaf(c) for c in kids[u])

        def render(u):
            if not kids[u]:
                return str(u)
            parts = sorted(kids[u], key=min_leaf)
            return "(" + ",".join(
                f"{render(c)}:{height(u) - height(c):.6g}" for c in parts) + ")"

        return render(root) + ";"


def wpgma(table: np.ndarray) -> ClockResult:
    """Cluster a symmetric finite distance table by repeated merging.

    Selection takes the minimum table entry, ties broken lexicographically
    on the clusters' smallest leaf labels; the merged row is the plain
    average of the two parents' rows.
    """
    d0 = np.asarray(table, dtype=np.float64)
    n = d0.shape[0]
    if n < 2 or d0.shape != (n, n):
        raise ValueError("table must be square with at least 2 leaves")
    if not np.all(np.isfinite(d0)):
        raise ValueError("uncorrected distances must be finite")
    size = 2 * n - 1
    dist = np.full((size, size), np.nan)
    dist[:n, :n] = d0
    parent = np.full(size, -1, dtype=np.int32)
    min_label = np.arange(size, dtype=np.int64)
    active = list(range(n))
    heights: dict[int, float] = {}
    order = []
    for step in range(n - 1):
        best = None
        for ii in range(len(active)):
            for jj in range(ii + 1, len(active)):
                a, b = active[ii], active[jj]
                la, lb = int(min_label[a]), int(min_label[b])
                if la > lb:
                    a, b = b, a
                    la, lb = lb, la
                key = (float(dist[a, b]), la, lb)
                if best is None or key < best[0]:
                    best = (key, a, b)
        (_, _, _), a, b = best
        node = n + step
        parent[a] = node
        parent[b] = node
        heights[node] = float(dist[a, b])
        order.append((int(min_label[a]), int(min_label[b])))
        min_label[node] = min(min_label[a], min_label[b])
        active = [x for x in active if x not in (a, b)]
        for c in active:
            dist[c, node] = dist[node, c] = 0.5 * (dist[c, a] + dist[c, b])
        active.append(node)
    return ClockResult(parent=parent, n_leaves=n, heights=heights,
                       merge_order=order)


def cluster_average(table: np.ndarray, leaves_a, leaves_b,
                    depth_a, depth_b) -> float:
    """Leaf-weighted cluster distance: weights 2**(-merge depth) per leaf.

    This is the from-scratch form of the quantity the merge loop maintains
    incrementally; tests compare the two.
    """
    total = 0.0
    for a, da in zip(leaves_a, depth_a):
        for b, db in zip(leaves_b, depth_b):
            total += 2.0 ** (-da) * 2.0 ** (-db) * float(table[a, b])
    return total
