"""Rooted and unrooted binary trees: metrics, Newick I/O, restriction,
subtree predicates, and Robinson-Foulds comparison.

Vertex id conventions used throughout the package:

* leaves carry ids ``0 .. n-1``, equal to their labels;
* internal vertices carry ids ``n .. 2n-2`` (rooted) or ``n .. 2n-3``
  (unrooted);
* a rooted tree's edge is identified by the id of its child vertex.

Instances are immutable after construction and safe to share across
threads; every operation below is a pure query.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Phylogeny",
    "UnrootedTopology",
    "RestrictedTree",
    "rf_distance",
    "steiner_edges",
    "restrict",
    "edge_disjoint",
    "dangling",
    "homogeneous_phylogeny",
    "homogeneous_level_sets",
    "random_grid_phylogeny",
    "ultrametric_from_depths",
    "random_ultrametric_phylogeny",
]

# Depth grid for ultrametric construction: dyadic depths make every path sum
# exact in double precision, so the equidistance check can require spread 0.
_DEPTH_QUANTUM = 2.0**-20


class Phylogeny:
    """A rooted, edge-weighted, full binary tree with leaves ``0..n-1``.

    Internal vertices have degree 3 except the root, which has degree 2.
    Edge lengths are positive reals in expected-substitution units.
    """

    __slots__ = ("n_leaves", "parent", "edge_length", "children", "root",
                 "_metric", "_below")

    def __init__(self, parent, edge_length, n_leaves, validate=True):
        parent = np.asarray(parent, dtype=np.int32)
        edge_length = np.asarray(edge_length, dtype=np.float64)
        self.n_leaves = int(n_leaves)
        self.parent = parent
        self.edge_length = edge_length
        v = parent.shape[0]
        kids: list[list[int]] = [[] for _ in range(v)]
        root = -1
        for i in range(v):
            p = int(parent[i])
            if p < 0:
                if root >= 0:
                    raise ValueError("tree has more than one root")
                root = i
            else:
                kids[p].append(i)
        if root < 0:
            raise ValueError("tree has no root")
        self.root = root
        self.children = tuple(tuple(c) for c in kids)
        self._metric = None
        self._below = None
        if validate:
            self._validate()
        parent.setflags(write=False)
        edge_length.setflags(write=False)

    def _validate(self):
        n, v = self.n_leaves, self.parent.shape[0]
        if self.n_leaves == 1:
            if v != 1:
                raise ValueError("a 1-leaf tree must be a single vertex")
            return
        if v != 2 * n - 1:
            raise ValueError(f"expected {2 * n - 1} vertices, got {v}")
        for i in range(v):
            deg = len(self.children[i])
            if i < n:
                if deg != 0:
                    raise ValueError(f"leaf {i} has children")
            elif i == self.root:
                if deg != 2:
                    raise ValueError("root must have exactly 2 children")
            elif deg != 2:
                raise ValueError(f"internal vertex {i} must have 2 children")
        for i in range(v):
            if i != self.root and not self.edge_length[i] > 0.0:
                raise ValueError(f"edge above vertex {i} must have positive length")

    # ------------------------------------------------------------------
    # basic queries
    # ------------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.parent.shape[0]

    def topo_order(self):
        """Vertex ids, root first, every parent before its children."""
        order = [self.root]
        i = 0
        while i < len(order):
            order.extend(self.children[order[i]])
            i += 1
        return order

    def leaves_below(self, v: int) -> tuple[int, ...]:
        if self._below is None:
            below: list[tuple[int, ...] | None] = [None] * self.n_vertices
            for u in reversed(self.topo_order()):
                if not self.children[u]:
                    below[u] = (u,)
                else:
                    acc: list[int] = []
                    for c in self.children[u]:
                        acc.extend(below[c])  # type: ignore[arg-type]
                    below[u] = tuple(sorted(acc))
            self._below = tuple(below)  # type: ignore[assignment]
        return self._below[v]  # type: ignore[index]

    def adjacency(self):
        """Undirected weighted adjacency: vertex -> list of (neighbor, length)."""
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n_vertices)]
        for i in range(self.n_vertices):
            p = int(self.parent[i])
            if p >= 0:
                w = float(self.edge_length[i])
                adj[i].append((p, w))
                adj[p].append((i, w))
        return adj

    def tree_metric(self) -> np.ndarray:
        """Matrix of path lengths between all vertex pairs.

        Symmetric with a zero diagonal; additive along paths.
        """
        if self._metric is None:
            v = self.n_vertices
            adj = self.adjacency()
            out = np.zeros((v, v), dtype=np.float64)
            for s in range(v):
                dist = out[s]
                stack = [s]
                seen = [False] * v
                seen[s] = True
                while stack:
                    u = stack.pop()
                    for w, length in adj[u]:
                        if not seen[w]:
                            seen[w] = True
                            dist[w] = dist[u] + length
                            stack.append(w)
            out.setflags(write=False)
            self._metric = out
        return self._metric

    def leaf_metric(self) -> np.ndarray:
        return self.tree_metric()[: self.n_leaves, : self.n_leaves]

    def path_vertices(self, u: int, v: int) -> list[int]:
        """Vertices on the path from u to v, inclusive."""
        up_u, up_v = [u], [v]
        anc_u = {u}
        x = u
        while self.parent[x] >= 0:
            x = int(self.parent[x])
            up_u.append(x)
            anc_u.add(x)
        x = v
        while x not in anc_u:
            x = int(self.parent[x])
            up_v.append(x)
        meet = up_v[-1]
        return up_u[: up_u.index(meet) + 1] + up_v[-2::-1]

    def path_edges(self, u: int, v: int) -> frozenset[int]:
        """Edge ids (child-vertex ids) on the path from u to v."""
        verts = self.path_vertices(u, v)
        edges = set()
        for a, b in zip(verts, verts[1:]):
            edges.add(b if self.parent[b] == a else a)
        return frozenset(edges)

    def meeting_point(self, a: int, b: int, c: int) -> int:
        """The single vertex common to the three pairwise paths."""
        common = (set(self.path_vertices(a, b))
                  & set(self.path_vertices(a, c))
                  & set(self.path_vertices(b, c)))
        if len(common) != 1:
            raise ValueError("degenerate meeting point")
        return next(iter(common))

    def path_weight(self, u: int, v: int) -> float:
        """exp(-path length) between two vertices."""
        return math.exp(-float(self.tree_metric()[u, v]))

    # ------------------------------------------------------------------
    # validation helpers
    # ------------------------------------------------------------------

    def validate_grid(self, delta: float, edge_min: float, edge_max: float,
                      tol: float = 1e-9):
        """Check every edge is a grid multiple of delta inside [edge_min, edge_max]."""
        for i in range(self.n_vertices):
            if i == self.root:
                continue
            t = float(self.edge_length[i])
            m = round(t / delta)
            if abs(t - m * delta) > tol:
                raise ValueError(f"edge above {i} ({t}) is not a multiple of {delta}")
            if t < edge_min - tol or t > edge_max + tol:
                raise ValueError(f"edge above {i} ({t}) outside [{edge_min}, {edge_max}]")

    def is_ultrametric(self, tol: float = 0.0) -> bool:
        """True if every vertex is equidistant from all of its descendant leaves."""
        metric = self.tree_metric()
        for v in range(self.n_vertices):
            leaves = self.leaves_below(v)
            d = metric[v, list(leaves)]
            if d.max() - d.min() > tol:
                return False
        return True

    # ------------------------------------------------------------------
    # conversions
    # ------------------------------------------------------------------

    def unrooted(self) -> "UnrootedTopology":
        """Drop the root, fusing its two incident edges into one."""
        n = self.n_leaves
        if n < 3:
            raise ValueError("unrooted topology needs at least 3 leaves")
        c1, c2 = self.children[self.root]
        edges = []
        for i in range(self.n_vertices):
            p = int(self.parent[i])
            if p >= 0 and p != self.root:
                edges.append((i, p))
        edges.append((c1, c2))
        # reindex internal vertices (root disappears) to n..2n-3
        keep = [i for i in range(self.n_vertices) if i != self.root]
        remap = {}
        nxt = n
        for i in keep:
            if i < n:
                remap[i] = i
            else:
                remap[i] = nxt
                nxt += 1
        return UnrootedTopology(n, [(remap[a], remap[b]) for a, b in edges])

    def newick(self) -> str:
        """Canonical Newick string: children ordered by smallest descendant leaf."""
        def render(v):
            if not self.children[v]:
                return str(v)
            parts = sorted(self.children[v], key=lambda c: self.leaves_below(c)[0])
            inner = ",".join(
                f"{render(c)}:{float(self.edge_length[c])!r}" for c in parts)
            return f"({inner})"
        return render(self.root) + ";"

    @classmethod
    def from_newick(cls, text: str) -> "Phylogeny":
        labels, lengths, kids = _parse_newick(text, lengths_required=True)
        return _rooted_from_parsed(labels, lengths, kids)

    def __eq__(self, other):
        if not isinstance(other, Phylogeny):
            return NotImplemented
        return self.newick() == other.newick()

    def __hash__(self):
        return hash(self.newick())

    def __repr__(self):
        return f"Phylogeny(n_leaves={self.n_leaves})"


class UnrootedTopology:
    """Unrooted leaf-labeled binary tree without edge lengths.

    All internal vertices have degree exactly 3.
    """

    __slots__ = ("n_leaves", "adjacency", "_splits")

    def __init__(self, n_leaves: int, edges):
        self.n_leaves = int(n_leaves)
        v = max(max(a, b) for a, b in edges) + 1
        adj: list[list[int]] = [[] for _ in range(v)]
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        self.adjacency = tuple(tuple(sorted(x)) for x in adj)
        self._splits = None
        for i in range(v):
            deg = len(self.adjacency[i])
            if i < self.n_leaves:
                if deg != 1:
                    raise ValueError(f"leaf {i} must have degree 1, has {deg}")
            elif deg != 3:
                raise ValueError(f"internal vertex {i} must have degree 3, has {deg}")

    @property
    def n_vertices(self) -> int:
        return len(self.adjacency)

    def splits(self) -> frozenset[frozenset[int]]:
        """Nontrivial bipartitions, each named by the side not containing leaf 0."""
        if self._splits is not None:
            return self._splits
        out = set()
        for a in range(self.n_vertices):
            for b in self.adjacency[a]:
                if a < self.n_leaves or b < self.n_leaves or a > b:
                    continue
                side = self._component(b, without=a)
                if 0 in side:
                    side = frozenset(range(self.n_leaves)) - side
                if 2 <= len(side) <= self.n_leaves - 2:
                    out.add(side)
        self._splits = frozenset(out)
        return self._splits

    def _component(self, start: int, without: int) -> frozenset[int]:
        seen = {start, without}
        stack = [start]
        leaves = set()
        while stack:
            u = stack.pop()
            if u < self.n_leaves:
                leaves.add(u)
            for w in self.adjacency[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return frozenset(leaves)

    def newick(self) -> str:
        """Canonical Newick: rooted for display at leaf 0's neighbor."""
        hub = self.adjacency[0][0]

        def render(v, come_from):
            nbrs = [w for w in self.adjacency[v] if w != come_from]
            if not nbrs:
                return str(v), v
            parts = [render(w, v) for w in nbrs]
            parts.sort(key=lambda t: t[1])
            return "(" + ",".join(p[0] for p in parts) + ")", min(p[1] for p in parts)

        subs = [render(w, hub) for w in self.adjacency[hub]]
        subs.sort(key=lambda t: t[1])
        return "(" + ",".join(p[0] for p in subs) + ");"

    @classmethod
    def from_newick(cls, text: str) -> "UnrootedTopology":
        labels, lengths, kids = _parse_newick(text, lengths_required=False)
        return _unrooted_from_parsed(labels, kids)

    def __eq__(self, other):
        if not isinstance(other, UnrootedTopology):
            return NotImplemented
        return (self.n_leaves == other.n_leaves
                and self.splits() == other.splits())

    def __hash__(self):
        return hash((self.n_leaves, self.splits()))

    def __repr__(self):
        return f"UnrootedTopology(n_leaves={self.n_leaves})"


def rf_distance(t1: UnrootedTopology, t2: UnrootedTopology) -> int:
    """Robinson-Foulds distance: symmetric difference of nontrivial splits."""
    if t1.n_leaves != t2.n_leaves:
        raise ValueError("topologies have different leaf sets")
    return len(t1.splits() ^ t2.splits())


# ----------------------------------------------------------------------
# Newick parsing
# ----------------------------------------------------------------------

def _parse_newick(text: str, lengths_required: bool):
    """Parse to (labels, lengths, children) over parser node ids.

    Leaf labels must be the integers 0..n-1. Raises ValueError with the
    offending position on malformed input.
    """
    s = text.strip()
    if not s.endswith(";"):
        raise ValueError("Newick string must end with ';'")
    s = s[:-1]
    pos = 0
    labels: list[int | None] = []
    lengths: list[float | None] = []
    kids: list[list[int]] = []

    def fail(msg):
        raise ValueError(f"Newick parse error at position {pos}: {msg}")

    def new_node():
        labels.append(None)
        lengths.append(None)
        kids.append([])
        return len(labels) - 1

    def parse_clade():
        nonlocal pos
        node = new_node()
        if pos < len(s) and s[pos] == "(":
            pos += 1
            while True:
                kids[node].append(parse_clade())
                if pos >= len(s):
                    fail("unbalanced parentheses")
                if s[pos] == ",":
                    pos += 1
                    continue
                if s[pos] == ")":
                    pos += 1
                    break
                fail(f"unexpected character {s[pos]!r}")
        else:
            start = pos
            while pos < len(s) and s[pos] not in ",():;":
                pos += 1
            token = s[start:pos].strip()
            if not token:
                fail("empty leaf label")
            try:
                labels[node] = int(token)
            except ValueError:
                fail(f"leaf label {token!r} is not an integer")
        if pos < len(s) and s[pos] == ":":
            pos += 1
            start = pos
            while pos < len(s) and s[pos] not in ",()":
                pos += 1
            try:
                lengths[node] = float(s[start:pos])
            except ValueError:
                fail(f"bad branch length {s[start:pos]!r}")
        elif lengths_required and node != 0:
            fail("missing branch length")
        return node

    root = parse_clade()
    if pos != len(s):
        fail("trailing characters")
    if root != 0:
        raise AssertionError
    return labels, lengths, kids


def _rooted_from_parsed(labels, lengths, kids):
    n_leaves = sum(1 for k in kids if not k)
    leaf_seen = set()
    for i, k in enumerate(kids):
        if not k:
            lab = labels[i]
            if lab is None or not 0 <= lab < n_leaves or lab in leaf_seen:
                raise ValueError("leaf labels must be a bijection with 0..n-1")
            leaf_seen.add(lab)
        elif len(k) != 2:
            raise ValueError("rooted tree vertices must have exactly 2 children")
    v = 2 * n_leaves - 1
    parent = np.full(v, -1, dtype=np.int32)
    elen = np.full(v, np.nan, dtype=np.float64)
    next_internal = [n_leaves]

    def assign(node):
        if not kids[node]:
            return labels[node]
        vid = next_internal[0]
        next_internal[0] += 1
        for c in kids[node]:
            cid = assign(c)
            parent[cid] = vid
            elen[cid] = lengths[c] if lengths[c] is not None else np.nan
        return vid

    assign(0)
    return Phylogeny(parent, elen, n_leaves)


def _unrooted_from_parsed(labels, kids):
    n_leaves = sum(1 for k in kids if not k)
    leaf_seen = set()
    for i, k in enumerate(kids):
        if not k:
            lab = labels[i]
            if lab is None or not 0 <= lab < n_leaves or lab in leaf_seen:
                raise ValueError("leaf labels must be a bijection with 0..n-1")
            leaf_seen.add(lab)
    # Accept either an explicit trifurcation at the outermost level or a
    # rooted (binary) string, which gets its root suppressed.
    ids = {}
    next_internal = [n_leaves]
    edges = []

    def assign(node):
        if not kids[node]:
            ids[node] = labels[node]
        else:
            ids[node] = next_internal[0]
            next_internal[0] += 1
        for c in kids[node]:
            assign(c)
            edges.append((ids[node], ids[c]))

    top = kids[0]
    if len(top) == 3:
        assign(0)
    elif len(top) == 2:
        assign(0)
        rid = ids[0]
        nbrs = [b for a, b in edges if a == rid] + [a for a, b in edges if b == rid]
        edges = [(a, b) for a, b in edges if a != rid and b != rid]
        edges.append((nbrs[0], nbrs[1]))
        # compact ids above the removed root
        remap = {}
        nxt = n_leaves
        for a, b in edges:
            for x in (a, b):
                if x >= n_leaves and x not in remap:
                    remap[x] = nxt
                    nxt += 1
        edges = [(remap.get(a, a), remap.get(b, b)) for a, b in edges]
    else:
        raise ValueError("outermost group must have 2 or 3 children")
    return UnrootedTopology(n_leaves, edges)


# ----------------------------------------------------------------------
# Restriction, disjointness, dangling
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RestrictedTree:
    """A restricted subtree: paths between kept vertices, degree-2 chains
    contracted. Vertices keep their ids from the host tree."""

    vertices: frozenset[int]
    edges: frozenset[frozenset[int]]          # contracted edges, as vertex pairs
    lengths: dict                             # frozenset pair -> path length
    underlying: frozenset[int]                # host-tree edge ids covered
    root: int | None = None

    def neighbors(self, v: int):
        return sorted(x for e in self.edges for x in e if v in e and x != v)

    def children_of(self, v: int, come_from=None):
        return [x for x in self.neighbors(v) if x != come_from]

    def leaf_set(self) -> frozenset[int]:
        deg = {v: 0 for v in self.vertices}
        for e in self.edges:
            for x in e:
                deg[x] += 1
        return frozenset(v for v, d in deg.items() if d <= 1 and v != self.root)


def steiner_edges(tree: Phylogeny, vertices) -> frozenset[int]:
    """Host-tree edge ids on paths between any two of the given vertices.

    In a tree the minimal connecting subtree is the union of paths from any
    one anchor to the rest.
    """
    verts = list(vertices)
    if not verts:
        raise ValueError("vertex set must be nonempty")
    out: set[int] = set()
    for i in range(1, len(verts)):
        out |= tree.path_edges(verts[0], verts[i])
    return frozenset(out)


def restrict(tree: Phylogeny, vertices, root: int | None = None) -> RestrictedTree:
    """Subtree of the host restricted to ``vertices``.

    Keeps vertices on connecting paths, then contracts degree-2 chains
    except at kept vertices. Restricting twice equals restricting once.
    """
    verts = sorted(set(int(v) for v in vertices))
    if not verts:
        raise ValueError("vertex set must be nonempty")
    if root is not None and root not in verts:
        verts.append(root)
    sedges = steiner_edges(tree, verts) if len(verts) > 1 else frozenset()
    metric = tree.tree_metric()
    # induced graph on the steiner edges
    adj: dict[int, set[int]] = {v: set() for v in verts}
    for e in sedges:
        a, b = int(e), int(tree.parent[e])
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    keep = set(verts)
    nodes = set(adj)
    # contract: a vertex survives if kept or degree != 2
    survivors = {v for v in nodes if v in keep or len(adj[v]) != 2}
    edges = set()
    lengths = {}
    done = set()
    for v in survivors:
        for nb in adj[v]:
            if (v, nb) in done:
                continue
            prev, cur = v, nb
            while cur not in survivors:
                nxt = next(x for x in adj[cur] if x != prev)
                prev, cur = cur, nxt
            pair = frozenset((v, cur))
            done.add((prev, cur))
            done.add((nb, v))
            if v != cur and pair not in edges:
                edges.add(pair)
                lengths[pair] = float(metric[v, cur])
    return RestrictedTree(frozenset(survivors), frozenset(edges), lengths,
                          sedges, root)


def edge_disjoint(tree: Phylogeny, leaves1, leaves2) -> bool:
    """True iff the leaf-path edge sets of the two subtrees do not intersect."""
    return not (steiner_edges(tree, leaves1) & steiner_edges(tree, leaves2))


def dangling(tree: Phylogeny, root1: int, leaves1, root2: int, leaves2) -> bool:
    """True iff some root placement outside both subtrees is consistent with
    both rootings: each given root separates the placement from its leaves.

    Candidates are vertices outside the subtrees' spans and midpoints of host
    edges outside both edge sets; the first witness found settles the
    predicate.
    """
    s1 = steiner_edges(tree, list(leaves1) + [root1])
    s2 = steiner_edges(tree, list(leaves2) + [root2])
    span1 = {root1, *leaves1}
    span2 = {root2, *leaves2}
    for e in s1:
        span1.update((int(e), int(tree.parent[e])))
    for e in s2:
        span2.update((int(e), int(tree.parent[e])))

    def consistent_from(v):
        for r, ls in ((root1, leaves1), (root2, leaves2)):
            for leaf in ls:
                if r not in tree.path_vertices(v, leaf):
                    return False
        return True

    for v in range(tree.n_vertices):
        if v in span1 or v in span2:
            continue
        if consistent_from(v):
            return True
    for e in range(tree.n_vertices):
        if e == tree.root or e in s1 or e in s2:
            continue
        a, b = e, int(tree.parent[e])
        # midpoint placement: the path to a leaf leaves via whichever
        # endpoint sits on the leaf's side of the edge
        ok = True
        for r, ls in ((root1, leaves1), (root2, leaves2)):
            for leaf in ls:
                pa = tree.path_vertices(a, leaf)
                path = pa if b not in pa else tree.path_vertices(b, leaf)
                if r not in path:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return True
    return False


# ----------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------

def homogeneous_phylogeny(h: int, edge_lengths) -> Phylogeny:
    """Complete binary tree with 2**h leaves.

    ``edge_lengths`` is a scalar, an array over non-root vertices, or a
    callable ``(vertex_id) -> length``.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    n = 2 ** h
    v = 2 * n - 1
    parent = np.full(v, -1, dtype=np.int32)
    # level by level: ids n .. 2n-2 above the leaves
    level = list(range(n))
    nxt = n
    while len(level) > 1:
        nxt_level = []
        for i in range(0, len(level), 2):
            parent[level[i]] = nxt
            parent[level[i + 1]] = nxt
            nxt_level.append(nxt)
            nxt += 1
        level = nxt_level
    elen = np.full(v, np.nan, dtype=np.float64)
    for i in range(v - 1):
        if callable(edge_lengths):
            elen[i] = edge_lengths(i)
        elif np.isscalar(edge_lengths):
            elen[i] = edge_lengths
        else:
            elen[i] = edge_lengths[i]
    return Phylogeny(parent, elen, n)


def homogeneous_level_sets(h: int) -> list[list[int]]:
    """Vertex ids at each height of the complete tree: level 0 is the
    leaves, level h is the root. Level j has 2**(h-j) vertices."""
    n = 2 ** h
    out = [list(range(n))]
    start = n
    size = n // 2
    while size >= 1:
        out.append(list(range(start, start + size)))
        start += size
        size //= 2
    return out


def random_grid_phylogeny(n: int, delta: float, edge_min: float,
                          edge_max: float, rng) -> Phylogeny:
    """Random rooted topology with edge lengths drawn uniformly from the
    multiples of delta inside [edge_min, edge_max]."""
    if n < 2:
        raise ValueError("need at least 2 leaves")
    lo = math.ceil(edge_min / delta - 1e-9)
    hi = math.floor(edge_max / delta + 1e-9)
    if lo > hi or lo < 1:
        raise ValueError("no grid multiples inside the edge-length range")
    v = 2 * n - 1
    parent = np.full(v, -1, dtype=np.int32)
    clusters = list(range(n))
    nxt = n
    while len(clusters) > 1:
        i = int(rng.integers(len(clusters)))
        a = clusters.pop(i)
        j = int(rng.integers(len(clusters)))
        b = clusters.pop(j)
        parent[a] = nxt
        parent[b] = nxt
        clusters.append(nxt)
        nxt += 1
    elen = np.full(v, np.nan, dtype=np.float64)
    ms = rng.integers(lo, hi + 1, size=v - 1)
    elen[: v - 1] = ms * delta
    return Phylogeny(parent, elen, n)


def ultrametric_from_depths(parent, n_leaves: int, depths) -> Phylogeny:
    """Clock tree from a rooted shape and per-vertex depths.

    Depths are snapped to a dyadic grid so path sums are exact; leaves must
    sit at depth 0 and every edge must come out strictly positive, else the
    assignment is inconsistent and rejected.
    """
    parent = np.asarray(parent, dtype=np.int32)
    depths = np.asarray(depths, dtype=np.float64)
    q = _DEPTH_QUANTUM
    snapped = np.round(depths / q) * q
    v = parent.shape[0]
    elen = np.full(v, np.nan, dtype=np.float64)
    for i in range(v):
        p = int(parent[i])
        if i < n_leaves and snapped[i] != 0.0:
            raise ValueError("leaves must sit at depth 0")
        if p >= 0:
            e = snapped[p] - snapped[i]
            if e <= 0.0:
                raise ValueError(
                    f"depths do not decrease toward the leaves at vertex {i}")
            elen[i] = e
    tree = Phylogeny(parent, elen, n_leaves)
    if not tree.is_ultrametric(tol=0.0):
        raise ValueError("depth assignment is not ultrametric")
    return tree


def random_ultrametric_phylogeny(n: int, edge_min: float, edge_max: float,
                                 rng, max_restarts: int = 1000) -> Phylogeny:
    """Random ultrametric tree with every edge length in [edge_min, edge_max].

    Depths are drawn on a dyadic grid so that path sums are exact in double
    precision and the equidistance invariant holds with zero tolerance.
    Merges pick a uniformly random feasible cluster pair; rare dead ends
    trigger a restart with fresh randomness.
    """
    if n < 2:
        raise ValueError("need at least 2 leaves")
    q = _DEPTH_QUANTUM
    for _ in range(max_restarts):
        v = 2 * n - 1
        parent = np.full(v, -1, dtype=np.int32)
        depth = np.zeros(v, dtype=np.float64)
        clusters = list(range(n))
        nxt = n
        ok = True
        while len(clusters) > 1:
            feasible = []
            for i in range(len(clusters)):
                for j in range(i + 1, len(clusters)):
                    a, b = clusters[i], clusters[j]
                    lo = max(depth[a], depth[b]) + edge_min
                    hi = min(depth[a], depth[b]) + edge_max
                    mlo = math.ceil(lo / q - 1e-9)
                    mhi = math.floor(hi / q + 1e-9)
                    if mlo <= mhi:
                        feasible.append((i, j, mlo, mhi))
            if not feasible:
                ok = False
                break
            i, j, mlo, mhi = feasible[int(rng.integers(len(feasible)))]
            b = clusters.pop(j)
            a = clusters.pop(i)
            parent[a] = nxt
            parent[b] = nxt
            depth[nxt] = int(rng.integers(mlo, mhi + 1)) * q
            clusters.append(nxt)
            nxt += 1
        if not ok:
            continue
        elen = np.full(v, np.nan, dtype=np.float64)
        for i in range(v):
            p = int(parent[i])
            if p >= 0:
                elen[i] = depth[p] - depth[i]
        tree = Phylogeny(parent, elen, n)
        if not tree.is_ultrametric(tol=0.0):
            raise AssertionError("ultrametric construction produced spread")
        return tree
    raise ValueError("could not build a feasible ultrametric tree")
