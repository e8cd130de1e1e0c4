import itertools

import numpy as np
import pytest

from kslog.trees import (Phylogeny, UnrootedTopology, rf_distance,
                         steiner_edges, restrict, edge_disjoint, dangling,
                         homogeneous_phylogeny, homogeneous_level_sets,
                         random_grid_phylogeny, random_ultrametric_phylogeny,
                         ultrametric_from_depths)

QUARTET = "((0:0.2,1:0.2):0.05,(2:0.2,3:0.2):0.05);"


def two_leaf(a=0.1, b=0.1):
    return Phylogeny([2, 2, -1], [a, b, np.nan], 2)


class TestTreeMetric:
    def test_two_leaf_path_sum(self):
        t = two_leaf()
        assert t.tree_metric()[0, 1] == pytest.approx(0.2, abs=1e-15)

    def test_zero_diagonal(self):
        t = Phylogeny.from_newick(QUARTET)
        m = t.tree_metric()
        assert np.all(np.diag(m) == 0.0)
        assert np.allclose(m, m.T)

    def test_quartet_hand_oracle(self):
        # pendant edges 0.2, internal path 0.1 split across the root
        t = Phylogeny.from_newick(QUARTET)
        m = t.leaf_metric()
        assert m[0, 2] == pytest.approx(0.5, abs=1e-12)
        assert m[0, 1] == pytest.approx(0.4, abs=1e-12)

    def test_additivity_through_meeting_point(self, rng):
        t = random_grid_phylogeny(10, 0.05, 0.1, 0.3, rng)
        m = t.tree_metric()
        for a, b, c in itertools.combinations(range(10), 3):
            z = t.meeting_point(a, b, c)
            assert m[a, b] == pytest.approx(m[a, z] + m[z, b], abs=1e-12)

    def test_four_point_condition(self, rng):
        t = random_grid_phylogeny(8, 0.05, 0.1, 0.3, rng)
        m = t.leaf_metric()
        for a, b, c, d in itertools.combinations(range(8), 4):
            sums = sorted([m[a, b] + m[c, d], m[a, c] + m[b, d],
                           m[a, d] + m[b, c]])
            assert sums[1] == pytest.approx(sums[2], abs=1e-9)
            assert sums[0] <= sums[1] + 1e-9


class TestHomogeneous:
    def test_level_set_sizes(self):
        h = 4
        levels = homogeneous_level_sets(h)
        for j, level in enumerate(levels):
            assert len(level) == 2 ** (h - j)
        assert levels[0] == list(range(16))
        assert levels[-1] == [2 ** (h + 1) - 2]

    def test_structure(self):
        t = homogeneous_phylogeny(3, 0.2)
        assert t.n_leaves == 8
        assert t.n_vertices == 15
        assert t.root == 14
        m = t.leaf_metric()
        assert m[0, 1] == pytest.approx(0.4)
        assert m[0, 7] == pytest.approx(6 * 0.2)


class TestNewick:
    def test_parse_quartet(self):
        t = Phylogeny.from_newick(QUARTET)
        assert t.n_leaves == 4
        assert t.unrooted().splits() == {frozenset({2, 3})}

    def test_round_trip_is_canonical(self):
        s = "((3:0.3,2:0.1):0.2,(1:0.1,0:0.25):0.1);"
        t = Phylogeny.from_newick(s)
        out = t.newick()
        assert out == Phylogeny.from_newick(out).newick()
        # canonical form orders children by smallest descendant leaf
        assert out.index("0:") < out.index("2:")

    def test_lengths_survive_round_trip(self, rng):
        t = random_grid_phylogeny(9, 0.05, 0.1, 0.3, rng)
        t2 = Phylogeny.from_newick(t.newick())
        mine = np.sort(t.edge_length[~np.isnan(t.edge_length)])
        theirs = np.sort(t2.edge_length[~np.isnan(t2.edge_length)])
        assert np.array_equal(mine, theirs)
        assert t.newick() == t2.newick()
        assert t.unrooted() == t2.unrooted()

    def test_unrooted_trifurcation(self):
        topo = UnrootedTopology.from_newick("((0,1),2,3);")
        degrees = sorted(len(topo.adjacency[v]) for v in range(4, topo.n_vertices))
        assert degrees == [3, 3]
        assert topo.splits() == {frozenset({2, 3})}

    def test_parse_error_reports_position(self):
        with pytest.raises(ValueError, match="position"):
            Phylogeny.from_newick("((0:0.1,1:0.1:0.2);")

    def test_missing_terminator(self):
        with pytest.raises(ValueError, match=";"):
            Phylogeny.from_newick("(0:0.1,1:0.1)")

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError, match="2 children"):
            Phylogeny.from_newick("(0:0.1,1:0.1,2:0.1);")

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError, match="bijection"):
            Phylogeny.from_newick("((0:0.1,0:0.1):0.1,(2:0.1,3:0.1):0.1);")


def splits_by_enumeration(topo: UnrootedTopology):
    """Independent split oracle: for every internal edge, flood-fill."""
    out = set()
    n = topo.n_leaves
    for v in range(n, topo.n_vertices):
        for w in topo.adjacency[v]:
            if w < n or w < v:
                continue
            seen = {v, w}
            stack = [w]
            side = set()
            while stack:
                u = stack.pop()
                if u < n:
                    side.add(u)
                for x in topo.adjacency[u]:
                    if x not in seen:
                        seen.add(x)
                        stack.append(x)
            if 2 <= len(side) <= n - 2:
                out.add(frozenset(side) if 0 not in side
                        else frozenset(range(n)) - frozenset(side))
    return out


class TestRobinsonFoulds:
    def test_identical(self):
        t = UnrootedTopology.from_newick("((0,1),2,3);")
        assert rf_distance(t, t) == 0

    def test_quartet_alternatives(self):
        ab_cd = UnrootedTopology.from_newick("((0,1),2,3);")
        ac_bd = UnrootedTopology.from_newick("((0,2),1,3);")
        # each tree has one nontrivial split and they differ
        assert rf_distance(ab_cd, ac_bd) == 2

    def test_caterpillar_swap_positive(self):
        t1 = UnrootedTopology.from_newick("((((0,1),2),3),4);")
        t2 = UnrootedTopology.from_newick("((((0,3),2),1),4);")
        assert rf_distance(t1, t2) > 0

    def test_matches_enumeration_oracle(self, rng):
        for _ in range(20):
            t1 = random_grid_phylogeny(7, 0.05, 0.1, 0.3, rng).unrooted()
            t2 = random_grid_phylogeny(7, 0.05, 0.1, 0.3, rng).unrooted()
            expect = len(splits_by_enumeration(t1) ^ splits_by_enumeration(t2))
            assert rf_distance(t1, t2) == expect

    def test_metric_properties(self, rng):
        topos = [random_grid_phylogeny(6, 0.05, 0.1, 0.3, rng).unrooted()
                 for _ in range(4)]
        for a in topos:
            assert rf_distance(a, a) == 0
        for a, b in itertools.combinations(topos, 2):
            assert rf_distance(a, b) == rf_distance(b, a) >= 0
        for a, b, c in itertools.permutations(topos, 3):
            assert rf_distance(a, c) <= rf_distance(a, b) + rf_distance(b, c)

    def test_leaf_set_mismatch(self):
        t1 = UnrootedTopology.from_newick("((0,1),2,3);")
        t2 = UnrootedTopology.from_newick("(((0,1),2),3,4);")
        with pytest.raises(ValueError):
            rf_distance(t1, t2)


# Eight-leaf host for the disjointness tests: the left block holds
# u1,u2,u3,u8 (leaves 0,1,2,7), the right block u4..u7 (leaves 3,4,5,6),
# so the two blocks' connecting paths stay on their own sides.
FIG_TREE = "(((0:0.1,1:0.1):0.1,(2:0.1,7:0.1):0.1):0.1," \
           "((3:0.1,4:0.1):0.1,(5:0.1,6:0.1):0.1):0.1);"


class TestRestriction:
    def test_restrict_idempotent(self, rng):
        t = random_grid_phylogeny(8, 0.05, 0.1, 0.3, rng)
        sub = restrict(t, [0, 2, 4, 6])
        again = restrict(t, sorted(sub.vertices))
        assert again.vertices == sub.vertices
        assert again.edges == sub.edges
        assert again.underlying == sub.underlying

    def test_restrict_contracts_degree_two(self):
        t = Phylogeny.from_newick(FIG_TREE)
        sub = restrict(t, [0, 1, 2])
        # meeting vertex of 0,1 plus the junction toward 2 survive
        assert {0, 1, 2} <= sub.vertices
        lengths = sorted(sub.lengths.values())
        assert lengths[-1] == pytest.approx(0.3, abs=1e-12)  # contracted path

    def test_empty_rejected(self):
        t = Phylogeny.from_newick(FIG_TREE)
        with pytest.raises(ValueError):
            restrict(t, [])

    def test_edge_disjoint_blocks(self):
        t = Phylogeny.from_newick(FIG_TREE)
        assert edge_disjoint(t, [0, 1, 2, 7], [3, 4, 5, 6])

    def test_edge_sharing_interleaved(self):
        t = Phylogeny.from_newick(FIG_TREE)
        assert not edge_disjoint(t, [0, 4, 5, 7], [1, 2, 3, 6])

    def test_steiner_edges_of_cherry(self):
        t = Phylogeny.from_newick(FIG_TREE)
        assert len(steiner_edges(t, [0, 1])) == 2


class TestDangling:
    def test_sibling_subtrees_dangle(self):
        t = Phylogeny.from_newick(FIG_TREE)
        p01 = int(t.parent[0])
        p34 = int(t.parent[3])
        assert dangling(t, p01, [0, 1], p34, [3, 4])

    def test_one_sided_reach_still_dangles(self):
        # the path toward T2 exits T1 below its root, but T2 is entered at
        # its own root: a placement behind T1's root remains consistent
        t = Phylogeny.from_newick(FIG_TREE)
        a = int(t.parent[0])   # parent of leaves 0,1
        c = int(t.parent[3])   # parent of leaves 3,4
        assert dangling(t, a, [0, 2], c, [3, 4])

    def test_mutual_reach_not_dangling(self):
        # both subtrees are entered strictly below their roots: placements
        # consistent with one rooting are inconsistent with the other
        t = Phylogeny.from_newick(FIG_TREE)
        a = int(t.parent[0])
        c = int(t.parent[3])
        assert not dangling(t, a, [0, 2], c, [3, 5])


class TestUltrametric:
    def test_random_ultrametric_exact_spread(self, rng):
        t = random_ultrametric_phylogeny(16, 0.1, 0.3, rng)
        assert t.is_ultrametric(tol=0.0)
        metric = t.tree_metric()
        for v in range(t.n_vertices):
            leaves = list(t.leaves_below(v))
            d = metric[v, leaves]
            assert d.max() - d.min() == 0.0

    def test_edge_bounds(self, rng):
        t = random_ultrametric_phylogeny(16, 0.1, 0.3, rng)
        for v in range(t.n_vertices):
            if v != t.root:
                assert 0.1 - 1e-6 <= float(t.edge_length[v]) <= 0.3 + 1e-6

    def test_homogeneous_equal_edges_ultrametric(self):
        assert homogeneous_phylogeny(3, 0.2).is_ultrametric(tol=0.0)

    def test_perturbed_pendant_rejected(self, rng):
        t = random_ultrametric_phylogeny(8, 0.1, 0.3, rng)
        lengths = t.edge_length.copy()
        lengths[0] += 0.1
        bumped = Phylogeny(t.parent.copy(), lengths, 8)
        assert not bumped.is_ultrametric(tol=0.0)

    def test_from_depths_validates(self):
        t = homogeneous_phylogeny(2, 0.2)
        depths = np.zeros(t.n_vertices)
        for v in reversed(t.topo_order()):
            if t.children[v]:
                depths[v] = depths[t.children[v][0]] + 0.2
        clock = ultrametric_from_depths(t.parent, 4, depths)
        assert clock.is_ultrametric(tol=0.0)
        bad = depths.copy()
        bad[t.root] = depths[t.children[t.root][0]] - 0.05
        with pytest.raises(ValueError, match="decrease"):
            ultrametric_from_depths(t.parent, 4, bad)


class TestGridValidation:
    def test_grid_tree_validates(self, rng):
        t = random_grid_phylogeny(12, 0.05, 0.1, 0.3, rng)
        t.validate_grid(0.05, 0.1, 0.3)

    def test_off_grid_rejected(self):
        t = Phylogeny.from_newick("((0:0.13,1:0.1):0.1,(2:0.1,3:0.1):0.1);")
        with pytest.raises(ValueError, match="multiple"):
            t.validate_grid(0.05, 0.1, 0.3)


class TestValidation:
    def test_root_degree(self):
        with pytest.raises(ValueError):
            Phylogeny([3, 3, 3, -1, np.nan], [0.1, 0.1, 0.1, np.nan], 3)

    def test_positive_lengths(self):
        with pytest.raises(ValueError, match="positive"):
            Phylogeny([2, 2, -1], [0.1, 0.0, np.nan], 2)
