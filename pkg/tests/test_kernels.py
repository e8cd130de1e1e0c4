"""Backend equivalence: the compiled kernels and the numpy fallback must
produce bit-identical results."""

import numpy as np
import pytest

from kslog import _kernels, _kernels_py
from kslog._kernels import INF_GRID
from kslog.models import cfn_model, binary_asymmetric_model
from kslog.simulate import _edge_cum_rows
from kslog.trees import homogeneous_phylogeny, random_grid_phylogeny

native = pytest.importorskip("kslog._native") \
    if _kernels.BACKEND == "native" else None


def _sampling_inputs(model, tree):
    root_cum = np.cumsum(model.pi)
    root_cum[-1] = 1.0
    return (np.asarray(tree.topo_order(), dtype=np.int32), tree.parent,
            root_cum, _edge_cum_rows(tree, model))


@pytest.mark.skipif(_kernels.BACKEND != "native",
                    reason="native kernels not built")
class TestBackendEquivalence:
    def test_sample_states_identical(self):
        model = binary_asymmetric_model(0.6)
        tree = homogeneous_phylogeny(4, 0.2)
        order, parent, root_cum, cum = _sampling_inputs(model, tree)
        a = native.sample_states(9, 3, 500, order, parent, root_cum, cum)
        b = _kernels_py.sample_states(9, 3, 500, order, parent, root_cum, cum)
        assert np.array_equal(a, b)

    def test_four_point_tally_identical(self, rng):
        for m in (4, 9, 16):
            vals = rng.integers(2, 40, size=(m, m)).astype(np.int64)
            vals = np.minimum(vals, vals.T)
            vals[rng.random((m, m)) < 0.3] = INF_GRID
            vals = np.maximum(vals, vals.T)  # symmetric INF placement
            np.fill_diagonal(vals, INF_GRID)
            out_a = native.four_point_tally(vals, 0.05, 0.1)
            out_b = _kernels_py.four_point_tally(vals, 0.05, 0.1)
            assert np.array_equal(out_a[0], out_b[0])
            assert np.array_equal(out_a[1], out_b[1])
            assert out_a[2:] == out_b[2:]


class TestStreamProperties:
    def test_determinism(self):
        model = cfn_model()
        tree = homogeneous_phylogeny(3, 0.25)
        args = _sampling_inputs(model, tree)
        a = _kernels.sample_states(7, 0, 200, *args)
        b = _kernels.sample_states(7, 0, 200, *args)
        assert np.array_equal(a, b)

    def test_site_prefix_sharing(self):
        # growing the site count extends the alignment without reshuffling
        model = cfn_model()
        tree = homogeneous_phylogeny(3, 0.25)
        args = _sampling_inputs(model, tree)
        small = _kernels.sample_states(7, 0, 100, *args)
        big = _kernels.sample_states(7, 0, 300, *args)
        assert np.array_equal(big[:100], small)

    def test_replicates_differ(self):
        model = cfn_model()
        tree = homogeneous_phylogeny(3, 0.25)
        args = _sampling_inputs(model, tree)
        a = _kernels.sample_states(7, 0, 200, *args)
        b = _kernels.sample_states(7, 1, 200, *args)
        assert not np.array_equal(a, b)

    def test_states_in_range(self, rng):
        model = binary_asymmetric_model(0.9)
        tree = random_grid_phylogeny(6, 0.05, 0.1, 0.3, rng)
        args = _sampling_inputs(model, tree)
        states = _kernels.sample_states(1, 0, 1000, *args)
        assert states.min() >= 0
        assert states.max() <= 1


class TestTallySemantics:
    def test_all_infinite_tallies_nothing(self):
        vals = np.full((6, 6), INF_GRID, dtype=np.int64)
        same, opp, n_pass, n_multi = _kernels.four_point_tally(vals, 0.05, 0.1)
        assert n_pass == 0 and n_multi == 0
        assert not same.any() and not opp.any()

    def test_exact_quartet_metric(self):
        # split (0,1)|(2,3) with inner span 2 steps on a 0.05 grid
        d = np.array([
            [0, 4, 8, 8],
            [4, 0, 8, 8],
            [8, 8, 0, 4],
            [8, 8, 4, 0],
        ], dtype=np.int64)
        same, opp, n_pass, n_multi = _kernels.four_point_tally(d, 0.05, 0.05)
        assert n_pass == 1 and n_multi == 0
        assert same[0, 1] == 1 and same[2, 3] == 1
        assert opp[0, 2] == 1 and opp[1, 3] == 1
        assert same[0, 2] == 0
