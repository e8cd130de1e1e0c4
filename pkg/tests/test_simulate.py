import io
import math

import numpy as np
import pytest

from kslog.enumeration import enumerate_joint
from kslog.models import transition
from kslog.simulate import (sample_alignment, sigma_view, dump_alignment,
                            load_alignment)
from kslog.trees import Phylogeny, homogeneous_phylogeny

# frozen chi-square quantiles (99.9%) for df = 1 and 3
CHI2_999 = {1: 10.828, 3: 16.266}


def two_leaf(model_t=0.3):
    half = model_t / 2.0
    return Phylogeny([2, 2, -1], [half, half, np.nan], 2)


class TestSampling:
    def test_determinism(self, cfn):
        t = homogeneous_phylogeny(3, 0.2)
        a = sample_alignment(t, cfn, 500, seed=42, replicate=1)
        b = sample_alignment(t, cfn, 500, seed=42, replicate=1)
        assert np.array_equal(a.states, b.states)

    def test_k_must_be_positive(self, cfn):
        with pytest.raises(ValueError):
            sample_alignment(two_leaf(), cfn, 0, seed=1)

    def test_single_vertex_stationarity(self, asym):
        # degenerate one-vertex tree samples the stationary law directly
        t = Phylogeny([-1], [np.nan], 1)
        aln = sample_alignment(t, asym, 100_000, seed=9)
        counts = np.bincount(aln.states[:, 0], minlength=2)
        expected = asym.pi * aln.k
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 < CHI2_999[1]

    def test_two_leaf_disagreement_rate(self, cfn):
        t = 0.3
        aln = sample_alignment(two_leaf(t), cfn, 100_000, seed=5)
        p_hat = float(np.mean(aln.states[:, 0] != aln.states[:, 1]))
        p = 0.5 * (1.0 - math.exp(-t))
        se = math.sqrt(p * (1 - p) / aln.k)
        assert abs(p_hat - p) < 3 * se

    def test_leaf_marginals_four_state(self):
        from kslog.models import build_model
        from test_models import four_state_inputs
        model = build_model(*four_state_inputs())
        aln = sample_alignment(two_leaf(0.4), model, 100_000, seed=3)
        counts = np.bincount(aln.states[:, 1], minlength=4)
        expected = model.pi * aln.k
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 < CHI2_999[3]

    def test_full_samples_internal_vertices(self, cfn):
        t = homogeneous_phylogeny(2, 0.2)
        aln, full = sample_alignment(t, cfn, 100, seed=0, full=True)
        assert full.states.shape == (100, t.n_vertices)
        assert np.array_equal(full.states[:, :4], aln.states)


class TestSigmaView:
    def test_cfn_mapping(self, cfn):
        assert np.allclose(sigma_view(np.array([0, 1, 0]), cfn),
                           [1.0, -1.0, 1.0], atol=1e-12)

    def test_bounded_by_nu_bar(self, asym):
        t = homogeneous_phylogeny(3, 0.2)
        aln = sample_alignment(t, asym, 1000, seed=1)
        assert np.max(np.abs(sigma_view(aln, asym))) <= asym.nu_bar + 1e-15

    def test_mean_sigma_near_zero(self, asym):
        aln = sample_alignment(two_leaf(0.4), asym, 100_000, seed=2)
        sig = sigma_view(aln, asym)[:, 0]
        se = 1.0 / math.sqrt(aln.k)  # Var[sigma] = 1
        assert abs(float(sig.mean())) < 3 * se

    def test_pair_correlation_matches_exact_enumeration(self, cfn, asym):
        # E[sigma_a sigma_b] = exp(-t): verified by exact enumeration,
        # then the simulation is held to 3 standard errors
        t = 0.3
        tree = two_leaf(t)
        for model in (cfn, asym):
            dist = enumerate_joint(tree, model)
            sig = model.nu[dist.states]
            exact = dist.expectation(sig[:, 0] * sig[:, 1])
            assert exact == pytest.approx(math.exp(-t), abs=1e-12)
            aln = sample_alignment(tree, model, 100_000, seed=7)
            sview = sigma_view(aln, model)
            prod = sview[:, 0] * sview[:, 1]
            se = float(prod.std()) / math.sqrt(aln.k)
            assert abs(float(prod.mean()) - exact) < 3 * se

    def test_lag_one_autocorrelation(self, cfn):
        aln = sample_alignment(two_leaf(0.3), cfn, 100_000, seed=11)
        sig = sigma_view(aln, cfn)[:, 0]
        lag = float(np.mean(sig[:-1] * sig[1:]))
        se = 1.0 / math.sqrt(aln.k - 1)
        assert abs(lag) < 3 * se


class TestExactDistributionAgreement:
    def test_small_tree_pattern_frequencies(self, cfn):
        # enumerated joint leaf law vs simulated frequencies, 4-sigma guard
        tree = Phylogeny.from_newick(
            "((0:0.15,1:0.2):0.1,(2:0.25,3:0.1):0.2);")
        dist = enumerate_joint(tree, cfn)
        leaf_states = dist.states[:, :4]
        codes = (leaf_states * (2 ** np.arange(4))).sum(axis=1)
        exact = np.zeros(16)
        np.add.at(exact, codes, dist.probs)
        aln = sample_alignment(tree, cfn, 200_000, seed=13)
        sim_codes = (aln.states * (2 ** np.arange(4))).sum(axis=1)
        freq = np.bincount(sim_codes, minlength=16) / aln.k
        se = np.sqrt(exact * (1 - exact) / aln.k)
        assert np.all(np.abs(freq - exact) < 4 * se + 1e-9)

    def test_transition_row_agreement(self, asym):
        # conditional child frequencies track the transition matrix rows
        tree = two_leaf(0.5)
        aln, full = sample_alignment(tree, asym, 100_000, seed=17, full=True)
        m = transition(asym, 0.25).matrix
        root_states = full.states[:, 2]
        for s in (0, 1):
            rows = full.states[root_states == s, 0]
            if rows.size:
                p_hat = float(np.mean(rows == 1))
                se = math.sqrt(m[s, 1] * m[s, 0] / rows.size)
                assert abs(p_hat - m[s, 1]) < 4 * se


class TestDumpFormat:
    def test_round_trip(self, cfn):
        aln = sample_alignment(homogeneous_phylogeny(2, 0.2), cfn, 50, seed=1)
        buf = io.StringIO()
        dump_alignment(aln, buf)
        text = buf.getvalue()
        assert len(text.strip().split("\n")) == 4
        loaded = load_alignment(io.StringIO(text), phi=2)
        assert np.array_equal(loaded.states, aln.states)
