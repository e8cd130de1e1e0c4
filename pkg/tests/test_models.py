import json
import math

import numpy as np
import pytest

from kslog.models import (build_model, transition, cfn_model,
                          binary_asymmetric_model, resolve_model,
                          load_model_file)


def four_state_inputs():
    """A reversible four-state model with distinct exchangeabilities."""
    pi = np.array([0.4, 0.3, 0.2, 0.1])
    s = np.array([[0, 1, 2, 3],
                  [1, 0, 4, 5],
                  [2, 4, 0, 6],
                  [3, 5, 6, 0]], dtype=float)
    q = s * pi[None, :]
    np.fill_diagonal(q, -q.sum(axis=1))
    return q, pi


def expm_series(q, t, terms=40):
    """Independent matrix-exponential oracle: truncated power series."""
    out = np.eye(q.shape[0])
    acc = np.eye(q.shape[0])
    for n in range(1, terms):
        acc = acc @ (q * t) / n
        out = out + acc
    return out


class TestBuildModel:
    def test_cfn_spectrum(self, cfn):
        assert cfn.phi == 2
        assert np.allclose(cfn.eigenvalues, [0.0, -1.0], atol=1e-12)
        assert np.allclose(cfn.nu, [1.0, -1.0], atol=1e-12)

    def test_asymmetric_closed_form(self, asym):
        # 2x2 oracle: Qv = -v gives v = (1, -7/3); normalizing
        # sum(pi v^2) = 1 scales by sqrt(3/7)
        scale = math.sqrt(3.0 / 7.0)
        assert np.allclose(asym.nu, [scale, -scale * 7.0 / 3.0], atol=1e-12)
        assert abs(asym.nu[0] - 0.6547) < 1e-4
        assert abs(asym.nu[1] + 1.5275) < 1e-4
        assert np.allclose(asym.eigenvalues, [0.0, -1.0], atol=1e-12)

    def test_nu_normalization(self, cfn, asym):
        for m in (cfn, asym):
            assert float(np.dot(m.pi, m.nu ** 2)) == pytest.approx(1.0, abs=1e-12)
            assert float(np.dot(m.pi, m.nu)) == pytest.approx(0.0, abs=1e-12)
            assert m.nu[0] > 0  # sign convention

    def test_scale_invariance(self):
        base = binary_asymmetric_model(0.7)
        scaled = build_model(3.0 * np.array([[-0.3, 0.3], [0.7, -0.7]]),
                             [0.7, 0.3])
        assert np.allclose(base.q, scaled.q, atol=1e-12)
        assert np.allclose(base.nu, scaled.nu, atol=1e-12)

    def test_rejects_bad_row_sums(self):
        with pytest.raises(ValueError, match="sum to 0"):
            build_model([[-0.4, 0.5], [0.5, -0.5]], [0.5, 0.5])

    def test_rejects_nonreversible(self):
        q = [[-1.0, 0.5, 0.5], [0.2, -0.7, 0.5], [0.8, 0.1, -0.9]]
        with pytest.raises(ValueError, match="reversible"):
            build_model(q, [1 / 3, 1 / 3, 1 / 3])

    def test_rejects_zero_pi(self):
        with pytest.raises(ValueError, match="positive"):
            build_model([[-0.5, 0.5], [0.5, -0.5]], [1.0, 0.0])

    def test_rejects_degenerate_second_eigenvalue(self):
        # four-state fully symmetric rates: the second eigenvalue has
        # multiplicity three, so the eigenvector estimator is ill-defined
        q = np.full((4, 4), 1.0 / 3.0)
        np.fill_diagonal(q, -1.0)
        with pytest.raises(ValueError, match="multiplicity"):
            build_model(q, [0.25] * 4)

    def test_four_state_reversible_accepted(self):
        # distinct exchangeabilities keep the spectrum simple
        model = build_model(*four_state_inputs())
        assert model.phi == 4
        assert model.eigenvalues[1] == pytest.approx(-1.0, abs=1e-12)
        assert float(np.dot(model.pi, model.nu ** 2)) == pytest.approx(
            1.0, abs=1e-12)

    def test_equal_rate_inputs_rejected_as_degenerate(self):
        # rates proportional to the target frequencies give a 3-fold
        # second eigenvalue: the estimator direction is not unique
        pi = np.array([0.4, 0.3, 0.2, 0.1])
        q = np.outer(np.ones(4), pi)
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        with pytest.raises(ValueError, match="multiplicity"):
            build_model(q, pi)


class TestTransition:
    def test_identity_at_zero(self, asym):
        assert np.allclose(transition(asym, 0.0).matrix, np.eye(2), atol=1e-14)

    def test_negative_rejected(self, cfn):
        with pytest.raises(ValueError):
            transition(cfn, -0.1)

    def test_cfn_closed_form(self, cfn):
        for t in (0.05, 0.3, 1.2):
            m = transition(cfn, t).matrix
            same = 0.5 * (1.0 + math.exp(-t))
            diff = 0.5 * (1.0 - math.exp(-t))
            assert np.allclose(m, [[same, diff], [diff, same]], atol=1e-13)
            assert np.allclose(m, expm_series(cfn.q, t), atol=1e-12)

    def test_series_oracle_asymmetric(self, asym):
        for t in (0.1, 0.5):
            assert np.allclose(transition(asym, t).matrix,
                               expm_series(asym.q, t), atol=1e-12)

    def test_eigen_relation(self, cfn, asym):
        for model in (cfn, asym):
            for t in (0.1, 0.25, 1.0):
                m = transition(model, t).matrix
                assert np.max(np.abs(m @ model.nu - math.exp(-t) * model.nu)) \
                    <= 1e-12

    def test_stationarity(self, asym):
        for t in (0.05, 0.4, 2.0):
            m = transition(asym, t).matrix
            assert np.max(np.abs(asym.pi @ m - asym.pi)) <= 1e-12

    def test_detailed_balance(self, asym):
        for t in (0.05, 0.4, 2.0):
            m = transition(asym, t).matrix
            flux = asym.pi[:, None] * m
            assert np.max(np.abs(flux - flux.T)) <= 1e-12

    def test_semigroup(self, asym):
        grid = [0.05, 0.2, 0.5, 1.0]
        for s in grid:
            for t in grid:
                lhs = transition(asym, s).matrix @ transition(asym, t).matrix
                rhs = transition(asym, s + t).matrix
                assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_second_eigenvalue_decay(self, asym):
        for t in (0.1, 0.7):
            w = np.linalg.eigvals(transition(asym, t).matrix)
            w = np.sort(np.abs(w))[::-1]
            assert w[1] == pytest.approx(math.exp(-t), abs=1e-12)

    def test_rows_are_distributions(self, asym):
        m = transition(asym, 0.37).matrix
        assert np.allclose(m.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(m >= -1e-15)


class TestModelResolution:
    def test_builtins(self):
        assert resolve_model("cfn").phi == 2
        m = resolve_model("binary-asymmetric:0.7")
        assert m.pi[0] == pytest.approx(0.7)

    def test_model_file_round_trip(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({
            "phi": 2,
            "pi": [0.5, 0.5],
            "Q": [[-0.5, 0.5], [0.5, -0.5]],
        }))
        model = load_model_file(path)
        assert np.allclose(model.nu, [1.0, -1.0])

    def test_model_file_missing_field(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"phi": 2, "pi": [0.5, 0.5]}))
        with pytest.raises(ValueError, match="Q"):
            load_model_file(path)
