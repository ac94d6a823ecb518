import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from procopt import ahp

SCALE = [1 / 9, 1 / 8, 1 / 7, 1 / 6, 1 / 5, 1 / 4, 1 / 3, 1 / 2, 1, 2, 3, 4, 5, 6, 7, 8, 9]


def consistent(w):
    w = np.asarray(w, dtype=float)
    return w[:, None] / w[None, :]


class TestValidate:
    def test_expert_matrix_ok(self, expert_matrix):
        assert ahp.validate(expert_matrix) == []

    def test_reciprocity(self, expert_matrix):
        a = expert_matrix.copy()
        a[0, 1] = a[1, 0] = 3
        v = ahp.validate(a)
        assert [(x.kind, x.i, x.j) for x in v] == [("reciprocity", 0, 1)]
        assert "(1,2)" in str(v[0])

    def test_scale(self, expert_matrix):
        a = expert_matrix.copy()
        a[0, 1], a[1, 0] = 10, 1 / 10
        kinds = {(x.kind, x.i, x.j) for x in ahp.validate(a)}
        assert ("scale", 0, 1) in kinds and ("scale", 1, 0) in kinds

    def test_diagonal(self, expert_matrix):
        a = expert_matrix.copy()
        a[2, 2] = 2
        assert ("diagonal", 2, 2) in {(x.kind, x.i, x.j) for x in ahp.validate(a)}

    def test_non_square(self):
        with pytest.raises(ahp.AHPError):
            ahp.validate(np.ones((2, 3)))


class TestDeriveWeights:
    def test_expert_matrix(self, expert_matrix):
        w = ahp.derive_weights(expert_matrix)
        np.testing.assert_allclose(w.geometric_means, [2.9428, 1.3161, 0.6043, 0.4273], atol=5e-4)
        np.testing.assert_allclose(w.weights, [0.556, 0.249, 0.114, 0.081], atol=5e-4)
        assert w.lambda_max == pytest.approx(4.1042, abs=1e-3)
        assert w.cr == pytest.approx(0.0386, abs=2e-3)
        assert w.ci == pytest.approx(w.cr * 0.90)

    def test_all_ones(self):
        w = ahp.derive_weights(np.ones((4, 4)))
        np.testing.assert_allclose(w.weights, [0.25] * 4)
        assert w.lambda_max == pytest.approx(4.0)
        assert w.ci == pytest.approx(0.0, abs=1e-12) and w.cr == pytest.approx(0.0, abs=1e-12)

    def test_two_criteria_cr_not_applicable(self):
        w = ahp.derive_weights([[1, 3], [1 / 3, 1]])
        assert w.cr is None and w.ci == pytest.approx(0, abs=1e-12)
        np.testing.assert_allclose(w.weights, [0.75, 0.25])
        assert ahp.check_consistency(w)

    def test_invalid(self, expert_matrix):
        expert_matrix[0, 1] = 4
        with pytest.raises(ahp.AHPError, match="reciprocity"):
            ahp.derive_weights(expert_matrix)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1.0, 3.0), min_size=3, max_size=8))
    def test_recovers_consistent_weights(self, raw):
        w = ahp.derive_weights(consistent(raw))
        np.testing.assert_allclose(w.weights, np.array(raw) / sum(raw), rtol=1e-9)
        assert abs(w.ci) < 1e-9
        assert w.weights.sum() == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(3, 7).flatmap(
        lambda m: st.lists(st.sampled_from(SCALE), min_size=m * (m - 1) // 2,
                           max_size=m * (m - 1) // 2).map(lambda v: (m, v))))
    def test_lambda_max_at_least_m(self, mv):
        m, upper = mv
        a = np.ones((m, m))
        it = iter(upper)
        for i in range(m):
            for j in range(i + 1, m):
                a[i, j] = next(it)
                a[j, i] = 1 / a[i, j]
        w = ahp.derive_weights(a)
        assert w.lambda_max >= m - 1e-9
        assert (w.weights > 0).all()

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1.0, 2.0), min_size=3, max_size=6),
           st.floats(0.5, 2.0), st.data())
    def test_row_column_rescaling(self, raw, c, draw):
        k = draw.draw(st.integers(0, len(raw) - 1))
        a = consistent(raw)
        b = a.copy()
        b[k, :] *= c
        b[:, k] /= c
        before = ahp.derive_weights(a).weights
        after = ahp.derive_weights(b).weights
        others = [j for j in range(len(raw)) if j != k]
        assert list(np.argsort(before[others], kind="stable")) == \
            list(np.argsort(after[others], kind="stable"))
        for j in others:
            assert after[k] / after[j] == pytest.approx(c * before[k] / before[j], rel=1e-9)


class TestConsistency:
    def test_accept_expert_matrix(self, expert_matrix):
        assert ahp.check_consistency(ahp.derive_weights(expert_matrix), 0.08)

    def test_thresholds(self):
        def fake(cr):
            return ahp.CriteriaWeights(np.array([0.5, 0.3, 0.2]), np.ones(3), 3.0, cr * 0.58, cr)
        assert ahp.check_consistency(fake(0.0), 1e-6)
        assert not ahp.check_consistency(fake(0.2), 0.08)
        assert ahp.check_consistency(fake(0.08), 0.08)


class TestAggregate:
    def test_mean(self):
        assert ahp.aggregate_objective([0.5, 0.5], [2, 4]) == 3.0

    def test_zero(self, expert_matrix):
        assert ahp.aggregate_objective(ahp.derive_weights(expert_matrix), [0, 0, 0, 0]) == 0.0

    def test_expert_matrix_ones(self, expert_matrix):
        w = ahp.derive_weights(expert_matrix)
        assert ahp.aggregate_objective(w, [1, 1, 1, 1]) == pytest.approx(1.0, abs=1e-12)

    def test_arity(self):
        with pytest.raises(ValueError):
            ahp.aggregate_objective([0.5, 0.5], [1, 2, 3])


class TestFiles:
    def test_fractions(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1, 3 ,5,5\n1/3,1,3,3\n1/5,1/3,1,2\n0.2,1/3,1/2,1\n")
        a = ahp.load_matrix(p)
        assert a[1, 0] == pytest.approx(1 / 3) and a[3, 0] == 0.2

    def test_bad_entry(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,x\n1,1\n")
        with pytest.raises(ahp.AHPError):
            ahp.load_matrix(p)

    def test_weights_roundtrip(self, tmp_path, expert_matrix):
        w = ahp.derive_weights(expert_matrix)
        ahp.save_weights(w, ["a", "b", "c", "d"], tmp_path / "w.json")
        names, back, ok = ahp.load_weights(tmp_path / "w.json")
        assert names == ["a", "b", "c", "d"] and ok
        np.testing.assert_array_equal(back, w.weights)
