import math

import numpy as np
import pytest

from movetrait.features import (
    FeatureMatrix,
    RowMeta,
    apply_gaussian_stats,
    correntropy,
    correntropy_matrix,
    extract_features,
    gaussian_normalize,
    gaussian_stats,
    load_feature_matrix,
    lower_triangle_indices,
    pairwise_correntropy,
    save_feature_matrix,
    stack_features,
    unvectorize_lower,
    vectorize_lower,
)
from movetrait.mocap import JointTake, Kind


def joint_take(data, frame_rate=120.0, kind=Kind.POSITION, pid="P1", sid="S1"):
    return JointTake(
        data=np.asarray(data, dtype=float), frame_rate=frame_rate, kind=kind,
        participant_id=pid, stimulus_id=sid,
    )


class TestCorrentropy:
    def test_identical_series(self):
        x = np.array([3.0, -1.0, 4.5])
        assert correntropy(x, x) == 1.0

    def test_hand_value_single_sample(self):
        # ||d||^2 = 288, 2 sigma^2 T^2 = 288 -> e^-1
        got = correntropy(np.array([0.0]), np.array([12.0 * math.sqrt(2.0)]), sigma=12.0)
        assert got == pytest.approx(0.36787944117144233, abs=1e-12)

    def test_hand_value_two_samples(self):
        # ||d||^2 = 576, 2 sigma^2 T^2 = 1152 -> e^-0.5
        got = correntropy(np.array([0.0, 0.0]), np.array([24.0, 0.0]), sigma=12.0)
        assert got == pytest.approx(0.6065306597126334, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            correntropy(np.zeros(3), np.zeros(4))

    def test_nonpositive_sigma(self):
        with pytest.raises(ValueError, match="sigma"):
            correntropy(np.zeros(3), np.zeros(3), sigma=0.0)

    def test_strictly_decreasing_in_distance(self):
        x = np.zeros(4)
        values = [correntropy(x, np.full(4, d)) for d in (0.5, 1.0, 2.0, 5.0, 50.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_frame_duplication_square_root_relation(self):
        # doubling T doubles ||d||^2 but quadruples the normalizer
        rng = np.random.default_rng(5)
        x = rng.normal(0, 10, 7)
        y = rng.normal(0, 10, 7)
        single = correntropy(x, y)
        doubled = correntropy(np.repeat(x, 2), np.repeat(y, 2))
        assert doubled == pytest.approx(math.sqrt(single), abs=1e-12)


class TestCorrentropyMatrix:
    def test_identical_columns_give_all_ones(self):
        data = np.tile(np.arange(5.0)[:, None], (1, 60))
        k = correntropy_matrix(joint_take(data))
        np.testing.assert_array_equal(k.values, np.ones((60, 60)))

    def test_exact_symmetry_and_unit_diagonal(self):
        rng = np.random.default_rng(0)
        k = pairwise_correntropy(rng.normal(0, 50, size=(9, 12)))
        np.testing.assert_array_equal(k, k.T)
        np.testing.assert_array_equal(np.diag(k), np.ones(12))

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(3)
        data = rng.normal(0, 40, size=(5, 8))
        k = pairwise_correntropy(data, sigma=12.0)
        for i in range(8):
            for j in range(8):
                expected = correntropy(data[:, i], data[:, j], sigma=12.0)
                assert k[i, j] == pytest.approx(expected, abs=1e-12)

    def test_entries_in_unit_interval(self):
        rng = np.random.default_rng(11)
        k = pairwise_correntropy(rng.normal(0, 200, size=(30, 10)))
        assert (k > 0).all() and (k <= 1).all()

    def test_sigma_carried(self):
        data = np.random.default_rng(1).normal(size=(4, 60))
        k = correntropy_matrix(joint_take(data), sigma=5.0)
        assert k.sigma == 5.0 and k.series_length == 4 and k.dim == 60


class TestVectorize:
    def test_standard_dim_gives_1770(self):
        data = np.random.default_rng(2).normal(0, 30, size=(6, 60))
        vec = vectorize_lower(correntropy_matrix(joint_take(data)))
        assert vec.shape == (1770,)

    def test_reduced_dim_walk_order(self):
        m = np.array([
            [1.0, 0.1, 0.2],
            [0.1, 1.0, 0.3],
            [0.2, 0.3, 1.0],
        ])
        np.testing.assert_array_equal(vectorize_lower(m), [0.1, 0.2, 0.3])

    def test_all_ones_matrix(self):
        np.testing.assert_array_equal(vectorize_lower(np.ones((4, 4))), np.ones(6))

    def test_round_trip_exact(self):
        rng = np.random.default_rng(9)
        k = pairwise_correntropy(rng.normal(0, 25, size=(7, 15)))
        vec = vectorize_lower(k)
        np.testing.assert_array_equal(unvectorize_lower(vec, 15), k)

    def test_unvectorize_length_check(self):
        with pytest.raises(ValueError, match="expected"):
            unvectorize_lower(np.zeros(5), 4)

    def test_permutation_consistency(self):
        # permuting columns permutes K rows/cols identically
        rng = np.random.default_rng(31)
        data = rng.normal(0, 20, size=(6, 9))
        k = pairwise_correntropy(data)
        for _ in range(5):
            perm = rng.permutation(9)
            kp = pairwise_correntropy(data[:, perm])
            np.testing.assert_allclose(kp, k[np.ix_(perm, perm)], atol=1e-15)
            vec = vectorize_lower(kp)
            rows, cols = lower_triangle_indices(9)
            expected = k[perm[rows], perm[cols]]
            np.testing.assert_allclose(vec, expected, atol=1e-15)


class TestGaussianNormalize:
    def make_matrix(self, values):
        values = np.asarray(values, dtype=float)
        rows = tuple(
            RowMeta(f"P{i}", "S1", Kind.POSITION) for i in range(values.shape[0])
        )
        return FeatureMatrix(values=values, rows=rows)

    def test_hand_example(self):
        m = gaussian_normalize(self.make_matrix([[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(
            m.values[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-9
        )

    def test_zero_variance_column_maps_to_zero(self):
        m = gaussian_normalize(self.make_matrix([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
        np.testing.assert_array_equal(m.values[:, 0], np.zeros(3))

    def test_idempotent_on_standardized_data(self):
        rng = np.random.default_rng(8)
        raw = self.make_matrix(rng.normal(size=(20, 6)))
        once = gaussian_normalize(raw)
        twice = gaussian_normalize(self.make_matrix(once.values))
        np.testing.assert_allclose(twice.values, once.values, atol=1e-9)

    def test_columns_standardized(self):
        rng = np.random.default_rng(12)
        m = gaussian_normalize(self.make_matrix(rng.normal(3, 7, size=(50, 4))))
        assert np.abs(m.values.mean(axis=0)).max() < 1e-9
        np.testing.assert_allclose(m.values.std(axis=0), 1.0, atol=1e-9)
        assert m.normalized and m.mu.shape == (4,) and m.sigma.shape == (4,)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError, match="2 rows"):
            gaussian_normalize(self.make_matrix([[1.0, 2.0]]))

    def test_stats_apply_to_held_out_rows(self):
        rng = np.random.default_rng(4)
        train = rng.normal(10, 3, size=(30, 5))
        held = rng.normal(10, 3, size=(4, 5))
        mu, sigma = gaussian_stats(train)
        out = apply_gaussian_stats(held, mu, sigma)
        np.testing.assert_allclose(out, (held - mu) / sigma, atol=1e-12)


class TestExtractAndPersistence:
    def test_extract_carries_metadata(self):
        data = np.random.default_rng(0).normal(0, 30, size=(5, 60))
        fv = extract_features(joint_take(data, pid="P7", sid="S3"))
        assert fv.values.shape == (1770,)
        assert fv.meta.participant_id == "P7"
        assert fv.meta.kind is Kind.POSITION

    def test_matrix_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        vecs = [
            extract_features(joint_take(rng.normal(0, 30, size=(5, 60)), pid=f"P{i}"))
            for i in range(3)
        ]
        matrix = stack_features(vecs)
        path = tmp_path / "features.csv"
        save_feature_matrix(matrix, path)
        loaded = load_feature_matrix(path)
        np.testing.assert_array_equal(loaded.values, matrix.values)
        assert loaded.rows == matrix.rows
        assert not loaded.normalized

    def test_normalized_matrix_round_trip(self, tmp_path):
        rng = np.random.default_rng(14)
        rows = tuple(RowMeta(f"P{i}", "S1", Kind.VELOCITY) for i in range(4))
        matrix = gaussian_normalize(
            FeatureMatrix(values=rng.normal(size=(4, 10)), rows=rows)
        )
        path = tmp_path / "features.csv"
        save_feature_matrix(matrix, path)
        loaded = load_feature_matrix(path)
        assert loaded.normalized
        np.testing.assert_array_equal(loaded.mu, matrix.mu)
        np.testing.assert_array_equal(loaded.sigma, matrix.sigma)

    def test_row_metadata_length_enforced(self):
        with pytest.raises(ValueError, match="row metadata"):
            FeatureMatrix(values=np.zeros((2, 3)), rows=(RowMeta("P", "S", Kind.POSITION),))
