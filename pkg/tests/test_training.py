"""Triplet selection, lazy triplet loss/gradient, and metric learning."""

import numpy as np
import pytest

from bevloc.errors import FormatError
from bevloc.geometry import Pose
from bevloc.training import (
    EmbeddingMap,
    TripletBatch,
    TripletConfig,
    load_embedding,
    mine_hard_negatives,
    save_embedding,
    select_triplets,
    train_metric,
    triplet_grad,
    triplet_loss,
)


def batch_1d(query, positives, negatives):
    return TripletBatch(np.array([query], dtype=np.float64),
                        np.array(positives, dtype=np.float64).reshape(-1, 1),
                        np.array(negatives, dtype=np.float64).reshape(-1, 1))


def identity_1d():
    return EmbeddingMap.identity(1, output_dim=1)


def line_poses(n, spacing=1.0):
    return [Pose(np.array([i * spacing, 0.0, 0.0]), np.eye(3))
            for i in range(n)]


class TestTripletConfig:
    def test_defaults(self):
        cfg = TripletConfig()
        assert cfg.margin_m == 0.5
        assert (cfg.n_pos, cfg.n_neg) == (2, 10)
        assert (cfg.d_pos, cfg.d_neg) == (10.0, 50.0)
        assert cfg.hard_mining_start_epoch == 10

    def test_rejects_bad_radii(self):
        with pytest.raises(ValueError):
            TripletConfig(d_pos=50.0, d_neg=10.0)
        with pytest.raises(ValueError):
            TripletConfig(margin_m=0.0)


class TestTripletLoss:
    def test_hand_example(self):
        # squared distances: pos 0.2; negatives 0.9 and 0.4
        batch = batch_1d(0.0, [np.sqrt(0.2)], [np.sqrt(0.9), np.sqrt(0.4)])
        assert triplet_loss(batch, identity_1d(), margin=0.5) == pytest.approx(0.3)

    def test_saturated_hinge_is_zero(self):
        batch = batch_1d(0.0, [0.0], [np.sqrt(0.5), 10.0])
        assert triplet_loss(batch, identity_1d(), margin=0.5) == 0.0

    def test_all_equal_descriptors_give_margin(self):
        batch = batch_1d(0.3, [0.3], [0.3, 0.3])
        assert triplet_loss(batch, identity_1d(), margin=0.5) == pytest.approx(0.5)

    def test_lazy_positive_takes_minimum(self):
        # two positives at squared distances 0.2 and 0.05: the closer one counts
        batch = batch_1d(0.0, [np.sqrt(0.2), np.sqrt(0.05)], [np.sqrt(0.4)])
        assert triplet_loss(batch, identity_1d(), margin=0.5) == pytest.approx(0.15)

    def test_loss_bounds(self):
        rng = np.random.default_rng(0)
        emb = EmbeddingMap(rng.normal(size=(3, 6)))
        for _ in range(50):
            batch = TripletBatch(rng.normal(size=6), rng.normal(size=(2, 6)),
                                 rng.normal(size=(10, 6)))
            loss = triplet_loss(batch, emb, margin=0.5)
            d_pos = ((emb.embed(batch.query) - emb.embed(batch.positives)) ** 2
                     ).sum(axis=1).min()
            assert 0.0 <= loss <= 0.5 + d_pos + 1e-12

    def test_monotone_in_negative_distance(self):
        base = batch_1d(0.0, [0.4], [0.6, 0.7])
        farther = batch_1d(0.0, [0.4], [0.6, 0.9])
        emb = identity_1d()
        assert triplet_loss(farther, emb) <= triplet_loss(base, emb)

    def test_monotone_in_positive_distance(self):
        near = batch_1d(0.0, [0.3], [0.8])
        far = batch_1d(0.0, [0.5], [0.8])
        emb = identity_1d()
        assert triplet_loss(far, emb) >= triplet_loss(near, emb)


class TestTripletGrad:
    def test_zero_when_hinge_inactive(self):
        batch = batch_1d(0.0, [0.0], [5.0])
        grad = triplet_grad(batch, identity_1d(), margin=0.5)
        np.testing.assert_array_equal(grad, np.zeros((1, 1)))

    def test_zero_weight_matrix_is_stationary(self):
        rng = np.random.default_rng(1)
        batch = TripletBatch(rng.normal(size=4), rng.normal(size=(2, 4)),
                             rng.normal(size=(3, 4)))
        emb = EmbeddingMap(np.zeros((2, 4)))
        assert triplet_loss(batch, emb, margin=0.5) == pytest.approx(0.5)
        np.testing.assert_array_equal(triplet_grad(batch, emb, margin=0.5),
                                      np.zeros((2, 4)))

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(2)
        h, margin = 1e-5, 0.5
        checked = 0
        while checked < 20:
            batch = TripletBatch(rng.normal(size=4), rng.normal(size=(2, 4)),
                                 rng.normal(size=(5, 4)))
            W = rng.normal(scale=0.6, size=(2, 4))
            emb = EmbeddingMap(W)
            d_pos = ((emb.embed(batch.query) - emb.embed(batch.positives)) ** 2
                     ).sum(axis=1)
            d_neg = ((emb.embed(batch.query) - emb.embed(batch.negatives)) ** 2
                     ).sum(axis=1)
            hinge = np.sort(margin + d_pos.min() - d_neg)
            # stay away from every kink: hinge activation, negative argmax,
            # and positive argmin switches must all be h-stable
            if abs(hinge[-1]) < 1e-3 or hinge[-1] - hinge[-2] < 1e-3:
                continue
            gaps = np.sort(d_pos)
            if len(gaps) > 1 and gaps[1] - gaps[0] < 1e-3:
                continue
            analytic = triplet_grad(batch, emb, margin)
            numeric = np.zeros_like(W)
            for r in range(W.shape[0]):
                for c in range(W.shape[1]):
                    up, down = W.copy(), W.copy()
                    up[r, c] += h
                    down[r, c] -= h
                    numeric[r, c] = (
                        triplet_loss(batch, EmbeddingMap(up), margin)
                        - triplet_loss(batch, EmbeddingMap(down), margin)
                    ) / (2 * h)
            denom = max(np.linalg.norm(numeric), 1e-12)
            assert np.linalg.norm(analytic - numeric) / denom < 1e-4
            checked += 1


class TestSelectTriplets:
    def test_no_negatives_means_no_batches(self):
        poses = [Pose(np.array([float(i), 0.0, 0.0]) * 0.3, np.eye(3))
                 for i in range(3)]
        descriptors = np.eye(3)
        cfg = TripletConfig()
        assert select_triplets(poses, descriptors, cfg, seed=0) == []

    def test_line_trajectory_band_structure(self):
        poses = line_poses(101)
        rng = np.random.default_rng(3)
        descriptors = rng.normal(size=(101, 4))
        cfg = TripletConfig()
        batches = select_triplets(poses, descriptors, cfg, seed=0)
        assert batches  # the middle of the line has both bands populated
        for batch in batches:
            qi = int(np.argmin(np.linalg.norm(descriptors - batch.query,
                                              axis=1)))
            for p in batch.positives:
                pi = int(np.argmin(np.linalg.norm(descriptors - p, axis=1)))
                assert abs(pi - qi) <= 10
            for n in batch.negatives:
                ni = int(np.argmin(np.linalg.norm(descriptors - n, axis=1)))
                assert abs(ni - qi) > 50

    def test_same_seed_same_batches(self):
        poses = line_poses(101)
        rng = np.random.default_rng(4)
        descriptors = rng.normal(size=(101, 4))
        cfg = TripletConfig()
        a = select_triplets(poses, descriptors, cfg, seed=9)
        b = select_triplets(poses, descriptors, cfg, seed=9)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.query, y.query)
            np.testing.assert_array_equal(x.positives, y.positives)
            np.testing.assert_array_equal(x.negatives, y.negatives)


class TestMineHardNegatives:
    def test_returns_closest_candidates(self):
        emb = identity_1d()
        candidates = np.array([[0.9], [0.1], [0.5]])
        picked = mine_hard_negatives(np.array([0.0]), candidates, emb, 2)
        np.testing.assert_array_equal(picked, [[0.1], [0.5]])

    def test_shortage_returns_all(self):
        emb = identity_1d()
        picked = mine_hard_negatives(np.array([0.0]), np.array([[0.7]]), emb, 10)
        np.testing.assert_array_equal(picked, [[0.7]])

    def test_ties_keep_lower_index_first(self):
        emb = identity_1d()
        candidates = np.array([[0.5], [-0.5], [0.2]])
        picked = mine_hard_negatives(np.array([0.0]), candidates, emb, 2)
        # 0.2 is nearest; 0.5 and -0.5 tie, the earlier one wins
        np.testing.assert_array_equal(picked, [[0.2], [0.5]])


class TestEmbeddingMap:
    def test_identity_truncates_to_output_dim(self):
        emb = EmbeddingMap.identity(8, output_dim=3)
        np.testing.assert_array_equal(emb.W, np.eye(3, 8))

    def test_identity_caps_at_input_dim(self):
        emb = EmbeddingMap.identity(4, output_dim=100)
        np.testing.assert_array_equal(emb.W, np.eye(4))

    def test_rejects_wider_than_tall(self):
        with pytest.raises(ValueError):
            EmbeddingMap(np.zeros((5, 3)))

    def test_embed_single_and_stack(self):
        emb = EmbeddingMap(np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]))
        np.testing.assert_array_equal(emb.embed(np.array([1.0, 1.0, 1.0])),
                                      [1.0, 2.0])
        np.testing.assert_array_equal(
            emb.embed(np.array([[1.0, 1.0, 1.0], [0.0, 1.0, 5.0]])),
            [[1.0, 2.0], [0.0, 2.0]])


class TestTrainMetric:
    def two_cluster_data(self, seed=0):
        from bevloc.synthetic import aliased_sites

        descriptors, poses, _, _ = aliased_sites(np.random.default_rng(seed))
        return descriptors, poses

    def test_zero_epochs_returns_initialization(self):
        descriptors, poses = self.two_cluster_data()
        emb, trace = train_metric(descriptors, poses, TripletConfig(),
                                  epochs=0, seed=0)
        np.testing.assert_array_equal(emb.W, np.eye(32))
        assert len(trace) == 0

    def test_mean_loss_descends_on_two_clusters(self):
        descriptors, poses = self.two_cluster_data()
        _, trace = train_metric(descriptors, poses, TripletConfig(),
                                epochs=20, seed=0)
        assert len(trace) == 20
        assert trace[-1] < trace[0]

    def test_same_seed_identical_weights(self):
        descriptors, poses = self.two_cluster_data()
        a, _ = train_metric(descriptors, poses, TripletConfig(), epochs=12,
                            seed=7)
        b, _ = train_metric(descriptors, poses, TripletConfig(), epochs=12,
                            seed=7)
        np.testing.assert_array_equal(a.W, b.W)

    def test_no_valid_triplets_is_error(self):
        rng = np.random.default_rng(5)
        descriptors = rng.normal(size=(3, 4))
        poses = [Pose(np.array([float(i) * 0.1, 0.0, 0.0]), np.eye(3))
                 for i in range(3)]
        with pytest.raises(ValueError):
            train_metric(descriptors, poses, TripletConfig(), epochs=1, seed=0)

    def test_epoch_counter_advances(self):
        descriptors, poses = self.two_cluster_data()
        emb, _ = train_metric(descriptors, poses, TripletConfig(), epochs=3,
                              seed=0)
        assert emb.epoch == 3


class TestEmbeddingPersistence:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(6)
        emb = EmbeddingMap(rng.normal(size=(4, 12)))
        path = tmp_path / "embedding.bin"
        save_embedding(emb, path)
        again = load_embedding(path)
        np.testing.assert_array_equal(again.W, emb.W)

    def test_wrong_magic_is_format_error(self, tmp_path):
        path = tmp_path / "embedding.bin"
        save_embedding(EmbeddingMap(np.eye(2, 3)), path)
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_embedding(path)

    def test_truncated_file_is_format_error(self, tmp_path):
        path = tmp_path / "embedding.bin"
        save_embedding(EmbeddingMap(np.eye(2, 3)), path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_embedding(path)
