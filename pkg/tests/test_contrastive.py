import math

import numpy as np
import pytest

import oracles
from pseudolabel.contrastive import (
    ContrastiveConfig,
    ObjectFeature,
    contrastive_weights,
    extract_object_features,
    features_to_csv,
    supcon_grad_arrays,
    supcon_loss,
    supcon_loss_arrays,
)
from pseudolabel.geometry import FeatureMap


def unit(*v):
    arr = np.asarray(v, dtype=np.float64)
    return arr / np.linalg.norm(arr)


def random_unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class TestContrastiveWeights:
    def test_single_object(self):
        np.testing.assert_allclose(contrastive_weights([0.7], [0.3]), [1.0])

    def test_symmetric_pair(self):
        np.testing.assert_allclose(contrastive_weights([0.8, 0.8], [0.4, 0.4]), [0.5, 0.5])

    def test_example_values(self):
        w = contrastive_weights([1.0, 1.0], [0.25, 0.81], exponent=0.5)
        np.testing.assert_allclose(w, [5 / 6, 1 / 6], atol=1e-9)

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 10))
            c = rng.uniform(0, 1, n)
            tau = rng.uniform(0, 0.99, n)
            got = contrastive_weights(c, tau, 0.5)
            want = oracles.contrastive_weights(c, tau, 0.5)
            np.testing.assert_allclose(got, want, atol=1e-9)

    def test_sums_to_one_and_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 20))
            w = contrastive_weights(rng.uniform(0, 1, n), rng.uniform(0, 0.999, n))
            assert w.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(w >= 0)

    def test_monotone_in_confidence(self):
        base = contrastive_weights([0.3, 0.5], [0.4, 0.4])
        bumped = contrastive_weights([0.6, 0.5], [0.4, 0.4])
        assert bumped[0] > base[0]

    def test_all_tau_one_raises(self):
        with pytest.raises(ValueError):
            contrastive_weights([0.5, 0.5], [1.0, 1.0])

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            contrastive_weights([], [])


def obj(vec, class_id, role="anchor"):
    return ObjectFeature(feature=vec, class_id=class_id, role=role)


class TestSupConLoss:
    def test_identical_features_zero_loss(self):
        z = unit(1.0, 0.0)
        anchors = [obj(z, 0)]
        candidates = [obj(z, 0), obj(z, 1)]
        loss, skipped = supcon_loss(anchors, candidates, [1.0], ContrastiveConfig(temperature=1.0))
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert skipped == 0

    def test_orthogonal_negative(self):
        anchors = [obj(unit(1, 0), 0)]
        candidates = [obj(unit(1, 0), 0), obj(unit(0, 1), 1)]
        cfg = ContrastiveConfig(temperature=1.0)
        loss, _ = supcon_loss(anchors, candidates, [1.0], cfg)
        assert loss == pytest.approx(-1.0, abs=1e-9)

    def test_half_weight(self):
        anchors = [obj(unit(1, 0), 0)]
        candidates = [obj(unit(1, 0), 0), obj(unit(0, 1), 1)]
        cfg = ContrastiveConfig(temperature=1.0)
        loss, _ = supcon_loss(anchors, candidates, [0.5], cfg)
        assert loss == pytest.approx(-math.log(0.5 * math.e), abs=1e-9)

    def test_matches_oracle_both_modes(self):
        rng = np.random.default_rng(2)
        for mode in ("as_written", "standard"):
            for _ in range(30):
                n_a, n_c, dim = rng.integers(1, 6), rng.integers(2, 8), 5
                a_feats = np.stack([random_unit(rng, dim) for _ in range(n_a)])
                c_feats = np.stack([random_unit(rng, dim) for _ in range(n_c)])
                a_cls = rng.integers(0, 3, n_a)
                c_cls = rng.integers(0, 3, n_c)
                w = rng.uniform(0.1, 1.0, n_a)
                cfg = ContrastiveConfig(temperature=0.07, denominator_mode=mode)
                try:
                    got = supcon_loss_arrays(a_feats, a_cls, c_feats, c_cls, w, cfg)
                except ValueError:
                    continue
                want = oracles.supcon(a_feats, a_cls, c_feats, c_cls, w, 0.07, mode)
                assert got[0] == pytest.approx(want[0], abs=1e-9)
                assert got[1] == want[1]

    def test_skip_counter(self):
        anchors = [obj(unit(1, 0), 0), obj(unit(0, 1), 5)]  # class 5 has no positives
        candidates = [obj(unit(1, 0), 0), obj(unit(0, 1), 1)]
        loss, skipped = supcon_loss(anchors, candidates, [0.5, 0.5])
        assert skipped == 1
        assert np.isfinite(loss)

    def test_all_skipped_raises(self):
        anchors = [obj(unit(1, 0), 5)]
        candidates = [obj(unit(0, 1), 1)]
        with pytest.raises(ValueError):
            supcon_loss(anchors, candidates, [1.0])

    def test_as_written_needs_negatives(self):
        # single-class candidate pool: as_written skips, standard does not
        anchors = [obj(unit(1, 0), 0)]
        candidates = [obj(unit(0.6, 0.8), 0), obj(unit(0, 1), 0)]
        with pytest.raises(ValueError):
            supcon_loss(anchors, candidates, [1.0], ContrastiveConfig(denominator_mode="as_written"))
        loss, skipped = supcon_loss(
            anchors, candidates, [1.0], ContrastiveConfig(denominator_mode="standard")
        )
        assert skipped == 0 and np.isfinite(loss)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        dim = 6
        a_feats = np.stack([random_unit(rng, dim) for _ in range(4)])
        c_feats = np.stack([random_unit(rng, dim) for _ in range(7)])
        a_cls = np.array([0, 1, 0, 1])
        c_cls = np.array([0, 0, 0, 1, 1, 1, 0])
        w = rng.uniform(0.1, 1.0, 4)
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        base, _ = supcon_loss_arrays(a_feats, a_cls, c_feats, c_cls, w)
        rotated, _ = supcon_loss_arrays(a_feats @ q.T, a_cls, c_feats @ q.T, c_cls, w)
        assert rotated == pytest.approx(base, abs=1e-9)

    def test_positive_rotation_decreases_loss(self):
        # rotate the positive toward the anchor: loss must drop
        anchor = unit(1.0, 0.0)
        neg = unit(0.0, 1.0)
        cfg = ContrastiveConfig(temperature=0.5)
        losses = []
        for angle in (1.2, 0.8, 0.4, 0.1):
            pos = np.array([math.cos(angle), math.sin(angle)])
            value, _ = supcon_loss_arrays(
                np.array([anchor]), [0], np.stack([pos, neg]), [0, 1], [1.0], cfg
            )
            losses.append(value)
        assert all(b < a for a, b in zip(losses, losses[1:]))


def fd_gradient(loss_fn, feats, h=1e-5):
    """Central-difference gradient of a scalar loss over a feature array."""
    grad = np.zeros_like(feats)
    for idx in np.ndindex(*feats.shape):
        bumped = feats.copy()
        bumped[idx] += h
        hi = loss_fn(bumped)
        bumped[idx] -= 2 * h
        lo = loss_fn(bumped)
        grad[idx] = (hi - lo) / (2 * h)
    return grad


class TestSupConGradient:
    @pytest.mark.parametrize("mode", ["as_written", "standard"])
    def test_finite_difference_matches_analytic(self, mode):
        rng = np.random.default_rng(4)
        cfg = ContrastiveConfig(temperature=0.07, denominator_mode=mode)
        for _ in range(10):
            n_a, n_c, dim = 3, 5, 4
            a_feats = np.stack([random_unit(rng, dim) for _ in range(n_a)])
            c_feats = np.stack([random_unit(rng, dim) for _ in range(n_c)])
            a_cls = rng.integers(0, 2, n_a)
            c_cls = rng.integers(0, 2, n_c)
            w = rng.uniform(0.2, 1.0, n_a)
            grad_a, grad_c = supcon_grad_arrays(a_feats, a_cls, c_feats, c_cls, w, cfg)
            fd_a = fd_gradient(
                lambda f: supcon_loss_arrays(f, a_cls, c_feats, c_cls, w, cfg)[0], a_feats
            )
            fd_c = fd_gradient(
                lambda f: supcon_loss_arrays(a_feats, a_cls, f, c_cls, w, cfg)[0], c_feats
            )
            scale = max(np.abs(grad_a).max(), np.abs(grad_c).max(), 1.0)
            assert np.abs(grad_a - fd_a).max() / scale < 1e-4
            assert np.abs(grad_c - fd_c).max() / scale < 1e-4


class TestExtractObjectFeatures:
    def test_constant_map_identical_features(self):
        fm = FeatureMap(np.full((4, 8, 8), 3.0))
        boxes = np.array([[0, 0, 4, 4], [3, 3, 7, 7]], dtype=float)
        feats, skipped = extract_object_features(fm, boxes, [0, 1], pool_size=2)
        assert skipped == 0
        assert np.dot(feats[0].feature, feats[1].feature) == pytest.approx(1.0, abs=1e-12)

    def test_scale_invariance_of_normalized_features(self):
        fm_a = FeatureMap(np.full((2, 6, 6), 1.5))
        fm_b = FeatureMap(np.full((2, 6, 6), 42.0))
        box = np.array([1, 1, 5, 5], dtype=float)
        fa, _ = extract_object_features(fm_a, box, [0], pool_size=2)
        fb, _ = extract_object_features(fm_b, box, [0], pool_size=2)
        assert np.dot(fa[0].feature, fb[0].feature) == pytest.approx(1.0, abs=1e-12)

    def test_ramp_map_dot_matches_roi_oracle(self):
        h = w = 12
        vals = np.tile(np.arange(w, dtype=np.float64), (1, h, 1)).reshape(1, h, w)
        fm = FeatureMap(vals, stride=1.0)
        boxes = np.array([[2.0, 2.0, 8.0, 8.0], [3.0, 4.0, 10.0, 9.0]])
        feats, _ = extract_object_features(fm, boxes, [0, 0], pool_size=3, samples_per_bin=3)
        expected = []
        for box in boxes:
            ramp = oracles.ramp_roi_means(box, 1.0, 3, 3, "x").ravel()
            expected.append(ramp / np.linalg.norm(ramp))
        want = float(np.dot(expected[0], expected[1]))
        got = float(np.dot(feats[0].feature, feats[1].feature))
        assert got == pytest.approx(want, abs=1e-6)

    def test_degenerate_box_skipped_with_counter(self):
        fm = FeatureMap(np.ones((1, 4, 4)))
        boxes = np.array([[0, 0, 2, 2], [10, 10, 12, 12]], dtype=float)
        feats, skipped = extract_object_features(fm, boxes, [0, 1], pool_size=2)
        assert len(feats) == 1
        assert skipped == 1

    def test_zero_map_skipped(self):
        fm = FeatureMap(np.zeros((1, 4, 4)))
        feats, skipped = extract_object_features(fm, np.array([[0, 0, 2, 2.0]]), [0])
        assert feats == [] and skipped == 1

    def test_confidences_attached(self):
        fm = FeatureMap(np.ones((1, 4, 4)))
        feats, _ = extract_object_features(
            fm, np.array([[0, 0, 2, 2.0]]), [3], confidences=[0.7], role="candidate"
        )
        assert feats[0].class_id == 3
        assert feats[0].confidence == 0.7
        assert feats[0].role == "candidate"


def test_object_feature_requires_unit_norm():
    with pytest.raises(ValueError):
        ObjectFeature(feature=np.array([1.0, 1.0]), class_id=0)


def test_features_to_csv_round_trippable():
    feats = [
        ObjectFeature(unit(1, 0), 0, confidence=0.5),
        ObjectFeature(unit(0.6, 0.8), 1, confidence=0.25),
    ]
    text = features_to_csv(feats)
    lines = text.strip().split("\n")
    assert lines[0] == "object_id,class_id,confidence,f0,f1"
    cells = lines[2].split(",")
    assert int(cells[0]) == 1 and int(cells[1]) == 1
    assert float(cells[2]) == 0.25
    np.testing.assert_allclose([float(cells[3]), float(cells[4])], unit(0.6, 0.8))


def test_config_validation():
    with pytest.raises(ValueError):
        ContrastiveConfig(temperature=0.0)
    with pytest.raises(ValueError):
        ContrastiveConfig(threshold_exponent=0.0)
    with pytest.raises(ValueError):
        ContrastiveConfig(denominator_mode="bogus")
