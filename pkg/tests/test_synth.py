import numpy as np
import pytest

from gpproxy.errors import InvalidSpec
from gpproxy.synth import SyntheticSpec, generate_extra_split, generate_synthetic
from gpproxy.training import TrainConfig, init_proxy, train_proxy


class TestSyntheticSpec:
    def test_sizes_must_cover_classes(self):
        with pytest.raises(InvalidSpec):
            SyntheticSpec(n_train=2, n_test=10, V=4)

    def test_parameter_validation(self):
        with pytest.raises(InvalidSpec):
            SyntheticSpec(V=1)
        with pytest.raises(InvalidSpec):
            SyntheticSpec(separation=-1.0)
        with pytest.raises(InvalidSpec):
            SyntheticSpec(blobs_per_class=0)


class TestGenerateSynthetic:
    def test_same_seed_identical_datasets(self):
        spec = SyntheticSpec(n_train=50, n_test=20, d=4, V=3, seed=9)
        a_train, a_test = generate_synthetic(spec)
        b_train, b_test = generate_synthetic(spec)
        assert np.array_equal(a_train.features, b_train.features)
        assert np.array_equal(a_test.features, b_test.features)
        assert np.array_equal(a_train.labels, b_train.labels)

    def test_binary_symmetric_blobs_are_balanced(self):
        spec = SyntheticSpec(n_train=400, n_test=100, d=4, V=2, blobs_per_class=1, seed=3)
        train, _ = generate_synthetic(spec)
        prior = float(np.mean(train.labels == 0))
        assert prior == pytest.approx(0.5, abs=0.01)  # balanced by construction

    def test_wide_separation_is_linearly_learnable(self):
        # Full fine-tune of a linear proxy must ace an easy geometry.
        spec = SyntheticSpec(
            n_train=400, n_test=120, d=6, V=3, blobs_per_class=1,
            separation=8.0, noise=0.4, seed=5,
        )
        train, test = generate_synthetic(spec)
        minus = init_proxy("linear_softmax", d=train.d, v=train.V, seed=0)
        result = train_proxy(TrainConfig(epochs=3, learning_rate=0.2, seed=0), train, minus)
        from gpproxy.training import forward_batch

        test_acc = float(
            (forward_batch(result.params, test.features).argmax(axis=1) == test.labels).mean()
        )
        assert test_acc >= 0.99

    def test_train_and_test_share_geometry(self):
        spec = SyntheticSpec(n_train=200, n_test=200, d=4, V=2, separation=6.0, noise=0.3, seed=1)
        train, test = generate_synthetic(spec)
        # Class-0 means should coincide across splits (same blob centers).
        mu_train = train.features[train.labels == 0].mean(axis=0)
        mu_test = test.features[test.labels == 0].mean(axis=0)
        assert np.linalg.norm(mu_train - mu_test) < 1.0

    def test_extra_split_deterministic_and_distinct(self):
        spec = SyntheticSpec(n_train=50, n_test=20, d=4, V=2, seed=2)
        a = generate_extra_split(spec, 30, "pretrain")
        b = generate_extra_split(spec, 30, "pretrain")
        other = generate_extra_split(spec, 30, "other")
        assert np.array_equal(a.features, b.features)
        assert not np.array_equal(a.features, other.features)
        assert a.examples[0].id.startswith("pretrain-")
