import numpy as np
import pytest
from sklearn.base import clone

from crossmask.selector import CrossDomainMaskSelector

from helpers import make_pair


def planted_views(d=20, n=60, planted=(0, 1, 2), effect=6.0, seed=0):
    pair = make_pair(d=d, n=n, planted=planted, effect=effect, seed=seed, standardize=False)
    return ([pair.domain_a.samples, pair.domain_b.samples],
            [pair.domain_a.labels, pair.domain_b.labels])


def quick_selector(**overrides):
    params = dict(epochs=800, batch_size=8, hidden_dim=16, latent_dim=4,
                  learning_rate=3e-3, sparsity_weight=2e-3, random_state=0)
    params.update(overrides)
    return CrossDomainMaskSelector(**params)


class TestSklearnSurface:
    def test_get_params_roundtrip(self):
        sel = quick_selector(epochs=123)
        params = sel.get_params()
        assert params["epochs"] == 123
        assert params["reconstruction_weight"] == 10.0
        cloned = clone(sel)
        assert cloned.get_params() == params

    def test_set_params(self):
        sel = quick_selector()
        sel.set_params(sparsity_weight=0.5)
        assert sel.sparsity_weight == 0.5

    def test_unfitted_raises(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            quick_selector().get_support()


@pytest.fixture(scope="module")
def fitted():
    Xs, ys = planted_views()
    return quick_selector().fit(Xs, ys), Xs, ys


class TestFit:
    def test_attributes(self, fitted):
        sel, Xs, _ = fitted
        assert sel.n_features_in_ == 20
        assert sel.mask_weights_.shape == (20,)
        assert np.array_equal(sel.feature_importances_, np.abs(sel.mask_weights_))
        assert sel.classes_.tolist() == [0, 1]
        assert sel.n_views_ == 2

    def test_planted_features_dominate(self, fitted):
        sel, _, _ = fitted
        planted_mean = sel.feature_importances_[:3].mean()
        background_mean = sel.feature_importances_[3:].mean()
        assert planted_mean > 2.0 * background_mean

    def test_support_and_transform(self, fitted):
        sel, Xs, _ = fitted
        support = sel.get_support()
        assert support.dtype == bool and support.shape == (20,)
        assert support.sum() == len(sel.get_support(indices=True))
        outs = sel.transform(Xs)
        assert len(outs) == 2
        assert outs[0].shape == (60, support.sum())
        single = sel.transform(Xs[0])
        assert single.shape == (60, support.sum())

    def test_predict_and_score(self, fitted):
        sel, Xs, ys = fitted
        preds = sel.predict(Xs)
        assert len(preds) == 2
        assert set(np.unique(preds[0])) <= {0, 1}
        score = sel.score(Xs, ys)
        assert 0.0 <= score <= 1.0

    def test_deterministic_per_random_state(self):
        Xs, ys = planted_views()
        cfg = dict(epochs=30)
        m1 = quick_selector(**cfg).fit(Xs, ys).mask_weights_
        m2 = quick_selector(**cfg).fit(Xs, ys).mask_weights_
        assert np.array_equal(m1, m2)


class TestValidation:
    def test_mismatched_feature_counts(self):
        Xs, ys = planted_views()
        Xs = [Xs[0], Xs[1][:, :10]]
        with pytest.raises(ValueError, match="same feature count"):
            quick_selector().fit(Xs, ys)

    def test_too_many_views(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        y = np.array([0, 1] * 5)
        with pytest.raises(ValueError, match="1 or 2 views"):
            quick_selector().fit([X, X, X], [y, y, y])

    def test_non_binary_labels(self):
        X = np.random.default_rng(0).normal(size=(12, 4))
        y = np.arange(12) % 3
        with pytest.raises(ValueError, match="two classes"):
            quick_selector().fit([X], [y])

    def test_inconsistent_lengths(self):
        X = np.random.default_rng(0).normal(size=(12, 4))
        y = np.array([0, 1] * 3)
        with pytest.raises(ValueError):
            quick_selector().fit([X], [y])


class TestSingleView:
    def test_fit_single_view(self):
        Xs, ys = planted_views()
        sel = quick_selector(epochs=50).fit(Xs[0], ys[0])
        assert sel.n_views_ == 1
        assert sel.mask_weights_.shape == (20,)
        preds = sel.predict(Xs[0])
        assert preds.shape == (60,)

    def test_string_labels_roundtrip(self):
        Xs, ys = planted_views()
        named = np.array(["ctrl", "case"])[ys[0]]
        sel = quick_selector(epochs=30).fit(Xs[0], named)
        assert sel.classes_.tolist() == ["case", "ctrl"]  # lexicographic
        preds = sel.predict(Xs[0])
        assert set(np.unique(preds)) <= {"case", "ctrl"}
