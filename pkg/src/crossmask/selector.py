"""Scikit-learn style estimator wrapping one training run.

``fit`` takes one or two views (domains) holding the same features in the same
column order, learns the shared mask, and exposes the usual selector surface:
``get_support`` / ``transform`` pick the features whose final |weight| clears
an elbow threshold, ``predict`` classifies through the shared latent space.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .data import ExpressionDataset, PairedDomainData
from .network import embed
from .objective import LossWeights
from .postprocess import elbow_threshold
from .training import TrainConfig, train_one

__all__ = ["CrossDomainMaskSelector"]


def _as_views(Xs) -> list[np.ndarray]:
    if isinstance(Xs, np.ndarray) and Xs.ndim == 2:
        return [Xs]
    views = list(Xs)
    if not 1 <= len(views) <= 2:
        raise ValueError(f"expected 1 or 2 views, got {len(views)}")
    return views


class CrossDomainMaskSelector(BaseEstimator):
    """Sparse feature selection across one or two domains.

    Parameters mirror the training configuration; all four loss weights and the
    network widths are exposed. With ``standardize=True`` (default) each view is
    z-scored per feature at fit time and the same statistics are reused for
    ``predict`` / ``score``.

    Attributes (after fit): ``mask_weights_``, ``feature_importances_``,
    ``threshold_``, ``support_``, ``classes_``, ``n_features_in_``, ``model_``.
    """

    def __init__(
        self,
        epochs: int = 20000,
        batch_size: int = 32,
        reconstruction_weight: float = 10.0,
        kl_weight: float = 1e-4,
        classification_weight: float = 1.0,
        sparsity_weight: float = 1e-4,
        learning_rate: float = 1e-4,
        hidden_dim: int = 1024,
        latent_dim: int = 128,
        standardize: bool = True,
        random_state: int = 0,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.reconstruction_weight = reconstruction_weight
        self.kl_weight = kl_weight
        self.classification_weight = classification_weight
        self.sparsity_weight = sparsity_weight
        self.learning_rate = learning_rate
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.standardize = standardize
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            loss_weights=LossWeights(
                reconstruction=self.reconstruction_weight,
                kl=self.kl_weight,
                classification=self.classification_weight,
                sparsity=self.sparsity_weight,
            ),
            learning_rate=self.learning_rate,
            hidden_dim=self.hidden_dim,
            latent_dim=self.latent_dim,
            seed=self.random_state,
        )

    def _scale(self, view_index: int, X: np.ndarray) -> np.ndarray:
        if not self.standardize:
            return X
        mean = self.view_means_[view_index]
        scale = self.view_scales_[view_index]
        return np.where(scale > 0, (X - mean) / np.where(scale > 0, scale, 1.0), 0.0)

    def fit(self, Xs, ys):
        """Train on one or two (X, y) views with a common feature order."""
        views = [check_array(X, dtype=np.float64) for X in _as_views(Xs)]
        if _is_sequence_of_arrays(ys):
            targets = [np.asarray(t).ravel() for t in ys]
        else:
            targets = [np.asarray(ys).ravel()]
        if len(targets) != len(views):
            raise ValueError(f"{len(views)} views but {len(targets)} label vectors")
        for X, y in zip(views, targets):
            check_consistent_length(X, y)
        d = views[0].shape[1]
        if any(X.shape[1] != d for X in views):
            raise ValueError("all views must share the same feature count")

        classes = np.unique(np.concatenate([np.asarray(t).ravel() for t in targets]))
        if classes.size != 2:
            raise ValueError(f"expected exactly two classes, found {classes.size}")
        self.classes_ = classes
        encoded = [np.searchsorted(classes, t) for t in targets]

        self.view_means_ = [X.mean(axis=0) for X in views]
        self.view_scales_ = [X.std(axis=0) for X in views]
        scaled = [self._scale(i, X) for i, X in enumerate(views)]

        features = tuple(f"f{j}" for j in range(d))
        names = (str(classes[0]), str(classes[1]))
        datasets = [
            ExpressionDataset(f"view_{i}", features, X, y, names)
            for i, (X, y) in enumerate(zip(scaled, encoded))
        ]
        data = (
            PairedDomainData(datasets[0], datasets[1], features)
            if len(datasets) == 2
            else datasets[0]
        )

        record = train_one(data, self._train_config())
        self.model_ = record.model
        self.mask_weights_ = record.final_mask
        self.feature_importances_ = np.abs(record.final_mask)
        self.n_features_in_ = d
        self.n_views_ = len(views)
        peak = float(self.feature_importances_.max())
        if peak == 0.0:
            self.threshold_ = 0.0
            self.support_ = np.zeros(d, dtype=bool)
        else:
            normalized = self.feature_importances_ / peak
            self.threshold_ = elbow_threshold(normalized)
            self.support_ = normalized >= self.threshold_
        return self

    def get_support(self, indices: bool = False) -> np.ndarray:
        check_is_fitted(self, "support_")
        return np.flatnonzero(self.support_) if indices else self.support_.copy()

    def transform(self, Xs):
        """Restrict columns to the selected features (per view)."""
        check_is_fitted(self, "support_")
        single = isinstance(Xs, np.ndarray) and Xs.ndim == 2
        views = [check_array(X, dtype=np.float64) for X in _as_views(Xs)]
        out = []
        for X in views:
            if X.shape[1] != self.n_features_in_:
                raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
            out.append(X[:, self.support_])
        return out[0] if single else out

    def _view_probabilities(self, view_index: int, X: np.ndarray) -> np.ndarray:
        import torch

        vae = self.model_.vae_a if view_index == 0 else self.model_.vae_b
        mu = embed(self.model_, vae, self._scale(view_index, X))
        with torch.no_grad():
            probs = self.model_.classifier(torch.as_tensor(mu, dtype=self.model_.dtype))
        return probs.numpy()

    def predict(self, Xs):
        """Predicted class per sample, per view (z = mu, ties at 0.5 go to class 1)."""
        check_is_fitted(self, "model_")
        single = isinstance(Xs, np.ndarray) and Xs.ndim == 2
        views = [check_array(X, dtype=np.float64) for X in _as_views(Xs)]
        if len(views) != self.n_views_:
            raise ValueError(f"fitted with {self.n_views_} views, got {len(views)}")
        preds = [
            self.classes_[(self._view_probabilities(i, X) >= 0.5).astype(int)]
            for i, X in enumerate(views)
        ]
        return preds[0] if single else preds

    def score(self, Xs, ys) -> float:
        """Mean accuracy over views."""
        single = isinstance(Xs, np.ndarray) and np.ndim(Xs) == 2
        preds = self.predict(Xs)
        if single:
            return float(np.mean(np.asarray(preds) == np.asarray(ys)))
        return float(np.mean([np.mean(np.asarray(p) == np.asarray(y)) for p, y in zip(preds, ys)]))


def _is_sequence_of_arrays(ys) -> bool:
    if isinstance(ys, np.ndarray):
        return ys.ndim > 1
    return isinstance(ys, (list, tuple)) and len(ys) > 0 and np.ndim(ys[0]) >= 1
