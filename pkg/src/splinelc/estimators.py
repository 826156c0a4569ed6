"""scikit-learn style wrappers around :func:`~splinelc.learn.train`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .adversarial import AttackConfig, robust_accuracy
from .lcprobe import ProbeConfig, batch_lc
from .learn.datasets import Dataset
from .learn.train import TrainConfig, train
from .netcore import forward, init_network

__all__ = ["SplineMLPClassifier", "SplineMLPRegressor"]


class _SplineMLPBase(BaseEstimator):
    _loss = None

    def __init__(
        self,
        hidden_layer_sizes=(200, 200, 200, 200),
        activation="relu",
        init_scale=1.0,
        steps=1000,
        batch_size=200,
        learning_rate=1e-3,
        weight_decay=0.0,
        weight_decay_mode="decoupled",
        betas=(0.9, 0.999),
        adam_eps=1e-8,
        n_checkpoints=60,
        checkpoints=None,
        callbacks=None,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.init_scale = init_scale
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.weight_decay_mode = weight_decay_mode
        self.betas = betas
        self.adam_eps = adam_eps
        self.n_checkpoints = n_checkpoints
        self.checkpoints = checkpoints
        self.callbacks = callbacks
        self.random_state = random_state

    def _train_config(self, n):
        return TrainConfig(
            steps=int(self.steps),
            batch_size=min(int(self.batch_size), n),
            lr=float(self.learning_rate),
            weight_decay=float(self.weight_decay),
            weight_decay_mode=self.weight_decay_mode,
            betas=tuple(self.betas),
            eps=float(self.adam_eps),
            seed=int(self.random_state or 0),
            checkpoints=self.checkpoints,
            n_checkpoints=int(self.n_checkpoints),
            loss=self._loss,
        )

    def _fit(self, train_ds, test_ds, out_dim):
        seed = int(self.random_state or 0)
        arch = [train_ds.dim, *map(int, self.hidden_layer_sizes), out_dim]
        self.network_ = init_network(arch, self.activation, seed=seed, scale=self.init_scale)
        self.n_features_in_ = train_ds.dim
        self.trajectory_ = train(self.network_, train_ds, test_ds, self._train_config(len(train_ds)), self.callbacks or ())
        return self

    def _output(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return forward(self.network_, X).output

    def local_complexity(self, X, n_directions=25, radius=0.005, random_state=0, point_class="train"):
        """Mean LC and 99% CI over the rows of ``X`` (see :func:`splinelc.lcprobe.batch_lc`)."""
        check_is_fitted(self, "network_")
        cfg = ProbeConfig(int(n_directions), float(radius), int(random_state))
        return batch_lc(self.network_, check_array(X, dtype=np.float64), cfg, point_class)


class SplineMLPClassifier(ClassifierMixin, _SplineMLPBase):
    """Dense ReLU-family classifier trained with Adam.

    After ``fit``: ``network_`` (the trained :class:`~splinelc.netcore.Network`),
    ``trajectory_`` (checkpoint log), ``classes_``.
    """

    _loss = "cross_entropy"

    def fit(self, X, y, X_test=None, y_test=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = np.unique(y, return_inverse=True)
        k = len(self.classes_)
        train_ds = Dataset(X, codes, "train", num_classes=k)
        test_ds = None
        if X_test is not None:
            Xt, yt = check_X_y(X_test, y_test, dtype=np.float64)
            test_ds = Dataset(Xt, np.searchsorted(self.classes_, yt), "test", num_classes=k)
        return self._fit(train_ds, test_ds, k)

    def decision_function(self, X):
        return self._output(X)

    def predict_proba(self, X):
        z = self._output(X)
        z = np.exp(z - z.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        z = self._output(X)
        return self.classes_[np.argmax(z, axis=1)]

    def robust_score(self, X, y, epsilon, alpha=None, steps=100, data_range=(0.0, 1.0), random_start=True, random_state=0):
        """Accuracy under an L-infinity PGD attack of budget ``epsilon``."""
        check_is_fitted(self, "network_")
        X, y = check_X_y(X, y, dtype=np.float64)
        alpha = min(0.0156, epsilon) if alpha is None else alpha
        cfg = AttackConfig(epsilon, alpha if epsilon > 0 else 0.0156, steps, random_state, tuple(data_range), random_start)
        return robust_accuracy(self.network_, X, np.searchsorted(self.classes_, y), cfg)


class SplineMLPRegressor(RegressorMixin, _SplineMLPBase):
    """Dense ReLU-family regressor (mean squared error)."""

    _loss = "mse"

    def fit(self, X, y, X_test=None, y_test=None):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True, y_numeric=True)
        self._single_output = y.ndim == 1
        Y = y.reshape(len(y), -1)
        train_ds = Dataset(X, Y, "train")
        test_ds = None
        if X_test is not None:
            Xt, yt = check_X_y(X_test, y_test, dtype=np.float64, multi_output=True, y_numeric=True)
            test_ds = Dataset(Xt, yt.reshape(len(yt), -1), "test")
        return self._fit(train_ds, test_ds, Y.shape[1])

    def predict(self, X):
        out = self._output(X)
        return out[:, 0] if self._single_output else out
