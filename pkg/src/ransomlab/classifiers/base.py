from __future__ import annotations

import numpy as np

from ..errors import DegenerateLabels, ShapeError


class Classifier:
    """Binary classifier over real feature vectors.

    ``predict_proba`` returns the malicious-class score in [0, 1]; a sample is
    labelled malicious only when its score is strictly above 0.5.
    """

    name = "classifier"

    def fit(self, X, y):
        X, y = self._check_fit(X, y)
        self._fit(X, y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        return self._proba(self._check_predict(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def _check_fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ShapeError(("N", "d"), X.shape, "features")
        if np.unique(y).size < 2:
            raise DegenerateLabels("training labels contain a single class")
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        self.n_features_ = X.shape[1]
        return X, y

    def _check_predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_:
            raise ShapeError(("N", self.n_features_), X.shape, self.name)
        return X


class Standardizer:
    def fit(self, X):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 1e-12, sd, 1.0)
        return self

    def transform(self, X):
        return (X - self.mean) / self.scale


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))
