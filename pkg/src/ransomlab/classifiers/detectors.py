"""Frozen detectors over length-3000 code sequences.

A detector maps raw logs to malicious scores. Three families:

* ``textcnn``          the Text-CNN's own softmax head
* ``<kind>_latent``    a classical classifier on the Text-CNN's 32-dim pooled features
* ``<kind>_raw``       a classical classifier on the integer sequence itself
"""

from __future__ import annotations

import pickle

import numpy as np

from ..errors import EmptySet
from .forest import RandomForest
from .linear import LDA, LogisticRegression, NaiveBayes
from .metrics import MetricsReport
from .svm import SVM
from .textcnn import TextCNN

CLASSICAL_KINDS = ("nb", "lda", "logreg", "svmlin", "svmrbf", "rf")
DISPLAY_NAMES = {"textcnn": "Text-CNN", "nb": "NaiveBayes", "lda": "LDA",
                 "logreg": "LogisticRegression", "svmlin": "SVM-linear",
                 "svmrbf": "SVM-radial", "rf": "RandomForest"}
# linear decision boundaries in the latent space
LINEAR_LATENT = ("textcnn", "lda_latent", "logreg_latent", "svmlin_latent")


def make_classical(kind: str, seed: int = 0):
    factories = {
        "nb": NaiveBayes,
        "lda": LDA,
        "logreg": LogisticRegression,
        "svmlin": lambda: SVM("linear"),
        "svmrbf": lambda: SVM("rbf"),
        "rf": lambda: RandomForest(n_trees=100, seed=seed),
    }
    if kind not in factories:
        raise ValueError(f"unknown classifier kind {kind!r}; expected one of {CLASSICAL_KINDS}")
    return factories[kind]()


def extract_latent(model: TextCNN, logs) -> np.ndarray:
    """Pooled 32-dim features (dropout off) for one log or a batch of logs."""
    return model.latent(_as_matrix(logs))


def _as_matrix(logs):
    if isinstance(logs, np.ndarray):
        return logs
    return np.stack([getattr(lg, "codes", lg) for lg in logs])


class Detector:
    """A named, frozen scoring function over raw code sequences."""

    def __init__(self, name: str, textcnn: TextCNN | None = None, clf=None):
        self.name = name
        self.textcnn = textcnn
        self.clf = clf

    @property
    def space(self) -> str:
        if self.clf is None:
            return "textcnn"
        return "latent" if self.textcnn is not None else "raw"

    def features(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if self.space == "raw":
            return X.astype(np.float64)
        return extract_latent(self.textcnn, X)

    def predict_proba(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if self.clf is None:
            return self.textcnn.predict_proba(X)
        return self.clf.predict_proba(self.features(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def evaluate(self, X, y) -> MetricsReport:
        scores = self.predict_proba(X)
        return MetricsReport.from_predictions(y, (scores > 0.5).astype(int), scores)


def build_detector(name: str, X, y, textcnn: TextCNN | None = None, seed: int = 0) -> Detector:
    """Train the classical part of ``name`` (``textcnn``, ``<kind>_latent`` or ``<kind>_raw``).

    Latent detectors need an already trained ``textcnn``; it stays frozen.
    """
    if name == "textcnn":
        if textcnn is None:
            raise ValueError("textcnn detector needs a trained Text-CNN")
        return Detector(name, textcnn)
    kind, _, space = name.rpartition("_")
    if space not in ("latent", "raw"):
        raise ValueError(f"detector name {name!r} must end in _latent or _raw")
    clf = make_classical(kind, seed)
    if space == "latent":
        if textcnn is None:
            raise ValueError(f"{name} needs a trained Text-CNN")
        det = Detector(name, textcnn, clf)
    else:
        det = Detector(name, None, clf)
    clf.fit(det.features(X), y)
    return det


def evaluate(model, X, y) -> MetricsReport:
    scores = model.predict_proba(X)
    return MetricsReport.from_predictions(y, (scores > 0.5).astype(int), scores)


def adversarial_detection_rate(model, adversarial) -> float:
    """Fraction of adversarial (all malicious) logs still flagged malicious."""
    X = _as_matrix(adversarial) if len(adversarial) else np.zeros((0, 0))
    if X.shape[0] == 0:
        raise EmptySet("no adversarial logs")
    return float(np.mean(model.predict(X) == 1))


_MAGIC = b"ransomlab-detector\n"


def save_detector(det: Detector, path) -> None:
    """Text-CNN detectors use the native checkpoint; composed ones are pickled."""
    if det.clf is None:
        det.textcnn.save(path)
        return
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        pickle.dump({"name": det.name, "textcnn": det.textcnn, "clf": det.clf}, fh, protocol=4)


def load_detector(path) -> Detector:
    with open(path, "rb") as fh:
        head = fh.read(len(_MAGIC))
        if head == _MAGIC:
            obj = pickle.load(fh)
            return Detector(obj["name"], obj["textcnn"], obj["clf"])
    return Detector("textcnn", TextCNN.load(path))
