"""Kim-style Text-CNN over feature-code sequences.

embedding -> parallel Conv1D banks -> ReLU -> max over time -> concat (the
latent vector) -> dropout -> dense softmax head.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import Diverged, ShapeError
from ..logmodel import N_CODES
from ..nncore import Adam, Conv1D, Dense, Dropout, Embedding, MaxOverTime, ReLU
from ..nncore.checkpoint import assign, load_checkpoint, save_checkpoint
from ..nncore.losses import softmax_cross_entropy


@dataclass
class TextCnnConfig:
    emb_dim: int = 8
    widths: tuple = (3, 4, 5)
    filters: tuple = (11, 11, 10)
    dropout: float = 0.5
    epochs: int = 10
    batch_size: int = 32
    lr: float = 2e-3
    seed: int = 1

    @property
    def latent_dim(self):
        return int(sum(self.filters))

    def to_json(self):
        d = asdict(self)
        d["widths"], d["filters"] = list(self.widths), list(self.filters)
        return d

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        obj["widths"], obj["filters"] = tuple(obj["widths"]), tuple(obj["filters"])
        return cls(**obj)


class TextCNN:
    name = "textcnn"

    def __init__(self, config: TextCnnConfig | None = None):
        self.config = cfg = config or TextCnnConfig()
        if len(cfg.widths) != len(cfg.filters):
            raise ValueError("one filter count per width")
        rng = np.random.default_rng([cfg.seed, 0])
        self.embedding = Embedding(N_CODES, cfg.emb_dim, rng)
        self.convs = [Conv1D(cfg.emb_dim, f, w, rng) for w, f in zip(cfg.widths, cfg.filters)]
        self.relus = [ReLU() for _ in cfg.widths]
        self.pools = [MaxOverTime() for _ in cfg.widths]
        self.dropout = Dropout(cfg.dropout, np.random.default_rng([cfg.seed, 1]))
        self.head = Dense(cfg.latent_dim, 2, rng)
        self.loss_trace: list[float] = []

    # -- parameters -------------------------------------------------------
    def layers(self):
        named = [("embedding", self.embedding)]
        named += [(f"conv{w}", c) for w, c in zip(self.config.widths, self.convs)]
        named.append(("head", self.head))
        return named

    def named_parameters(self):
        return [(f"{ln}.{k}", v) for ln, l in self.layers() for k, v in l.params.items()]

    def named_grads(self):
        return [(f"{ln}.{k}", l.grads[k]) for ln, l in self.layers() for k in l.params]

    # -- forward/backward -------------------------------------------------
    def _check(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] < max(self.config.widths):
            raise ShapeError(("N", "T"), X.shape, "Text-CNN input")
        return X

    def latent_forward(self, X, training=False, soft=False):
        X = self._check(X)
        E = self.embedding.forward_soft(X) if soft else self.embedding.forward(X.astype(np.int64))
        pooled = [p.forward(r.forward(c.forward(E, training), training), training)
                  for c, r, p in zip(self.convs, self.relus, self.pools)]
        return np.concatenate(pooled, axis=1)

    def forward(self, X, training=False, soft=False):
        h = self.latent_forward(X, training, soft)
        return self.head.forward(self.dropout.forward(h, training), training)

    def backward(self, dlogits):
        """Backpropagate logits' gradient; returns the gradient w.r.t. soft inputs (or None)."""
        dh = self.dropout.backward(self.head.backward(dlogits))
        dE = 0.0
        start = 0
        for c, r, p, f in zip(self.convs, self.relus, self.pools, self.config.filters):
            dE = dE + c.backward(r.backward(p.backward(dh[:, start:start + f])))
            start += f
        return self.embedding.backward(dE)

    # -- public API -------------------------------------------------------
    def fit(self, X, y, X_val=None, y_val=None, verbose=False):
        cfg = self.config
        X = self._check(X).astype(np.int64)
        y = np.asarray(y, dtype=np.int64)
        opt = Adam(self.named_parameters(), lr=cfg.lr)
        rng = np.random.default_rng([cfg.seed, 2])
        self.loss_trace = []
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(y))
            total = 0.0
            for s in range(0, len(y), cfg.batch_size):
                b = order[s:s + cfg.batch_size]
                loss, dlogits = softmax_cross_entropy(self.forward(X[b], training=True), y[b])
                if not math.isfinite(loss):
                    raise Diverged(epoch)
                self.backward(dlogits)
                opt.step(self.named_grads())
                total += loss * len(b)
            self.loss_trace.append(total / len(y))
            if verbose:
                print(f"epoch {epoch}: loss {self.loss_trace[-1]:.4f}")
        return self

    def _batched(self, fn, X, batch=256):
        X = self._check(X)
        return np.concatenate([fn(X[s:s + batch]) for s in range(0, X.shape[0], batch)])

    def latent(self, X) -> np.ndarray:
        """32-dim max-pooled activations (eval mode), one row per log."""
        return self._batched(lambda b: self.latent_forward(b), X)

    def logits(self, X) -> np.ndarray:
        return self._batched(lambda b: self.forward(b), X)

    def predict_proba(self, X) -> np.ndarray:
        z = self.logits(X)
        return 0.5 * (1.0 + np.tanh(0.5 * (z[:, 1] - z[:, 0])))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    # -- persistence ------------------------------------------------------
    def save(self, path):
        meta = {"model": "textcnn", "config": self.config.to_json(), "loss_trace": self.loss_trace}
        save_checkpoint(path, meta, self.named_parameters())

    @classmethod
    def load(cls, path) -> "TextCNN":
        meta, arrays = load_checkpoint(path)
        if meta.get("model") != "textcnn":
            raise ValueError("checkpoint does not hold a Text-CNN")
        model = cls(TextCnnConfig.from_json(meta["config"]))
        assign(model.named_parameters(), arrays)
        model.loss_trace = list(meta.get("loss_trace", []))
        return model


def train_textcnn(X, y, config: TextCnnConfig | None = None, verbose=False) -> TextCNN:
    return TextCNN(config).fit(X, y, verbose=verbose)
