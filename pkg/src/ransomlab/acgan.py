"""Auxiliary-classifier GAN over 28x28 segment grids.

The discriminator has a real/fake (source) head and a benign/malicious
(class) head. With log-likelihood terms

    L_C = E log P(C=1 | real) + E log P(C=0 | fake)
    L_Y = E log P(Y=y | real) + E log P(Y=y | fake)

the discriminator maximizes ``L_C + L_Y`` and the generator maximizes
``L_Y - L_C`` on its own samples, optionally plus ``lambda * L_detector``
where ``L_detector = E log P_detector(benign | generated malicious)``.
Probabilities are clamped to ``[1e-7, 1 - 1e-7]`` inside every log.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import Diverged, ShapeError
from .logmodel import SEGMENT_LENGTH, SEGMENT_SIDE, Segment, round_codes
from .nncore import (
    Adam,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    LeakyReLU,
    Reshape,
    Sequential,
    Tanh,
    TransposedConv2D,
)
from .nncore.checkpoint import assign, load_checkpoint, save_checkpoint
from .nncore.layers import buffers
from .nncore.losses import EPS, clamped_log, mean_log_sigmoid, mean_log_softmax

CODE_SCALE = 4.5  # generator output (tanh + 1) * 4.5 spans [0, 9]
COLLAPSE_RATIO = 0.5


@dataclass
class GanConfig:
    latent_dim: int = 100
    batch_size: int = 100
    max_epochs: int = 80
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    seed: int = 1
    gen_channels: tuple = (64, 32)
    disc_channels: tuple = (32, 64)
    dropout: float = 0.3
    leak: float = 0.2
    stop_tol: float = 1e-3     # smoothed D-loss change that counts as converged
    stop_window: int = 5
    generator_source_loss: str = "minimax"   # or "non_saturating"
    white_box_weight: float = 0.0
    dequantize: float = 0.5    # half-width of uniform noise added to real codes

    def __post_init__(self):
        if min(self.latent_dim, self.batch_size, self.max_epochs) <= 0:
            raise ValueError("latent_dim, batch_size and max_epochs must be positive")
        if self.generator_source_loss not in ("minimax", "non_saturating"):
            raise ValueError("generator_source_loss must be 'minimax' or 'non_saturating'")
        self.gen_channels = tuple(self.gen_channels)
        self.disc_channels = tuple(self.disc_channels)

    def to_json(self):
        d = asdict(self)
        d["gen_channels"], d["disc_channels"] = list(self.gen_channels), list(self.disc_channels)
        return d

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class LossTerms:
    L_C: float
    L_Y: float
    total: float          # quantity being minimized
    grads: dict = field(default_factory=dict)


def discriminator_objective(src_real, cls_real, y_real, src_fake, cls_fake, y_fake) -> LossTerms:
    """Discriminator loss ``-(L_C + L_Y)`` and its gradients w.r.t. the four logit arrays."""
    lr, g_sr = mean_log_sigmoid(src_real, 1)
    lf, g_sf = mean_log_sigmoid(src_fake, 0)
    yr, g_cr = mean_log_softmax(cls_real, y_real)
    yf, g_cf = mean_log_softmax(cls_fake, y_fake)
    L_C, L_Y = lr + lf, yr + yf
    grads = {"src_real": -g_sr, "src_fake": -g_sf, "cls_real": -g_cr, "cls_fake": -g_cf}
    return LossTerms(L_C, L_Y, -(L_C + L_Y), grads)


def generator_objective(src_fake, cls_fake, y_fake, mode="minimax",
                        detector_benign=None, weight=0.0) -> LossTerms:
    """Generator loss ``-(L_Y - L_C [+ weight * L_detector])`` on generated samples.

    Only the fake half of ``L_C`` depends on the generator. ``mode="non_saturating"``
    swaps ``-log P(C=0|fake)`` for the usual ``log P(C=1|fake)`` surrogate.
    ``detector_benign`` holds P(benign) from a white-box detector; its gradient
    w.r.t. those probabilities is returned under ``"detector"``.
    """
    yf, g_cf = mean_log_softmax(cls_fake, y_fake)
    lc, g_sf = mean_log_sigmoid(src_fake, 0)
    if mode == "non_saturating":
        surrogate, g_s1 = mean_log_sigmoid(src_fake, 1)
        obj = yf + surrogate
        g_src = g_s1
    else:
        obj = yf - lc
        g_src = -g_sf
    grads = {"src_fake": -g_src, "cls_fake": -g_cf}
    if detector_benign is not None and weight:
        logp, dlogp = clamped_log(detector_benign)
        obj += weight * float(logp.mean())
        grads["detector"] = -weight * dlogp / logp.size
    return LossTerms(lc, yf, -obj, grads)


class Generator:
    def __init__(self, cfg: GanConfig, rng):
        c1, c2 = cfg.gen_channels
        self.cfg = cfg
        self.label_embedding = Embedding(2, cfg.latent_dim, rng)
        self.net = Sequential([
            Dense(cfg.latent_dim, c1 * 7 * 7, rng),
            Reshape((c1, 7, 7)),
            BatchNorm(c1),
            LeakyReLU(cfg.leak),
            TransposedConv2D(c1, c2, 4, 2, 1, rng),
            BatchNorm(c2),
            LeakyReLU(cfg.leak),
            TransposedConv2D(c2, 1, 4, 2, 1, rng),
            Tanh(),
        ])

    def forward(self, z, labels, training=False):
        """Grids of shape ``(N, 1, 28, 28)`` with values in [0, 9]."""
        h = np.asarray(z, dtype=np.float64) + self.label_embedding.forward(np.asarray(labels, np.int64))
        return (self.net.forward(h, training) + 1.0) * CODE_SCALE

    def backward(self, grad):
        dh = self.net.backward(grad * CODE_SCALE)
        self.label_embedding.backward(dh)
        return dh

    def named_parameters(self):
        return ([("label_embedding.W", self.label_embedding.params["W"])]
                + self.net.named_parameters("net."))

    def named_grads(self):
        return ([("label_embedding.W", self.label_embedding.grads["W"])]
                + self.net.named_grads("net."))

    def named_buffers(self):
        return buffers(self.net.layers, "net.")


class Discriminator:
    def __init__(self, cfg: GanConfig, rng, drop_rng):
        c1, c2 = cfg.disc_channels
        self.body = Sequential([
            Conv2D(1, c1, 4, 2, 1, rng),
            LeakyReLU(cfg.leak),
            Dropout(cfg.dropout, drop_rng),
            Conv2D(c1, c2, 4, 2, 1, rng),
            LeakyReLU(cfg.leak),
            Dropout(cfg.dropout, drop_rng),
            Flatten(),
        ])
        self.source = Dense(c2 * 7 * 7, 1, rng)
        self.classes = Dense(c2 * 7 * 7, 2, rng)

    def forward(self, x, training=False):
        """``(source logits (N,), class logits (N, 2))`` for grids in [0, 9]."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != (1, SEGMENT_SIDE, SEGMENT_SIDE):
            raise ShapeError(("N", 1, SEGMENT_SIDE, SEGMENT_SIDE), x.shape, "discriminator")
        h = self.body.forward(x / CODE_SCALE - 1.0, training)
        return self.source.forward(h, training)[:, 0], self.classes.forward(h, training)

    def backward(self, d_src, d_cls):
        dh = self.source.backward(np.asarray(d_src)[:, None]) + self.classes.backward(d_cls)
        return self.body.backward(dh) / CODE_SCALE

    def named_parameters(self):
        return (self.body.named_parameters("body.")
                + [(f"source.{k}", v) for k, v in self.source.params.items()]
                + [(f"classes.{k}", v) for k, v in self.classes.params.items()])

    def named_grads(self):
        return (self.body.named_grads("body.")
                + [(f"source.{k}", self.source.grads[k]) for k in self.source.params]
                + [(f"classes.{k}", self.classes.grads[k]) for k in self.classes.params])

    def probabilities(self, x):
        s, c = self.forward(x)
        from .nncore import sigmoid, softmax
        return sigmoid(s), softmax(c)


@dataclass
class TrainTrace:
    L_C: list = field(default_factory=list)
    L_Y: list = field(default_factory=list)
    d_loss: list = field(default_factory=list)
    g_objective: list = field(default_factory=list)
    stopped_early: bool = False
    distinct_ratio: float = float("nan")
    mode_collapse_warning: bool = False

    def __len__(self):
        return len(self.d_loss)

    def to_json(self):
        return asdict(self)


# callable(x (N, 784) real) -> (P(benign) (N,), dP/dx (N, 784))
WhiteBoxDetector = Callable[[np.ndarray], tuple]


class GanPair:
    def __init__(self, config: GanConfig | None = None):
        self.config = cfg = config or GanConfig()
        self.G = Generator(cfg, np.random.default_rng([cfg.seed, 10]))
        self.D = Discriminator(cfg, np.random.default_rng([cfg.seed, 11]),
                               np.random.default_rng([cfg.seed, 12]))

    def generate(self, z, labels, training=False):
        return self.G.forward(z, labels, training)

    def discriminator_loss(self, real, y_real, fake, y_fake, training=False) -> LossTerms:
        sr, cr = self.D.forward(real, training)
        sf, cf = self.D.forward(fake, training)
        return discriminator_objective(sr, cr, y_real, sf, cf, y_fake)

    def generator_loss(self, z, labels, detector: WhiteBoxDetector | None = None,
                       weight: float | None = None, training=False) -> LossTerms:
        fake = self.G.forward(z, labels, training)
        sf, cf = self.D.forward(fake, training)
        w = self.config.white_box_weight if weight is None else weight
        benign = None
        if detector is not None and w:
            benign, _ = detector(fake.reshape(len(fake), -1))
        return generator_objective(sf, cf, labels, self.config.generator_source_loss, benign, w)

    def sample_noise(self, rng, n):
        return rng.normal(size=(n, self.config.latent_dim))

    # -- persistence ------------------------------------------------------
    def _arrays(self):
        return ([("G." + k, v) for k, v in self.G.named_parameters()]
                + [("G." + k, v) for k, v in self.G.named_buffers()]
                + [("D." + k, v) for k, v in self.D.named_parameters()])

    def save(self, path, trace: TrainTrace | None = None):
        meta = {"model": "acgan", "config": self.config.to_json(),
                "trace": trace.to_json() if trace else None}
        save_checkpoint(path, meta, self._arrays())

    @classmethod
    def load(cls, path) -> "GanPair":
        meta, arrays = load_checkpoint(path)
        if meta.get("model") != "acgan":
            raise ValueError("checkpoint does not hold an ACGAN")
        pair = cls(GanConfig.from_json(meta["config"]))
        assign(pair._arrays(), arrays)
        return pair


def _as_grids(segments) -> np.ndarray:
    arr = np.stack([s.codes if isinstance(s, Segment) else np.asarray(s, dtype=np.float64).reshape(-1)
                    for s in segments])
    if arr.shape[1] != SEGMENT_LENGTH:
        raise ShapeError(("N", SEGMENT_LENGTH), arr.shape, "segments")
    return arr.reshape(-1, 1, SEGMENT_SIDE, SEGMENT_SIDE)


def _d_step(pair: GanPair, real, y_real, rng, opt_d):
    cfg = pair.config
    n = len(real)
    y_fake = y_real.copy()
    if cfg.dequantize:
        # integer-valued reals would let D separate them from G's continuous output
        real = np.clip(real + rng.uniform(-cfg.dequantize, cfg.dequantize, real.shape),
                       0.0, 2 * CODE_SCALE)
    fake = pair.G.forward(pair.sample_noise(rng, n), y_fake, training=True)
    sr, cr = pair.D.forward(real, training=True)
    # backward of the real pass must run before the fake forward overwrites caches
    terms_real_src, g_sr = mean_log_sigmoid(sr, 1)
    terms_real_cls, g_cr = mean_log_softmax(cr, y_real)
    pair.D.backward(-g_sr, -g_cr)
    grads_real = [g.copy() for _, g in pair.D.named_grads()]
    sf, cf = pair.D.forward(fake, training=True)
    lf, g_sf = mean_log_sigmoid(sf, 0)
    yf, g_cf = mean_log_softmax(cf, y_fake)
    pair.D.backward(-g_sf, -g_cf)
    names = [k for k, _ in pair.D.named_parameters()]
    total = [(k, gr + gf) for k, gr, (_, gf) in zip(names, grads_real, pair.D.named_grads())]
    opt_d.step(total)
    L_C, L_Y = terms_real_src + lf, terms_real_cls + yf
    return L_C, L_Y


def _g_step(pair: GanPair, rng, opt_g, detector, n):
    cfg = pair.config
    labels = rng.integers(0, 2, size=n)
    z = pair.sample_noise(rng, n)
    fake = pair.G.forward(z, labels, training=True)
    sf, cf = pair.D.forward(fake, training=True)
    benign = dbenign = None
    if detector is not None and cfg.white_box_weight:
        mal = labels == 1
        benign = np.ones(n)
        dbenign = np.zeros((n, SEGMENT_LENGTH))
        if mal.any():
            pb, dpb = detector(fake[mal].reshape(int(mal.sum()), -1))
            benign[mal], dbenign[mal] = pb, dpb
    terms = generator_objective(sf, cf, labels, cfg.generator_source_loss, benign,
                                cfg.white_box_weight if detector is not None else 0.0)
    dx = pair.D.backward(terms.grads["src_fake"], terms.grads["cls_fake"])
    if "detector" in terms.grads:
        dx = dx + (terms.grads["detector"][:, None] * dbenign).reshape(dx.shape)
    pair.G.backward(dx)
    opt_g.step(pair.G.named_grads())
    return -terms.total


def train_acgan(segments: Sequence, labels, config: GanConfig | None = None,
                detector: WhiteBoxDetector | None = None, verbose=False, on_epoch=None):
    """Alternate one discriminator and one generator update per real batch.

    Stops after ``max_epochs`` or once the moving average (``stop_window``
    epochs) of the discriminator loss changes by less than ``stop_tol``
    between consecutive windows. ``on_epoch(epoch, pair, trace)`` runs after
    every epoch. Returns ``(GanPair, TrainTrace)``.
    """
    cfg = config or GanConfig()
    X = _as_grids(segments)
    y = np.asarray(labels, dtype=np.int64)
    if len(X) != len(y):
        raise ValueError("one label per segment")
    if len(X) < 2 * cfg.batch_size:
        raise ValueError(f"need at least {2 * cfg.batch_size} segments, got {len(X)}")
    if np.unique(y).size < 2:
        raise ValueError("both labels must be present")
    pair = GanPair(cfg)
    opt_d = Adam(pair.D.named_parameters(), lr=cfg.lr_d, beta1=cfg.beta1)
    opt_g = Adam(pair.G.named_parameters(), lr=cfg.lr_g, beta1=cfg.beta1)
    rng = np.random.default_rng([cfg.seed, 13])
    trace = TrainTrace()
    w = cfg.stop_window
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(X))
        acc = np.zeros(3)
        nb = 0
        for s in range(0, len(X) - cfg.batch_size + 1, cfg.batch_size):
            b = order[s:s + cfg.batch_size]
            L_C, L_Y = _d_step(pair, X[b], y[b], rng, opt_d)
            g_obj = _g_step(pair, rng, opt_g, detector, len(b))
            acc += (L_C, L_Y, g_obj)
            nb += 1
        L_C, L_Y, g_obj = acc / nb
        if not all(math.isfinite(v) for v in (L_C, L_Y, g_obj)):
            raise Diverged(epoch)
        trace.L_C.append(L_C)
        trace.L_Y.append(L_Y)
        trace.d_loss.append(-(L_C + L_Y))
        trace.g_objective.append(g_obj)
        if verbose:
            print(f"epoch {epoch}: L_C={L_C:.4f} L_Y={L_Y:.4f} G={g_obj:.4f}", flush=True)
        if on_epoch is not None:
            on_epoch(epoch, pair, trace)
        if cfg.stop_tol > 0 and len(trace.d_loss) >= 2 * w:
            recent = np.mean(trace.d_loss[-w:])
            before = np.mean(trace.d_loss[-2 * w:-w])
            if abs(recent - before) < cfg.stop_tol:
                trace.stopped_early = epoch < cfg.max_epochs
                break
    probe = generate_malicious(pair, 100, np.random.default_rng([cfg.seed, 14]))
    trace.distinct_ratio = distinct_ratio(probe)
    trace.mode_collapse_warning = trace.distinct_ratio < COLLAPSE_RATIO
    return pair, trace


def distinct_ratio(segments) -> float:
    """Share of exactly distinct rounded segments."""
    return len({np.asarray(s.codes).tobytes() for s in segments}) / len(segments)


def generate_malicious(pair: GanPair, k: int, rng, label: int = 1,
                       batch: int = 500) -> list[Segment]:
    """``k`` generated segments of class ``label``, rounded and clamped to codes 0..9."""
    if k <= 0:
        raise ValueError("k must be positive")
    out = []
    for s in range(0, k, batch):
        n = min(batch, k - s)
        grids = pair.G.forward(pair.sample_noise(rng, n), np.full(n, label), training=False)
        for g in grids.reshape(n, SEGMENT_LENGTH):
            out.append(Segment(round_codes(g).astype(np.float64), None))
    return out
