"""Adversarial log generation: segment, train the ACGAN, generate, filter, concatenate, evaluate."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .acgan import GanConfig, GanPair, generate_malicious, train_acgan
from .classifiers.detectors import DISPLAY_NAMES, adversarial_detection_rate
from .errors import QualityStarvation
from .logmodel import (
    Corpus,
    ExecutionLog,
    Label,
    Origin,
    Segment,
    concat_segments,
    segment,
)
from .ngram import DEFAULT_N_RANGE, DEFAULT_N_RULE, DEFAULT_TAU, References, batch_quality, filter_quality


@dataclass
class AttackConfig:
    K: int = 512
    tau: float = DEFAULT_TAU
    n_rule: tuple = DEFAULT_N_RULE
    concat_count: int = 4
    max_rounds: int = 20
    seed: int = 1
    gan: GanConfig = field(default_factory=GanConfig)

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        self.n_rule = tuple(self.n_rule)
        if isinstance(self.gan, dict):
            self.gan = GanConfig.from_json(self.gan)

    def to_json(self):
        d = asdict(self)
        d["n_rule"] = list(self.n_rule)
        d["gan"] = self.gan.to_json()
        return d

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class RegenerationResult:
    passed: list
    requested: list   # segments generated in each round
    accepted: list    # segments passing in each round


@dataclass
class AttackReport:
    requested_per_round: list
    passed_per_round: list
    n_logs: int
    detection: dict          # detector name -> {"detected": int, "total": int, "rate": float}
    predictions: dict        # detector name -> list of 0/1 per adversarial log
    quality_summary: dict
    config: dict
    segment_order: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def detection_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["classifier", "detected", "total", "detection_rate_percent"])
        for name, d in self.detection.items():
            w.writerow([name, d["detected"], d["total"], f"{100.0 * d['rate']:.2f}"])
        return buf.getvalue()


# a sampler draws k generated segments
Sampler = Callable[[int, np.random.Generator], list]


def gan_sampler(pair: GanPair) -> Sampler:
    return lambda k, rng: generate_malicious(pair, k, rng)


def regeneration_loop(sampler: Sampler, refs: References, K: int, tau: float = DEFAULT_TAU,
                      max_rounds: int = 20, n_rule: Sequence[int] = DEFAULT_N_RULE,
                      rng=None) -> RegenerationResult:
    """Collect exactly ``K`` segments passing the quality rule.

    Each round asks the sampler only for the current deficit. Raises
    ``QualityStarvation`` once ``max_rounds`` rounds leave the deficit unmet.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    passed, requested, accepted = [], [], []
    for _ in range(max_rounds):
        need = K - len(passed)
        batch = sampler(need, rng)
        ok, _ = filter_quality(batch, refs, tau, n_rule)
        requested.append(len(batch))
        accepted.append(len(ok))
        passed.extend(ok[:need])
        if len(passed) == K:
            return RegenerationResult(passed, requested, accepted)
    partial = RegenerationResult(passed, requested, accepted)
    raise QualityStarvation(len(requested), len(passed), partial)


def concatenate_random(segments: Sequence[Segment], count: int, rng) -> tuple[list, list]:
    """Shuffle the passing segments and join disjoint groups of ``count`` into logs."""
    order = rng.permutation(len(segments))
    logs = []
    for i in range(0, len(order) - count + 1, count):
        codes = concat_segments([segments[j] for j in order[i:i + count]], count)
        logs.append(ExecutionLog(codes, Label.MALICIOUS, Origin.GENERATED))
    return logs, order.tolist()


def training_segments(logs: Sequence[ExecutionLog]) -> tuple[list, np.ndarray]:
    segs, labels = [], []
    for i, lg in enumerate(logs):
        for s in segment(lg, i):
            segs.append(s)
            labels.append(int(lg.label))
    return segs, np.array(labels, dtype=np.int64)


def detect(detectors: dict, logs: Sequence[ExecutionLog]) -> tuple[dict, dict]:
    X = np.stack([lg.codes for lg in logs])
    detection, predictions = {}, {}
    for name, det in detectors.items():
        pred = det.predict(X)
        detection[name] = {"detected": int(pred.sum()), "total": int(pred.size),
                           "rate": adversarial_detection_rate(det, X)}
        predictions[name] = pred.astype(int).tolist()
    return detection, predictions


@dataclass
class AttackRun:
    report: AttackReport
    pair: GanPair
    trace: object
    segments: list
    logs: list


def run_attack(corpus: Corpus, detectors: dict, config: AttackConfig | None = None,
               pair: GanPair | None = None, verbose=False) -> AttackRun:
    """Full attack against frozen ``detectors`` (name -> object with ``predict``).

    Quality references are the corpus's test logs. A pre-trained ``pair`` skips
    GAN training.
    """
    cfg = config or AttackConfig()
    trace = None
    if pair is None:
        segs, labels = training_segments(corpus.train)
        pair, trace = train_acgan(segs, labels, cfg.gan, verbose=verbose)
    refs = References.from_logs(corpus.test)
    rng = np.random.default_rng([cfg.seed, 20])
    regen = regeneration_loop(gan_sampler(pair), refs, cfg.K, cfg.tau, cfg.max_rounds,
                              cfg.n_rule, rng)
    logs, order = concatenate_random(regen.passed, cfg.concat_count,
                                     np.random.default_rng([cfg.seed, 21]))
    qrep = batch_quality(regen.passed, refs, DEFAULT_N_RANGE, cfg.tau)
    detection, predictions = detect(detectors, logs) if detectors else ({}, {})
    report = AttackReport(regen.requested, regen.accepted, len(logs), detection, predictions,
                          json.loads(qrep.summary_json()), cfg.to_json(), order)
    return AttackRun(report, pair, trace, regen.passed, logs)


def display_name(detector_name: str) -> str:
    kind, _, space = detector_name.rpartition("_")
    if not kind:
        return DISPLAY_NAMES.get(detector_name, detector_name)
    return f"{DISPLAY_NAMES.get(kind, kind)} ({space})"
