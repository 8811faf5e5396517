"""Seeded synthetic execution logs for ransomware-like and benign programs.

A template is a small grammar: ``head`` blocks run once, the ``body`` blocks
repeat a random number of times, then ``tail`` blocks run once. Each block
draws a random number of events i.i.d. from its code distribution. Changed
events get an entropy sampled uniformly inside the code's bin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .logmodel import (
    CHANGED_CODES,
    Corpus,
    EventKind,
    EventRecord,
    ExecutionLog,
    Label,
    Origin,
    entropy_bin,
    to_feature_sequence,
)

_KIND_OF_CODE = {1: EventKind.DELETED, 5: EventKind.CREATED, 7: EventKind.RENAMED}
_EXTS = (".docx", ".xlsx", ".pdf", ".jpg", ".txt", ".png", ".db", ".pptx")


@dataclass(frozen=True)
class Block:
    dist: dict  # code -> probability
    length: tuple  # inclusive (lo, hi)

    def __post_init__(self):
        total = sum(self.dist.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"block distribution sums to {total}, not 1")
        if any(int(c) not in range(1, 10) for c in self.dist):
            raise ValueError("block codes must lie in 1..9")
        lo, hi = self.length
        if lo < 1 or hi < lo:
            raise ValueError(f"bad block length range {self.length}")

    @classmethod
    def from_json(cls, obj) -> "Block":
        return cls({int(k): float(v) for k, v in obj["dist"].items()}, tuple(obj["length"]))

    def to_json(self):
        return {"dist": {str(k): v for k, v in sorted(self.dist.items())},
                "length": list(self.length)}


@dataclass(frozen=True)
class BehaviorTemplate:
    name: str
    label: int
    body: tuple
    repeat: tuple = (1, 1)
    head: tuple = ()
    tail: tuple = ()

    def __post_init__(self):
        if self.repeat[0] < 0 or self.repeat[1] < self.repeat[0]:
            raise ValueError(f"bad repeat range {self.repeat}")
        if not self.body:
            raise ValueError("template needs at least one body block")

    @property
    def phase_blocks(self):
        return self.head + self.body + self.tail

    @classmethod
    def from_json(cls, obj) -> "BehaviorTemplate":
        blocks = lambda key: tuple(Block.from_json(b) for b in obj.get(key, []))
        return cls(obj["name"], int(obj["label"]), blocks("body"),
                   tuple(obj.get("repeat", (1, 1))), blocks("head"), blocks("tail"))

    def to_json(self):
        return {"name": self.name, "label": self.label, "repeat": list(self.repeat),
                "head": [b.to_json() for b in self.head],
                "body": [b.to_json() for b in self.body],
                "tail": [b.to_json() for b in self.tail]}


def _b(dist, lo, hi=None):
    return Block(dist, (lo, lo if hi is None else hi))


_BENIGN_NOISE = {4: 0.45, 3: 0.2, 8: 0.2, 9: 0.1, 5: 0.05}

MALICIOUS_TEMPLATES = (
    # encrypt in place, then rename to the ransom extension
    BehaviorTemplate("burst-encryptor", 1,
                     (_b({2: 0.9, 6: 0.1}, 1, 2), _b({7: 1.0}, 1)),
                     (700, 1400), head=(_b(_BENIGN_NOISE, 5, 40),)),
    # locky-like: rename victim, drop ransom note, write ciphertext
    BehaviorTemplate("rename-then-encrypt", 1,
                     (_b({7: 1.0}, 1), _b({5: 1.0}, 1), _b({2: 1.0}, 1)),
                     (500, 1000), head=(_b(_BENIGN_NOISE, 5, 40),)),
    # write an encrypted copy, delete the original
    BehaviorTemplate("delete-then-create", 1,
                     (_b({5: 1.0}, 1), _b({2: 0.8, 6: 0.2}, 1, 2), _b({1: 1.0}, 1)),
                     (450, 900), head=(_b(_BENIGN_NOISE, 5, 40),)),
    # interleaves normal activity with slow encryption
    BehaviorTemplate("slow-interleaved", 1,
                     (_b(_BENIGN_NOISE, 1, 4), _b({7: 0.6, 1: 0.4}, 1), _b({2: 1.0}, 1, 2)),
                     (250, 500), head=(_b(_BENIGN_NOISE, 5, 40),)),
)

BENIGN_TEMPLATES = (
    BehaviorTemplate("installer", 0,
                     (_b({5: 1.0}, 1, 4), _b({8: 0.4, 9: 0.3, 6: 0.3}, 1, 3),
                      _b({4: 0.85, 1: 0.15}, 1)),
                     (60, 350), tail=(_b(_BENIGN_NOISE, 10, 120),)),
    # high-entropy writes but almost no renames or deletes
    BehaviorTemplate("compressor", 0,
                     (_b({4: 0.35, 3: 0.3, 8: 0.35}, 2, 6), _b({5: 1.0}, 1),
                      _b({2: 0.7, 6: 0.3}, 3, 10)),
                     (30, 160), tail=(_b(_BENIGN_NOISE, 10, 120),)),
    BehaviorTemplate("backup", 0,
                     (_b({5: 1.0}, 1), _b({3: 0.3, 8: 0.4, 9: 0.3}, 1, 4),
                      _b({4: 0.9, 7: 0.1}, 1)),
                     (80, 400), tail=(_b(_BENIGN_NOISE, 10, 120),)),
    BehaviorTemplate("idle", 0,
                     (_b({4: 0.5, 3: 0.2, 8: 0.2, 5: 0.05, 1: 0.05}, 1, 6),),
                     (40, 250), tail=(_b(_BENIGN_NOISE, 10, 120),)),
)


def default_templates() -> list[BehaviorTemplate]:
    return list(MALICIOUS_TEMPLATES) + list(BENIGN_TEMPLATES)


def load_templates(path) -> list[BehaviorTemplate]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    items = data["templates"] if isinstance(data, dict) else data
    return [BehaviorTemplate.from_json(t) for t in items]


class _Uniforms:
    """Buffered uniform draws; one numpy call per 4096 values."""

    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.random(4096)
        self.i = 0

    def next(self) -> float:
        if self.i == self.buf.size:
            self.buf = self.rng.random(4096)
            self.i = 0
        self.i += 1
        return float(self.buf[self.i - 1])


def _draw_codes(template: BehaviorTemplate, rng: np.random.Generator) -> list[int]:
    codes: list[int] = []
    u = _Uniforms(rng)
    tables = {}

    def run(block: Block):
        if id(block) not in tables:
            keys = sorted(block.dist)
            tables[id(block)] = (keys, np.cumsum([block.dist[c] for c in keys]).tolist())
        keys, cum = tables[id(block)]
        lo, hi = block.length
        k = lo if lo == hi else lo + min(int(u.next() * (hi - lo + 1)), hi - lo)
        if len(keys) == 1:
            codes.extend(keys * k)
            return
        for _ in range(k):
            r = u.next() * cum[-1]
            j = 0
            while j < len(keys) - 1 and r >= cum[j]:
                j += 1
            codes.append(keys[j])

    for b in template.head:
        run(b)
    lo, hi = template.repeat
    for _ in range(lo + min(int(u.next() * (hi - lo + 1)), hi - lo)):
        for b in template.body:
            run(b)
    for b in template.tail:
        run(b)
    return codes


def gen_log(template: BehaviorTemplate, rng: np.random.Generator,
            root: str = "C:/Users/victim") -> list[EventRecord]:
    """Event records following ``template``; timestamps strictly increase."""
    codes = _draw_codes(template, rng)
    n = len(codes)
    stamps = int(rng.integers(0, 1000)) + np.cumsum(rng.integers(1, 25, size=n))
    ent_u = rng.random(n)
    records = []
    for i, c in enumerate(codes):
        path = f"{root}/dir{(i + 1) % 17}/file{i + 1:05d}{_EXTS[(i + 1) % len(_EXTS)]}"
        if c in CHANGED_CODES:
            lo, hi = entropy_bin(c)
            e = min(lo + (hi - lo) * float(ent_u[i]), 1.0)
            records.append(EventRecord(int(stamps[i]), EventKind.CHANGED, path, e))
        else:
            kind = _KIND_OF_CODE[c]
            if kind is EventKind.RENAMED:
                path += ".locked" if template.label == 1 else ".bak"
            records.append(EventRecord(int(stamps[i]), kind, path))
    return records


@dataclass
class CorpusConfig:
    n_benign_train: int = 258
    n_malicious_train: int = 747
    n_benign_test: int = 65
    n_malicious_test: int = 187
    seed: int = 1
    family_mix: dict | None = None   # malicious template name -> weight
    benign_mix: dict | None = None
    templates: list = field(default_factory=default_templates)

    def __post_init__(self):
        for name in ("n_benign_train", "n_malicious_train", "n_benign_test", "n_malicious_test"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_json(cls, obj) -> "CorpusConfig":
        obj = dict(obj)
        if "templates" in obj:
            obj["templates"] = [BehaviorTemplate.from_json(t) for t in obj["templates"]]
        return cls(**obj)

    def to_json(self):
        return {"n_benign_train": self.n_benign_train, "n_malicious_train": self.n_malicious_train,
                "n_benign_test": self.n_benign_test, "n_malicious_test": self.n_malicious_test,
                "seed": self.seed, "family_mix": self.family_mix, "benign_mix": self.benign_mix,
                "templates": [t.to_json() for t in self.templates]}


def _mix(templates, weights):
    if not templates:
        raise ValueError("no templates for a requested label")
    if weights is None:
        w = np.ones(len(templates))
    else:
        w = np.array([float(weights.get(t.name, 0.0)) for t in templates])
    if w.sum() <= 0:
        raise ValueError("mixture weights sum to zero")
    return w / w.sum()


def build_corpus(config: CorpusConfig) -> Corpus:
    """Deterministic corpus; log ``i`` draws from its own stream ``(seed, i)``."""
    mal = [t for t in config.templates if t.label == 1]
    ben = [t for t in config.templates if t.label == 0]
    p_mal = _mix(mal, config.family_mix)
    p_ben = _mix(ben, config.benign_mix)
    plan = ([("train", 0)] * config.n_benign_train + [("train", 1)] * config.n_malicious_train
            + [("test", 0)] * config.n_benign_test + [("test", 1)] * config.n_malicious_test)
    train, test, families = [], [], []
    for i, (split, label) in enumerate(plan):
        rng = np.random.default_rng([config.seed, i])
        pool, p = (mal, p_mal) if label == 1 else (ben, p_ben)
        template = pool[int(rng.choice(len(pool), p=p))]
        codes = to_feature_sequence(gen_log(template, rng))
        log = ExecutionLog(codes, Label(label), Origin.REAL)
        (train if split == "train" else test).append(log)
        families.append(template.name)
    return Corpus(train, test, config.seed, {"families": families})
