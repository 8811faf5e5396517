"""Execution-log data model: FSW event parsing, entropy, feature encoding,
fixed-length sequences and 784-long segments."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyBuffer,
    MissingEntropy,
    NotEnoughSegments,
    ParseError,
    ShapeError,
    TimeOrder,
)

LOG_LENGTH = 3000
SEGMENT_LENGTH = 784
SEGMENT_SIDE = 28
N_CODES = 10
PAD = 0

# (upper bound, code); bins are half-open [lo, hi) except the last which is closed.
ENTROPY_BINS = ((0.2, 4), (0.4, 3), (0.6, 8), (0.8, 9), (0.9, 6), (1.0, 2))
CHANGED_CODES = (2, 3, 4, 6, 8, 9)


class EventKind(enum.Enum):
    DELETED = "deleted"
    CREATED = "created"
    RENAMED = "renamed"
    CHANGED = "changed"


class Label(enum.IntEnum):
    BENIGN = 0
    MALICIOUS = 1


class Origin(enum.Enum):
    REAL = "real"
    GENERATED = "generated"
    REPLAYED = "replayed"


@dataclass(frozen=True)
class EventRecord:
    timestamp: int
    kind: EventKind
    path: str
    entropy: float | None = None

    def __post_init__(self):
        if (self.kind is EventKind.CHANGED) != (self.entropy is not None):
            if self.entropy is None:
                raise MissingEntropy(f"changed event on {self.path!r} needs an entropy")
            raise ValueError(f"entropy only allowed on changed events, got {self.kind}")
        if self.entropy is not None and not 0.0 <= self.entropy <= 1.0:
            raise ValueError(f"entropy {self.entropy} outside [0, 1]")


def normalized_entropy(data: bytes) -> float:
    """Byte-level Shannon entropy divided by 8 bits, in [0, 1]."""
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.size == 0:
        raise EmptyBuffer("entropy of an empty buffer is undefined")
    counts = np.bincount(buf, minlength=256)
    p = counts[counts > 0] / buf.size
    h = 0.0 - np.sum(p * np.log2(p))  # avoids -0.0 for a constant buffer
    return float(min(max(h / 8.0, 0.0), 1.0))


def entropy_code(entropy: float) -> int:
    """Feature code of a content change with the given normalized entropy."""
    if not 0.0 <= entropy <= 1.0 or math.isnan(entropy):
        raise ValueError(f"entropy {entropy} outside [0, 1]")
    for hi, code in ENTROPY_BINS[:-1]:
        if entropy < hi:
            return code
    return ENTROPY_BINS[-1][1]


def entropy_bin(code: int) -> tuple[float, float]:
    """Inverse of :func:`entropy_code`: the ``[lo, hi)`` interval for a change code."""
    lo = 0.0
    for hi, c in ENTROPY_BINS:
        if c == code:
            return lo, hi
        lo = hi
    raise ValueError(f"code {code} is not a content-change code")


_KIND_CODES = {EventKind.DELETED: 1, EventKind.CREATED: 5, EventKind.RENAMED: 7}


def encode_event(record: EventRecord) -> int:
    if record.kind is EventKind.CHANGED:
        if record.entropy is None:
            raise MissingEntropy(record.path)
        return entropy_code(record.entropy)
    return _KIND_CODES[record.kind]


def parse_fsw_log(text: str) -> list[EventRecord]:
    """Parse ``timestamp_ms,kind,path[,entropy]`` lines.

    Blank lines are skipped. Paths may not contain commas.
    """
    records: list[EventRecord] = []
    last_ts = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) not in (3, 4):
            raise ParseError(line_no, "expected 3 or 4 fields")
        try:
            ts = int(parts[0])
            kind = EventKind(parts[1].strip().lower())
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        entropy = None
        if len(parts) == 4:
            try:
                entropy = float(parts[3])
            except ValueError:
                raise ParseError(line_no, "bad entropy") from None
        try:
            rec = EventRecord(ts, kind, parts[2], entropy)
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        if last_ts is not None and ts < last_ts:
            raise TimeOrder(line_no)
        last_ts = ts
        records.append(rec)
    return records


def serialize_fsw_log(records: Iterable[EventRecord]) -> str:
    lines = []
    for r in records:
        fields = [str(r.timestamp), r.kind.value, r.path]
        if r.entropy is not None:
            fields.append(repr(float(r.entropy)))
        lines.append(",".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def to_feature_sequence(records: Sequence[EventRecord], length: int = LOG_LENGTH,
                        keep: str = "first") -> np.ndarray:
    """Encode records and left-pad with zeros (or truncate) to ``length``.

    ``keep`` selects which events survive when there are too many:
    ``"first"`` (default) or ``"last"``.
    """
    codes = np.fromiter((encode_event(r) for r in records), dtype=np.int8,
                        count=len(records))
    if codes.size >= length:
        return codes[:length].copy() if keep == "first" else codes[-length:].copy()
    out = np.zeros(length, dtype=np.int8)
    out[length - codes.size:] = codes
    return out


@dataclass
class ExecutionLog:
    codes: np.ndarray
    label: Label
    origin: Origin = Origin.REAL

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int8)
        if self.codes.shape != (LOG_LENGTH,):
            raise ShapeError((LOG_LENGTH,), self.codes.shape, "execution log")
        if self.codes.min() < 0 or self.codes.max() >= N_CODES:
            raise ValueError("codes must lie in 0..9")
        self.label = Label(self.label)
        self.origin = Origin(self.origin)

    @property
    def n_events(self) -> int:
        return int(np.count_nonzero(self.codes))

    def padding_is_prefix(self) -> bool:
        nz = np.flatnonzero(self.codes)
        return nz.size == 0 or nz.size == LOG_LENGTH - nz[0]

    def to_json(self) -> dict:
        return {"codes": self.codes.tolist(), "label": int(self.label),
                "origin": self.origin.value}


@dataclass
class Segment:
    """784 values (real during GAN training, integer codes after rounding)."""

    codes: np.ndarray
    source: int | None = None  # index of the originating log; None when generated

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.float64).reshape(-1)
        if self.codes.shape != (SEGMENT_LENGTH,):
            raise ShapeError((SEGMENT_LENGTH,), self.codes.shape, "segment")

    @property
    def generated(self) -> bool:
        return self.source is None

    def as_grid(self) -> np.ndarray:
        return self.codes.reshape(SEGMENT_SIDE, SEGMENT_SIDE)


def segment(log: ExecutionLog | np.ndarray, index: int | None = None) -> list[Segment]:
    """Split a length-3000 log into four 784-long segments (last one zero-padded)."""
    codes = log.codes if isinstance(log, ExecutionLog) else np.asarray(log)
    if codes.shape != (LOG_LENGTH,):
        raise ShapeError((LOG_LENGTH,), codes.shape, "execution log")
    n = -(-LOG_LENGTH // SEGMENT_LENGTH)
    padded = np.zeros(n * SEGMENT_LENGTH, dtype=np.float64)
    padded[:LOG_LENGTH] = codes
    src = -1 if index is None else index
    return [Segment(chunk, src) for chunk in padded.reshape(n, SEGMENT_LENGTH)]


def round_codes(values: np.ndarray) -> np.ndarray:
    """Round to the nearest integer (half away from zero) and clamp to 0..9."""
    v = np.asarray(values, dtype=np.float64)
    r = np.sign(v) * np.floor(np.abs(v) + 0.5)
    return np.clip(r, 0, N_CODES - 1).astype(np.int8)


def concat_segments(segments: Sequence[Segment | np.ndarray], count: int = 4,
                    length: int = LOG_LENGTH) -> np.ndarray:
    """Join the first ``count`` segments and cut the result to ``length`` codes."""
    if len(segments) < count:
        raise NotEnoughSegments(f"need {count} segments, got {len(segments)}")
    parts = [s.codes if isinstance(s, Segment) else np.asarray(s, dtype=np.float64).reshape(-1)
             for s in segments[:count]]
    joined = np.concatenate(parts)
    if joined.size < length:
        raise NotEnoughSegments(f"{count} segments give {joined.size} < {length} codes")
    return round_codes(joined[:length])


def group_segments(segments: Sequence[Segment | np.ndarray], count: int = 4) -> list[np.ndarray]:
    """Concatenate consecutive disjoint groups of ``count`` segments; leftovers are dropped."""
    return [concat_segments(segments[i:i + count], count)
            for i in range(0, len(segments) - count + 1, count)]


@dataclass
class Corpus:
    train: list[ExecutionLog]
    test: list[ExecutionLog]
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def split(self, name: str) -> list[ExecutionLog]:
        return {"train": self.train, "test": self.test}[name]

    @staticmethod
    def arrays(logs: Sequence[ExecutionLog]) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack([lg.codes for lg in logs]) if logs else np.zeros((0, LOG_LENGTH), np.int8)
        y = np.array([int(lg.label) for lg in logs], dtype=np.int64)
        return X, y


def dumps_jsonl(logs: Iterable[ExecutionLog], split: str | None = None) -> str:
    lines = []
    for lg in logs:
        obj = lg.to_json()
        if split is not None:
            obj["split"] = split
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + "\n" if lines else ""


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_jsonl(corpus.train, "train"))
        fh.write(dumps_jsonl(corpus.test, "test"))


def read_logs(path) -> list[tuple[ExecutionLog, str]]:
    """Read a JSONL corpus file; each entry comes back with its split (default ``train``)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            log = ExecutionLog(np.asarray(obj["codes"], dtype=np.int8), obj["label"],
                               obj.get("origin", "real"))
            out.append((log, obj.get("split", "train")))
    return out


def read_corpus(path, seed: int = 0) -> Corpus:
    entries = read_logs(path)
    return Corpus([lg for lg, s in entries if s == "train"],
                  [lg for lg, s in entries if s == "test"], seed)
