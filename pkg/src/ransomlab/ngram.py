"""n-gram overlap quality metrics for generated malicious samples.

Grams are packed into base-10 integers (codes are single digits and n <= 7),
so set algebra runs on sorted int64 arrays. Any window that contains the
padding code 0 is ignored.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyReference
from .logmodel import ExecutionLog, Segment

N_MIN, N_MAX = 3, 7
DEFAULT_N_RANGE = tuple(range(N_MIN, N_MAX + 1))
DEFAULT_N_RULE = (4, 5, 6)
DEFAULT_TAU = 1.5


def _codes(sample) -> np.ndarray:
    if isinstance(sample, (ExecutionLog, Segment)):
        sample = sample.codes
    return np.rint(np.asarray(sample, dtype=np.float64)).astype(np.int64).reshape(-1)


def _check_n(n: int) -> None:
    if not N_MIN <= n <= N_MAX:
        raise ValueError(f"n must lie in {N_MIN}..{N_MAX}, got {n}")


def gram_keys(codes, n: int) -> np.ndarray:
    """Sorted unique packed n-grams of ``codes`` that contain no padding."""
    _check_n(n)
    c = _codes(codes)
    if c.size < n:
        return np.empty(0, dtype=np.int64)
    win = sliding_window_view(c, n)
    win = win[(win != 0).all(axis=1)]
    if win.size == 0:
        return np.empty(0, dtype=np.int64)
    weights = 10 ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return np.unique(win @ weights)


def unpack_key(key: int, n: int) -> tuple[int, ...]:
    return tuple(int(d) for d in str(int(key)).zfill(n))


@dataclass(frozen=True)
class NGramSet:
    n: int
    keys: np.ndarray  # sorted, unique

    @classmethod
    def from_codes(cls, codes, n: int) -> "NGramSet":
        return cls(n, gram_keys(codes, n))

    @classmethod
    def union_of(cls, samples: Iterable, n: int) -> "NGramSet":
        parts = [gram_keys(s, n) for s in samples]
        keys = np.unique(np.concatenate(parts)) if parts else np.empty(0, np.int64)
        return cls(n, keys)

    @property
    def grams(self) -> set[tuple[int, ...]]:
        return {unpack_key(k, self.n) for k in self.keys}

    def __len__(self) -> int:
        return int(self.keys.size)

    def __contains__(self, gram) -> bool:
        if len(gram) != self.n:
            return False
        key = int("".join(str(int(g)) for g in gram))
        i = np.searchsorted(self.keys, key)
        return bool(i < self.keys.size and self.keys[i] == key)

    def __and__(self, other: "NGramSet") -> "NGramSet":
        if other.n != self.n:
            raise ValueError("cannot intersect sets of different n")
        return NGramSet(self.n, np.intersect1d(self.keys, other.keys, assume_unique=True))


def extract_ngrams(codes, n: int) -> NGramSet:
    return NGramSet.from_codes(codes, n)


class References:
    """Union n-gram sets of the malicious and benign reference (test) logs.

    Built once per ``n`` on first use and then only read.
    """

    def __init__(self, malicious: Sequence, benign: Sequence):
        if len(malicious) == 0 or len(benign) == 0:
            raise EmptyReference("both malicious and benign references are required")
        self._mal = list(malicious)
        self._ben = list(benign)
        self._cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @classmethod
    def from_logs(cls, logs: Sequence[ExecutionLog]) -> "References":
        return cls([lg for lg in logs if lg.label == 1], [lg for lg in logs if lg.label == 0])

    def sets(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n not in self._cache:
            m = NGramSet.union_of(self._mal, n).keys
            b = NGramSet.union_of(self._ben, n).keys
            self._cache[n] = (m, b, np.intersect1d(m, b, assume_unique=True))
        return self._cache[n]


def overlap_counts(sample, refs: References, n: int) -> tuple[int, int, int]:
    """``(|N_im|, |N_ib|, |N_imb|)`` for one sample."""
    s = gram_keys(sample, n)
    m, b, mb = refs.sets(n)
    return (int(np.intersect1d(s, m, assume_unique=True).size),
            int(np.intersect1d(s, b, assume_unique=True).size),
            int(np.intersect1d(s, mb, assume_unique=True).size))


def quality_ratio(n_im: int, n_ib: int, n_imb: int) -> float:
    n1 = n_im - n_imb
    n2 = n_ib - n_imb
    if n2 == 0:
        return math.inf if n1 > 0 else 0.0
    return n1 / n2


def sample_quality(sample, malicious_ref=None, benign_ref=None, n: int = 4, *,
                   refs: References | None = None) -> float:
    """Ratio of malicious-only to benign-only matched unique n-grams.

    Returns ``inf`` when the sample matches no benign-only gram but some
    malicious-only gram, and 0.0 when it matches neither.
    """
    if refs is None:
        refs = References([] if malicious_ref is None else malicious_ref,
                          [] if benign_ref is None else benign_ref)
    return quality_ratio(*overlap_counts(sample, refs, n))


def quality_matrix(samples: Sequence, refs: References,
                   n_values: Sequence[int] = DEFAULT_N_RANGE) -> np.ndarray:
    """q for every (sample, n) pair, shape ``(len(samples), len(n_values))``."""
    out = np.empty((len(samples), len(n_values)))
    for j, n in enumerate(n_values):
        for i, s in enumerate(samples):
            out[i, j] = quality_ratio(*overlap_counts(s, refs, n))
    return out


def _quantile(sorted_vals: np.ndarray, p: float) -> float:
    # linear interpolation that tolerates +inf entries
    pos = p * (sorted_vals.size - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, sorted_vals.size - 1)
    a, b = float(sorted_vals[lo]), float(sorted_vals[hi])
    frac = pos - lo
    if frac == 0 or a == b:
        return a
    return a + frac * (b - a)


def five_number_summary(values: Sequence[float], ids: Sequence | None = None) -> dict:
    """min, quartiles, max and Tukey (1.5 IQR) outliers."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty sample")
    ids = list(range(v.size)) if ids is None else list(ids)
    s = np.sort(v)
    q1, med, q3 = (_quantile(s, p) for p in (0.25, 0.5, 0.75))
    iqr = q3 - q1
    if math.isfinite(iqr):
        lo_f, hi_f = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        outliers = [i for i, x in zip(ids, v) if x < lo_f or x > hi_f]
    else:
        outliers = []
    return {"min": float(s[0]), "q1": q1, "median": med, "q3": q3,
            "max": float(s[-1]), "outliers": outliers}


@dataclass
class QualityReport:
    per_sample: dict  # sample id -> {n: q}
    summary: dict     # n -> five-number summary
    tau: float = DEFAULT_TAU
    n_values: tuple = DEFAULT_N_RANGE

    def q(self, sample_id, n: int) -> float:
        return self.per_sample[sample_id][n]

    def passes(self, sample_id, n_rule: Sequence[int] = DEFAULT_N_RULE) -> bool:
        return all(self.per_sample[sample_id][n] >= self.tau for n in n_rule)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "n", "q"])
        for sid, qs in self.per_sample.items():
            for n in self.n_values:
                w.writerow([sid, n, _fmt(qs[n])])
        return buf.getvalue()

    def summary_json(self) -> str:
        data = {"tau": self.tau, "n_values": list(self.n_values),
                "summary": {str(n): {k: (_fmt(v) if k != "outliers" else v)
                                     for k, v in s.items()}
                            for n, s in self.summary.items()}}
        return json.dumps(data, indent=2, sort_keys=True)


def _fmt(x: float):
    return "inf" if x == math.inf else float(x)


def batch_quality(samples: Sequence, refs: References,
                  n_range: Sequence[int] = DEFAULT_N_RANGE, tau: float = DEFAULT_TAU,
                  ids: Sequence | None = None) -> QualityReport:
    n_range = tuple(n_range)
    for n in n_range:
        _check_n(n)
    ids = list(range(len(samples))) if ids is None else list(ids)
    qm = quality_matrix(samples, refs, n_range)
    per_sample = {sid: {n: float(qm[i, j]) for j, n in enumerate(n_range)}
                  for i, sid in enumerate(ids)}
    summary = {n: five_number_summary(qm[:, j], ids) for j, n in enumerate(n_range)} if len(ids) else {}
    return QualityReport(per_sample, summary, tau, n_range)


def filter_quality(samples: Sequence, refs: References, tau: float = DEFAULT_TAU,
                   n_rule: Sequence[int] = DEFAULT_N_RULE) -> tuple[list, list]:
    """Split samples into those with q >= tau for every n in ``n_rule`` and the rest.

    ``len(failed)`` is the number of rejected samples of one round.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if len(samples) == 0:
        return [], []
    qm = quality_matrix(samples, refs, tuple(n_rule))
    ok = (qm >= tau).all(axis=1)
    passed = [s for s, k in zip(samples, ok) if k]
    failed = [s for s, k in zip(samples, ok) if not k]
    return passed, failed
