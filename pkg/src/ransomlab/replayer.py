"""Turn a feature-code sequence back into file operations inside a private sandbox,
watch that sandbox, and re-encode what the watcher saw.

Only files the replayer itself created under the sandbox root are touched.
There is no network, persistence or encryption code here: "high entropy"
writes are seeded pseudo-random bytes.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SandboxViolation, WatchError
from .logmodel import (
    CHANGED_CODES,
    EventKind,
    EventRecord,
    encode_event,
    entropy_bin,
    normalized_entropy,
    serialize_fsw_log,
)

DEBOUNCE_S = 0.050


@dataclass
class SandboxConfig:
    root: str
    n_decoys: int = 8
    decoy_size: int = 4096
    delay_ms: float = 0.0
    seed: int = 0
    decoy_prefix: str = "decoy_"
    sync_timeout_s: float = 2.0


# -- confinement ------------------------------------------------------------

def confined(root: str, name: str) -> str:
    """Absolute path of ``name`` under ``root``; refuses anything that escapes it."""
    base = os.path.realpath(root)
    target = os.path.realpath(os.path.join(base, name))
    if os.path.isabs(name) or os.path.commonpath([base, target]) != base or target == base:
        raise SandboxViolation(f"{name!r} escapes sandbox {base!r}")
    return target


def _relative(root: str, path: str) -> str:
    return os.path.relpath(os.path.realpath(path), os.path.realpath(root)).replace(os.sep, "/")


# -- payloads ---------------------------------------------------------------

def _mixed(noise: bytes, ratio: float, base: int) -> bytes:
    k = int(round(ratio * len(noise)))
    return noise[:k] + bytes([base]) * (len(noise) - k)


def payload_for_code(code: int, size: int, rng) -> bytes:
    """Bytes whose normalized entropy lands in ``code``'s entropy bin.

    The payload is a prefix of seeded random bytes followed by a constant
    filler; the random fraction is found by bisection.
    """
    lo, hi = entropy_bin(code)
    noise = rng.integers(0, 256, size=size, dtype=np.uint8).tobytes()
    base = int(rng.integers(0, 256))
    inside = lambda e: lo <= e < hi or (hi == 1.0 and e >= lo)
    a, b = 0.0, 1.0
    target = (lo + hi) / 2
    for _ in range(60):
        r = (a + b) / 2
        data = _mixed(noise, r, base)
        e = normalized_entropy(data)
        if inside(e) and abs(e - target) < (hi - lo) / 4:
            return data
        if e < target:
            a = r
        else:
            b = r
    for r in (a, b, 0.0, 1.0):
        data = _mixed(noise, r, base)
        if inside(normalized_entropy(data)):
            return data
    raise RuntimeError(f"no payload of {size} bytes reaches entropy bin {code}")


# -- watcher ----------------------------------------------------------------

class _Handler:
    """Raw watchdog events -> ordered EventRecords."""

    def __init__(self, root: str, t0: float):
        self.root = root
        self.t0 = t0
        self.records: list[EventRecord] = []
        self.out: queue.Queue = queue.Queue()
        self.dirty: dict[str, float] = {}
        self.lock = threading.Lock()
        self.seen = threading.Condition(self.lock)
        self.error: BaseException | None = None

    def _emit(self, kind, path, entropy=None):
        ts = int(round((time.monotonic() - self.t0) * 1000))
        if self.records:
            ts = max(ts, self.records[-1].timestamp)
        last = self.records[-1] if self.records else None
        rel = _relative(self.root, path)
        rec = EventRecord(ts, kind, rel, entropy)
        if (kind is EventKind.CHANGED and last is not None and last.kind is EventKind.CHANGED
                and last.path == rel and ts - last.timestamp < DEBOUNCE_S * 1000
                and last.entropy == entropy):
            # duplicate change notification for the same content
            self.records[-1] = rec
        else:
            self.records.append(rec)
        self.out.put(rec)
        self.seen.notify_all()

    def dispatch(self, event):
        try:
            with self.lock:
                self._dispatch(event)
        except BaseException as exc:  # surfaced by the driver as WatchError
            self.error = exc

    def _dispatch(self, event):
        if event.is_directory:
            return
        kind = event.event_type
        src = os.fsdecode(event.src_path)
        if kind == "created":
            self._emit(EventKind.CREATED, src)
        elif kind == "deleted":
            self.dirty.pop(src, None)
            self._emit(EventKind.DELETED, src)
        elif kind == "moved":
            self.dirty.pop(src, None)
            self._emit(EventKind.RENAMED, src)
        elif kind == "modified":
            self.dirty[src] = time.monotonic()
        elif kind == "closed":
            if self.dirty.pop(src, None) is None:
                return
            try:
                with open(src, "rb") as fh:
                    data = fh.read()
            except FileNotFoundError:
                return
            if data:
                self._emit(EventKind.CHANGED, src, normalized_entropy(data))


class Watcher:
    """inotify-backed watcher of one sandbox directory."""

    def __init__(self, root: str):
        self.root = os.path.realpath(root)
        self.handler = _Handler(self.root, time.monotonic())
        self._observer = None

    def start(self):
        try:
            from watchdog.observers import Observer

            self._observer = Observer()
            self._observer.schedule(self.handler, self.root, recursive=False)
            self._observer.start()
        except Exception as exc:
            raise WatchError(f"cannot watch {self.root}: {exc}") from exc
        return self

    def wait_for(self, count: int, timeout: float) -> bool:
        """Block until at least ``count`` records exist (or timeout)."""
        end = time.monotonic() + timeout
        with self.handler.seen:
            while len(self.handler.records) < count:
                if self.handler.error is not None:
                    raise WatchError(str(self.handler.error))
                left = end - time.monotonic()
                if left <= 0:
                    return False
                self.handler.seen.wait(left)
        return True

    def settle(self, quiet: float = DEBOUNCE_S, timeout: float = 2.0):
        """Wait until no new record arrives for ``quiet`` seconds."""
        end = time.monotonic() + timeout
        n = -1
        while time.monotonic() < end:
            with self.handler.lock:
                cur = len(self.handler.records)
            if cur == n:
                break
            n = cur
            time.sleep(quiet)

    def stop(self) -> list[EventRecord]:
        if self._observer is not None:
            self._observer.stop()
            self._observer.join(timeout=5)
        if self.handler.error is not None:
            raise WatchError(str(self.handler.error))
        with self.handler.lock:
            return list(self.handler.records)


# -- driver -----------------------------------------------------------------

@dataclass
class ReplayResult:
    intended: list
    ledger: list          # EventRecords with a logical clock (operation index)
    recollected: list     # EventRecords seen by the watcher
    recollected_codes: list
    alignment: float

    def to_json(self) -> dict:
        return {"intended": self.intended,
                "recollected_codes": self.recollected_codes,
                "alignment": self.alignment,
                "ledger_fsw": serialize_fsw_log(self.ledger),
                "recollected_fsw": serialize_fsw_log(self.recollected)}


def _prepare_root(root: str):
    if os.path.exists(root):
        if not os.path.isdir(root) or os.listdir(root):
            raise SandboxViolation(f"sandbox root {root!r} must be a new or empty directory")
    else:
        os.makedirs(root)


def _decoy_content(rng, size):
    # plain text-like bytes, low to mid entropy
    return bytes(rng.integers(97, 101, size=size, dtype=np.uint8))


class Replayer:
    def __init__(self, config: SandboxConfig):
        self.config = config
        self.rng = np.random.default_rng([config.seed, 30])
        self.pool: list[str] = []
        self.counter = 0
        self.last_target = None
        self.ledger: list[EventRecord] = []

    def _path(self, name):
        return confined(self.config.root, name)

    def provision(self, codes):
        """Create the decoys up front so the watcher never sees them appear."""
        cfg = self.config
        _prepare_root(cfg.root)
        n = max(cfg.n_decoys, int(np.sum(np.asarray(codes) == 1)) + 2)
        for i in range(n):
            name = f"{cfg.decoy_prefix}{i:04d}.txt"
            with open(self._path(name), "wb") as fh:
                fh.write(_decoy_content(self.rng, cfg.decoy_size))
            self.pool.append(name)

    def _pick(self):
        choices = [p for p in self.pool if p != self.last_target] or self.pool
        name = choices[int(self.rng.integers(len(choices)))]
        self.last_target = name
        return name

    def _fresh_name(self, suffix):
        self.counter += 1
        return f"{self.config.decoy_prefix}new{self.counter:04d}{suffix}"

    def apply(self, code: int, step: int):
        """Perform one operation; returns its ledger record or None for padding."""
        code = int(code)
        if code == 0:
            return None
        if code == 1:
            name = self._pick()
            os.remove(self._path(name))
            self.pool.remove(name)
            rec = EventRecord(step, EventKind.DELETED, name)
        elif code == 5:
            name = self._fresh_name(".txt")
            with open(self._path(name), "xb"):
                pass
            self.pool.append(name)
            rec = EventRecord(step, EventKind.CREATED, name)
        elif code == 7:
            name = self._pick()
            new = self._fresh_name(".locked")
            os.rename(self._path(name), self._path(new))
            self.pool[self.pool.index(name)] = new
            self.last_target = new
            rec = EventRecord(step, EventKind.RENAMED, name)
        elif code in CHANGED_CODES:
            name = self._pick()
            data = payload_for_code(code, self.config.decoy_size, self.rng)
            with open(self._path(name), "wb") as fh:
                fh.write(data)
            rec = EventRecord(step, EventKind.CHANGED, name, normalized_entropy(data))
        else:
            raise ValueError(f"code {code} outside 0..9")
        self.ledger.append(rec)
        return rec


def replay(codes, sandbox: SandboxConfig, watch: bool = True) -> ReplayResult:
    """Replay ``codes`` in a fresh sandbox, optionally recollecting events with a watcher."""
    codes = [int(c) for c in np.asarray(codes).reshape(-1)]
    if any(c < 0 or c > 9 for c in codes):
        raise ValueError("codes must lie in 0..9")
    rp = Replayer(sandbox)
    rp.provision(codes)
    watcher = Watcher(sandbox.root).start() if watch else None
    try:
        for step, c in enumerate(codes):
            rec = rp.apply(c, step)
            if rec is not None and watcher is not None:
                watcher.wait_for(len(rp.ledger), sandbox.sync_timeout_s)
            if sandbox.delay_ms:
                time.sleep(sandbox.delay_ms / 1000)
        if watcher is not None:
            watcher.settle()
    finally:
        recollected = watcher.stop() if watcher is not None else []
    got = [encode_event(r) for r in recollected]
    return ReplayResult(codes, rp.ledger, recollected, got, alignment(codes, got))


def lcs_length(a, b) -> int:
    a, b = list(a), list(b)
    if not a or not b:
        return 0
    prev = np.zeros(len(b) + 1, dtype=np.int64)
    bb = np.asarray(b)
    for x in a:
        match = np.concatenate(([0], (bb == x).astype(np.int64)))
        # cur[j] = max(prev[j], cur[j-1], prev[j-1] + match[j])
        cand = np.maximum(prev, np.concatenate(([0], prev[:-1])) + match)
        prev = np.maximum.accumulate(cand)
    return int(prev[-1])


def alignment(intended, recollected) -> float:
    """LCS length over the longer of (non-padding intended, recollected)."""
    a = [int(c) for c in intended if int(c) != 0]
    b = [int(c) for c in recollected]
    if not a and not b:
        return 1.0
    return lcs_length(a, b) / max(len(a), len(b))


def first_events(codes, count: int = 100) -> list:
    """The first ``count`` non-padding codes of a log."""
    return [int(c) for c in np.asarray(codes).reshape(-1) if int(c) != 0][:count]
