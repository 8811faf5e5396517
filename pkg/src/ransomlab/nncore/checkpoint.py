"""Checkpoint files: one JSON header line, then a little-endian float64 blob."""

from __future__ import annotations

import json

import numpy as np

MAGIC = "ransomlab-ckpt"


def dumps_checkpoint(meta: dict, arrays) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    header = {"format": MAGIC, "version": 1, "meta": meta, "arrays": entries}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return head + b"\n" + b"".join(chunks)


def loads_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    head, _, blob = data.partition(b"\n")
    header = json.loads(head.decode("utf-8"))
    if header.get("format") != MAGIC:
        raise ValueError("not a ransomlab checkpoint")
    flat = np.frombuffer(blob, dtype="<f8")
    arrays = {}
    for e in header["arrays"]:
        size = int(np.prod(e["shape"], dtype=np.int64))
        arrays[e["name"]] = flat[e["offset"]:e["offset"] + size].reshape(e["shape"]).astype(np.float64)
    return header["meta"], arrays


def save_checkpoint(path, meta: dict, arrays) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(meta, arrays))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())


def assign(targets, arrays: dict) -> None:
    """Copy loaded arrays into existing ``(name, array)`` targets, in place."""
    for name, dst in targets:
        src = arrays[name]
        if src.shape != dst.shape:
            raise ValueError(f"{name}: checkpoint shape {src.shape} != model shape {dst.shape}")
        dst[...] = src
