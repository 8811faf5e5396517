"""Replay a code sequence as real file operations inside a throwaway sandbox.

Only decoy files created by the replayer inside the sandbox are touched. A
watcher re-collects the events, and the alignment score compares them with the
intended codes.

Run: python demos/05_replay.py
"""
import os
import tempfile

from ransomlab.replayer import SandboxConfig, replay

codes = [5, 5, 2, 7, 5, 4, 2, 7, 1, 3, 8, 6, 9]
with tempfile.TemporaryDirectory() as tmp:
    res = replay(codes, SandboxConfig(os.path.join(tmp, "box"), seed=1))
    print("intended:   ", codes)
    print("recollected:", res.recollected_codes)
    print(f"alignment:   {res.alignment:.3f}")
    for rec in res.recollected[:5]:
        print("  ", rec.kind.name, rec.path, "" if rec.entropy is None else f"{rec.entropy:.3f}")
    print("sandbox contents:", sorted(os.listdir(os.path.join(tmp, "box")))[:6], "...")
