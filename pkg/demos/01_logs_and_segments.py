"""From file-system events to the 28x28 arrays the GAN sees.

Run: python demos/01_logs_and_segments.py
"""
import numpy as np

from ransomlab.logmodel import concat_segments, encode_event, parse_fsw_log, segment, to_feature_sequence
from ransomlab.synthgen import CorpusConfig, build_corpus

FSW = """0,created,docs/note.txt
4,changed,docs/report.docx,0.97
9,renamed,docs/report.docx.locked
15,deleted,docs/old.xlsx
"""

records = parse_fsw_log(FSW)
print("codes of a hand-written log:", [encode_event(r) for r in records])
seq = to_feature_sequence(records)
print("feature sequence: length", len(seq), "last six", seq[-6:].tolist())

corpus = build_corpus(CorpusConfig(n_benign_train=4, n_malicious_train=4,
                                   n_benign_test=2, n_malicious_test=2, seed=7))
for lg in corpus.train[:2] + corpus.train[-2:]:
    body = lg.codes[lg.codes > 0]
    print(f"{lg.label.name:9s} events {body.size:4d} "
          f"code histogram {np.bincount(body, minlength=10)[1:].tolist()}")

log = corpus.train[0]
segs = segment(log)
print("segments:", len(segs), "grid", segs[0].as_grid().shape,
      "round trip", np.array_equal(concat_segments(segs), log.codes))
