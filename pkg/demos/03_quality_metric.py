"""The n-gram quality ratio separates malicious from benign segments.

q counts n-grams a sample shares only with malicious reference logs, divided by
those it shares only with benign ones. Real malicious segments should score high.

Run: python demos/03_quality_metric.py
"""
import numpy as np

from ransomlab.ngram import References, batch_quality, filter_quality
from ransomlab.pipeline import training_segments
from ransomlab.synthgen import CorpusConfig, build_corpus

corpus = build_corpus(CorpusConfig(n_benign_train=60, n_malicious_train=60,
                                   n_benign_test=30, n_malicious_test=30, seed=2))
refs = References.from_logs(corpus.test)
segs, labels = training_segments(corpus.train)
busy = [i for i, s in enumerate(segs) if s.codes.any()]
for lab, name in ((1, "malicious"), (0, "benign")):
    group = [segs[i] for i in busy if labels[i] == lab]
    ok, _ = filter_quality(group, refs, 1.5, (4, 5, 6))
    rep = batch_quality(group, refs, (4, 5, 6), 1.5)
    print(f"{name:9s} segments {len(group):4d}  pass rate at tau=1.5: {len(ok) / len(group):.2f}")
    for n, st in rep.summary.items():
        print(f"    n={n}: min {st['min']:.2f}  median {st['median']:.2f}  max {st['max']:.2f}")

noise = np.random.default_rng(0).integers(1, 10, size=(5, 784))
ok, _ = filter_quality(list(noise), refs, 1.5, (4, 5, 6))
print("uniform noise passes:", len(ok), "of 5")
