"""Text-CNN on raw sequences, then classical models on its 32-dim pooled features.

Run: python demos/02_detectors.py
"""
from ransomlab.classifiers.detectors import CLASSICAL_KINDS, build_detector, evaluate
from ransomlab.classifiers.metrics import reports_to_csv
from ransomlab.classifiers.textcnn import TextCnnConfig, train_textcnn
from ransomlab.logmodel import Corpus
from ransomlab.synthgen import CorpusConfig, build_corpus

corpus = build_corpus(CorpusConfig(n_benign_train=120, n_malicious_train=120,
                                   n_benign_test=40, n_malicious_test=40, seed=3))
Xtr, ytr = Corpus.arrays(corpus.train)
Xte, yte = Corpus.arrays(corpus.test)

tc = train_textcnn(Xtr, ytr, TextCnnConfig(epochs=6))
reports = {"Text-CNN": evaluate(tc, Xte, yte)}
for kind in CLASSICAL_KINDS:
    reports[f"{kind} (raw)"] = build_detector(f"{kind}_raw", Xtr, ytr).evaluate(Xte, yte)
    reports[f"{kind} (latent)"] = build_detector(f"{kind}_latent", Xtr, ytr, tc).evaluate(Xte, yte)
print(reports_to_csv(reports))
