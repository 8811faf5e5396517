"""A small end-to-end attack: train detectors, train an ACGAN, regenerate until
segments pass the quality filter, stitch them into logs and count detections.

The GAN is tiny and trained for three epochs, and the quality threshold is
lowered to 0.5 so the loop finishes in two rounds. On this small, class-balanced
corpus the linear latent detectors miss the generated logs while the RBF SVM
flags them all. With the default 747/258 malicious/benign training split the
same setup is flagged by every detector.

Run: python demos/04_attack.py
"""
import numpy as np

from ransomlab.acgan import GanConfig
from ransomlab.classifiers.detectors import build_detector, extract_latent
from ransomlab.classifiers.textcnn import TextCnnConfig, train_textcnn
from ransomlab.latent import blind_spot_diagnostic
from ransomlab.logmodel import Corpus
from ransomlab.pipeline import AttackConfig, run_attack
from ransomlab.synthgen import CorpusConfig, build_corpus

corpus = build_corpus(CorpusConfig(n_benign_train=80, n_malicious_train=80,
                                   n_benign_test=30, n_malicious_test=30, seed=5))
X, y = Corpus.arrays(corpus.train)
tc = train_textcnn(X, y, TextCnnConfig(epochs=4))
detectors = {name: build_detector(name, X, y, tc)
             for name in ("textcnn", "lda_latent", "svmlin_latent", "svmrbf_latent")}

gan = GanConfig(latent_dim=32, batch_size=32, max_epochs=3, gen_channels=(16, 8),
                disc_channels=(8, 16), stop_tol=0)
run = run_attack(corpus, detectors, AttackConfig(K=40, tau=0.5, max_rounds=50, gan=gan),
                 verbose=True)
print("requested per round:", run.report.requested_per_round)
print("accepted per round: ", run.report.passed_per_round)
print(run.report.detection_csv())

G = np.stack([lg.codes for lg in run.logs]).astype(float)
raw = {"generated": G, "train_malicious": X[y == 1].astype(float), "train_benign": X[y == 0].astype(float)}
print(blind_spot_diagnostic(raw, {k: extract_latent(tc, v) for k, v in raw.items()}).to_json())
