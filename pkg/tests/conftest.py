import sys
import numpy as np
import pytest

from ransomlab.classifiers.textcnn import TextCnnConfig, train_textcnn
from ransomlab.logmodel import Corpus
from ransomlab.synthgen import CorpusConfig, build_corpus


@pytest.fixture(scope="session")
def corpus():
    return build_corpus(CorpusConfig())


@pytest.fixture(scope="session")
def corpus_arrays(corpus):
    Xtr, ytr = Corpus.arrays(corpus.train)
    Xte, yte = Corpus.arrays(corpus.test)
    return Xtr, ytr, Xte, yte


@pytest.fixture(scope="session")
def textcnn(corpus_arrays):
    Xtr, ytr, _, _ = corpus_arrays
    return train_textcnn(Xtr, ytr, TextCnnConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
