import json

import numpy as np
import pytest

from ransomlab.logmodel import LOG_LENGTH, encode_event
from ransomlab.synthgen import (
    BENIGN_TEMPLATES,
    MALICIOUS_TEMPLATES,
    BehaviorTemplate,
    Block,
    CorpusConfig,
    build_corpus,
    default_templates,
    gen_log,
    load_templates,
)


def test_default_counts(corpus):
    assert len(corpus.train) == 258 + 747
    assert len(corpus.test) == 65 + 187
    assert sum(int(lg.label) for lg in corpus.train) == 747
    assert sum(int(lg.label) for lg in corpus.test) == 187


def test_logs_are_well_formed(corpus):
    for lg in corpus.train[:50] + corpus.test[:50]:
        assert lg.codes.shape == (LOG_LENGTH,)
        assert lg.padding_is_prefix()
        assert lg.n_events > 0


def test_build_is_deterministic():
    cfg = CorpusConfig(n_benign_train=4, n_malicious_train=4, n_benign_test=2, n_malicious_test=2)
    a, b = build_corpus(cfg), build_corpus(cfg)
    assert all(np.array_equal(x.codes, y.codes) for x, y in zip(a.train + a.test, b.train + b.test))
    c = build_corpus(CorpusConfig(n_benign_train=4, n_malicious_train=4, n_benign_test=2,
                                  n_malicious_test=2, seed=2))
    assert any(not np.array_equal(x.codes, y.codes) for x, y in zip(a.train, c.train))


def test_timestamps_strictly_increase():
    rng = np.random.default_rng(5)
    for t in default_templates():
        recs = gen_log(t, rng)
        ts = [r.timestamp for r in recs]
        assert all(b > a for a, b in zip(ts, ts[1:]))


def test_encoded_events_follow_template_alphabet():
    rng = np.random.default_rng(9)
    t = MALICIOUS_TEMPLATES[1]  # rename, create, encrypt
    codes = [encode_event(r) for r in gen_log(t, rng)]
    body = codes[-30:]
    assert set(body) <= {7, 5, 2}


def test_classes_differ_in_rename_and_delete_rate(corpus):
    def rate(label):
        logs = [lg for lg in corpus.train if int(lg.label) == label]
        return np.mean([np.isin(lg.codes, (1, 7)).sum() / lg.n_events for lg in logs])
    assert rate(1) > 3 * rate(0)


def test_family_mix_selects_templates():
    cfg = CorpusConfig(n_benign_train=2, n_malicious_train=6, n_benign_test=1, n_malicious_test=1,
                       family_mix={"burst-encryptor": 1.0})
    c = build_corpus(cfg)
    fams = c.meta["families"]
    assert {f for f, lg in zip(fams, c.train + c.test) if int(lg.label) == 1} == {"burst-encryptor"}


def test_block_validation():
    with pytest.raises(ValueError):
        Block({2: 0.5}, (1, 1))
    with pytest.raises(ValueError):
        Block({0: 1.0}, (1, 1))
    with pytest.raises(ValueError):
        Block({2: 1.0}, (3, 1))


def test_config_json_roundtrip(tmp_path):
    cfg = CorpusConfig(n_benign_train=3, seed=7, benign_mix={"idle": 1.0})
    back = CorpusConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back.to_json() == cfg.to_json()
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"templates": [t.to_json() for t in BENIGN_TEMPLATES]}))
    assert [t.name for t in load_templates(path)] == [t.name for t in BENIGN_TEMPLATES]


def test_template_json_roundtrip():
    for t in default_templates():
        assert BehaviorTemplate.from_json(json.loads(json.dumps(t.to_json()))) == t


def test_bad_counts_rejected():
    with pytest.raises(ValueError):
        CorpusConfig(n_benign_train=0)
