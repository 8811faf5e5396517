import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ransomlab.errors import EmptyReference
from ransomlab.ngram import (
    NGramSet,
    References,
    batch_quality,
    extract_ngrams,
    filter_quality,
    five_number_summary,
    gram_keys,
    overlap_counts,
    quality_ratio,
    sample_quality,
)


def oracle_grams(codes, n):
    codes = [int(c) for c in codes]
    return {tuple(codes[i:i + n]) for i in range(len(codes) - n + 1) if 0 not in codes[i:i + n]}


def oracle_quality(sample, mal, ben, n):
    S = oracle_grams(sample, n)
    M = set().union(*(oracle_grams(m, n) for m in mal))
    B = set().union(*(oracle_grams(b, n) for b in ben))
    im, ib, imb = len(S & M), len(S & B), len(S & M & B)
    if ib - imb == 0:
        return math.inf if im - imb > 0 else 0.0
    return (im - imb) / (ib - imb)


def _rand_seq(rng, length, alphabet=4, zero_p=0.1):
    s = rng.integers(1, alphabet + 1, size=length)
    s[rng.random(length) < zero_p] = 0
    return s


# -- worked examples --------------------------------------------------------------

MAL = [[1, 2, 3, 4]]   # 3-grams {123, 234}
BEN = [[2, 3, 4, 5]]   # 3-grams {234, 345}


@pytest.mark.parametrize("sample,q", [
    ([1, 2, 3, 4, 5], 1.0),     # (2 - 1) / (2 - 1)
    ([1, 2, 3], math.inf),      # only a malicious-only gram
    ([9, 9, 9], 0.0),           # matches nothing
    ([3, 4, 5], 0.0),           # only a benign-only gram
    ([2, 3, 4], 0.0),           # only the shared gram: 0 / 0
])
def test_worked_examples(sample, q):
    assert sample_quality(sample, MAL, BEN, 3) == q


def test_overlap_counts_example():
    refs = References(MAL, BEN)
    assert overlap_counts([1, 2, 3, 4, 5], refs, 3) == (2, 2, 1)


def test_quality_ratio_cases():
    assert quality_ratio(5, 3, 1) == 2.0
    assert quality_ratio(3, 1, 1) == math.inf
    assert quality_ratio(1, 1, 1) == 0.0


def test_padding_grams_ignored():
    assert gram_keys([0, 1, 2, 3, 0, 4, 5, 6], 3).tolist() == [123, 456]
    assert gram_keys([0, 0, 0, 0], 3).size == 0
    assert gram_keys([1, 2], 3).size == 0


def test_n_out_of_range():
    with pytest.raises(ValueError):
        gram_keys([1, 2, 3], 2)
    with pytest.raises(ValueError):
        gram_keys([1] * 10, 8)


def test_empty_reference_raises():
    with pytest.raises(EmptyReference):
        sample_quality([1, 2, 3], [], BEN, 3)
    with pytest.raises(EmptyReference):
        References(MAL, [])


def test_ngram_set_operations():
    a = extract_ngrams([1, 2, 3, 4], 3)
    b = extract_ngrams([2, 3, 4, 5], 3)
    assert a.grams == {(1, 2, 3), (2, 3, 4)}
    assert (a & b).grams == {(2, 3, 4)}
    assert (2, 3, 4) in a and (3, 4, 5) not in a and (1, 2) not in a
    assert len(a) == 2
    with pytest.raises(ValueError):
        a & extract_ngrams([1, 2, 3, 4], 4)


def test_ngram_set_with_leading_nine_and_ones():
    s = extract_ngrams([9, 1, 1, 1, 9], 4)
    assert s.grams == {(9, 1, 1, 1), (1, 1, 1, 9)}


# -- oracle equivalence -------------------------------------------------------------

@pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
def test_matches_bruteforce_oracle(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(40):
        mal = [_rand_seq(rng, int(rng.integers(5, 60)), alphabet=3) for _ in range(3)]
        ben = [_rand_seq(rng, int(rng.integers(5, 60)), alphabet=3) for _ in range(3)]
        sample = _rand_seq(rng, int(rng.integers(1, 80)), alphabet=3)
        assert sample_quality(sample, mal, ben, n) == oracle_quality(sample, mal, ben, n)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 9), max_size=40), st.integers(3, 7))
def test_gram_keys_match_oracle(codes, n):
    from ransomlab.ngram import unpack_key
    assert {unpack_key(k, n) for k in gram_keys(codes, n)} == oracle_grams(codes, n)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=30),
       st.lists(st.integers(1, 3), min_size=3, max_size=30),
       st.lists(st.integers(1, 3), min_size=3, max_size=30))
def test_quality_property_oracle(sample, mal, ben):
    assert sample_quality(sample, [mal], [ben], 3) == oracle_quality(sample, [mal], [ben], 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=3, max_size=30),
       st.lists(st.integers(1, 4), min_size=3, max_size=30))
def test_swapping_references_inverts_ratio(mal, ben):
    sample = mal[: len(mal) // 2 + 2] + ben[: len(ben) // 2 + 2]
    q = sample_quality(sample, [mal], [ben], 3)
    r = sample_quality(sample, [ben], [mal], 3)
    if 0 < q < math.inf:
        assert r == pytest.approx(1 / q)
    elif q == math.inf:
        assert r == 0.0


# -- batch summaries --------------------------------------------------------------------

def test_five_number_summary_known_values():
    s = five_number_summary([1, 2, 3, 4, 5, 6, 7, 8, 100])
    assert (s["min"], s["q1"], s["median"], s["q3"], s["max"]) == (1, 3, 5, 7, 100)
    assert s["outliers"] == [8]   # index of 100 (q3 + 1.5 * iqr = 13)


def test_five_number_summary_with_infinities():
    s = five_number_summary([1.0, 2.0, math.inf, math.inf])
    assert s["max"] == math.inf and s["min"] == 1.0
    assert s["outliers"] == []


def test_five_number_summary_empty():
    with pytest.raises(ValueError):
        five_number_summary([])


def test_batch_quality_report():
    refs = References(MAL, BEN)
    rep = batch_quality([[1, 2, 3, 4, 5], [1, 2, 3]], refs, n_range=(3,), tau=1.5)
    assert rep.q(0, 3) == 1.0 and rep.q(1, 3) == math.inf
    assert not rep.passes(0, (3,)) and rep.passes(1, (3,))
    assert rep.to_csv().splitlines() == ["sample_id,n,q", "0,3,1.0", "1,3,inf"]
    summary = json.loads(rep.summary_json())
    assert summary["summary"]["3"]["max"] == "inf"


def test_filter_quality_partitions():
    refs = References(MAL, BEN)
    samples = [[1, 2, 3, 4, 5], [1, 2, 3], [9, 9, 9]]
    passed, failed = filter_quality(samples, refs, tau=1.5, n_rule=(3,))
    assert passed == [[1, 2, 3]]
    assert failed == [[1, 2, 3, 4, 5], [9, 9, 9]]
    assert filter_quality([], refs, 1.5, (3,)) == ([], [])
    with pytest.raises(ValueError):
        filter_quality(samples, refs, tau=0.0)


def test_real_malicious_segments_score_higher_than_benign(corpus):
    from ransomlab.logmodel import segment
    refs = References.from_logs(corpus.test)
    mal = [s for lg in corpus.train[-40:] for s in segment(lg)]
    ben = [s for lg in corpus.train[:40] for s in segment(lg)]
    q_mal = np.median([sample_quality(s, refs=refs, n=4) for s in mal])
    q_ben = np.median([sample_quality(s, refs=refs, n=4) for s in ben])
    assert q_mal > 1.5 > q_ben
