import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ransomlab.errors import (
    EmptyBuffer,
    MissingEntropy,
    NotEnoughSegments,
    ParseError,
    ShapeError,
    TimeOrder,
)
from ransomlab.logmodel import (
    LOG_LENGTH,
    SEGMENT_LENGTH,
    Corpus,
    EventKind,
    EventRecord,
    ExecutionLog,
    Label,
    Origin,
    Segment,
    concat_segments,
    dumps_jsonl,
    encode_event,
    entropy_bin,
    entropy_code,
    group_segments,
    normalized_entropy,
    parse_fsw_log,
    read_corpus,
    round_codes,
    segment,
    serialize_fsw_log,
    to_feature_sequence,
    write_corpus,
)


# -- entropy ------------------------------------------------------------------

def test_entropy_constant_buffer_is_zero():
    assert normalized_entropy(b"\x07" * 1000) == 0.0


def test_entropy_uniform_alphabet_is_one():
    assert normalized_entropy(bytes(range(256)) * 3) == 1.0


def test_entropy_aabb():
    # two symbols, p = 1/2 each: 1 bit out of 8
    assert abs(normalized_entropy(b"aabb") - 0.125) < 1e-12


def test_entropy_empty_raises():
    with pytest.raises(EmptyBuffer):
        normalized_entropy(b"")


@given(st.binary(min_size=1, max_size=300))
def test_entropy_in_unit_interval(data):
    e = normalized_entropy(data)
    assert 0.0 <= e <= 1.0


@given(st.binary(min_size=1, max_size=200), st.randoms(use_true_random=False))
def test_entropy_permutation_invariant(data, rnd):
    shuffled = bytearray(data)
    rnd.shuffle(shuffled)
    assert normalized_entropy(bytes(shuffled)) == pytest.approx(normalized_entropy(data), abs=1e-12)


# -- feature codes --------------------------------------------------------------

@pytest.mark.parametrize("e,code", [
    (0.0, 4), (0.19999, 4), (0.2, 3), (0.39, 3), (0.4, 8), (0.5, 8), (0.6, 9),
    (0.79, 9), (0.8, 6), (0.89999, 6), (0.9, 2), (0.95, 2), (1.0, 2),
])
def test_entropy_code_bins(e, code):
    assert entropy_code(e) == code


def test_entropy_code_rejects_out_of_range():
    for bad in (-0.01, 1.01, float("nan")):
        with pytest.raises(ValueError):
            entropy_code(bad)


@pytest.mark.parametrize("code", [2, 3, 4, 6, 8, 9])
def test_entropy_bin_inverts_code(code):
    lo, hi = entropy_bin(code)
    assert entropy_code(lo) == code
    assert entropy_code((lo + hi) / 2) == code


def test_entropy_bins_tile_unit_interval():
    bins = sorted(entropy_bin(c) for c in (2, 3, 4, 6, 8, 9))
    assert bins[0][0] == 0.0 and bins[-1][1] == 1.0
    for (a, b), (c, d) in zip(bins, bins[1:]):
        assert b == c


def test_encode_event_kinds():
    assert encode_event(EventRecord(0, EventKind.DELETED, "a")) == 1
    assert encode_event(EventRecord(0, EventKind.CREATED, "a")) == 5
    assert encode_event(EventRecord(0, EventKind.RENAMED, "a")) == 7
    assert encode_event(EventRecord(0, EventKind.CHANGED, "a", 0.95)) == 2


def test_changed_without_entropy_rejected():
    with pytest.raises(MissingEntropy):
        EventRecord(0, EventKind.CHANGED, "a")


def test_entropy_on_non_change_rejected():
    with pytest.raises(ValueError):
        EventRecord(0, EventKind.CREATED, "a", 0.5)


# -- FSW text format ------------------------------------------------------------

FSW = """100,created,C:/docs/a.txt
105,changed,C:/docs/a.txt,0.95
110,renamed,C:/docs/a.txt
120,deleted,C:/docs/b.txt
"""


def test_parse_fsw_log():
    recs = parse_fsw_log(FSW)
    assert [encode_event(r) for r in recs] == [5, 2, 7, 1]
    assert recs[1].entropy == 0.95


def test_parse_serialize_identity():
    assert serialize_fsw_log(parse_fsw_log(FSW)) == FSW


def test_parse_skips_blank_lines():
    assert len(parse_fsw_log("\n" + FSW + "\n\n")) == 4


@pytest.mark.parametrize("text,line", [
    ("1,created,a\nxx,deleted,b\n", 2),
    ("1,exploded,a\n", 1),
    ("1,changed,a\n", 1),
    ("1,changed,a,hot\n", 1),
    ("1,created\n", 1),
    ("1,changed,a,1.5\n", 1),
])
def test_parse_errors_carry_line_number(text, line):
    with pytest.raises(ParseError) as exc:
        parse_fsw_log(text)
    assert exc.value.line_no == line


def test_parse_time_order():
    with pytest.raises(TimeOrder) as exc:
        parse_fsw_log("5,created,a\n4,deleted,a\n")
    assert exc.value.line_no == 2


record_strategy = st.builds(
    lambda ts, kind, name, e: EventRecord(ts, kind, name, e if kind is EventKind.CHANGED else None),
    st.integers(0, 10**9),
    st.sampled_from(list(EventKind)),
    st.text(alphabet="abcdefgh/._-", min_size=1, max_size=12),
    st.floats(0.0, 1.0, allow_nan=False),
)


@given(st.lists(record_strategy, max_size=20))
def test_serialize_parse_roundtrip(records):
    records = sorted(records, key=lambda r: r.timestamp)
    assert parse_fsw_log(serialize_fsw_log(records)) == records


# -- fixed-length sequences ---------------------------------------------------------

def _records(codes):
    kinds = {1: EventKind.DELETED, 5: EventKind.CREATED, 7: EventKind.RENAMED}
    mids = {c: sum(entropy_bin(c)) / 2 for c in (2, 3, 4, 6, 8, 9)}
    return [EventRecord(i, kinds.get(c, EventKind.CHANGED), "f", mids.get(c)) for i, c in enumerate(codes)]


def test_feature_sequence_left_pads():
    seq = to_feature_sequence(_records([5, 2, 7]))
    assert seq.shape == (LOG_LENGTH,)
    assert (seq[:-3] == 0).all()
    assert seq[-3:].tolist() == [5, 2, 7]


def test_feature_sequence_truncates_keeping_first():
    codes = [5] * 3000 + [1] * 10
    seq = to_feature_sequence(_records(codes))
    assert (seq == 5).all()
    last = to_feature_sequence(_records(codes), keep="last")
    assert (last[-10:] == 1).all()


def test_feature_sequence_short_length():
    assert to_feature_sequence(_records([2, 3]), length=4).tolist() == [0, 0, 2, 3]


# -- logs and segments ----------------------------------------------------------------

def _random_log(rng, label=1):
    n = int(rng.integers(1, LOG_LENGTH + 1))
    codes = np.zeros(LOG_LENGTH, dtype=np.int8)
    codes[LOG_LENGTH - n:] = rng.integers(1, 10, size=n)
    return ExecutionLog(codes, label)


def test_execution_log_validates():
    with pytest.raises(ShapeError):
        ExecutionLog(np.zeros(10, dtype=np.int8), 1)
    bad = np.zeros(LOG_LENGTH, dtype=np.int8)
    bad[0] = 12
    with pytest.raises(ValueError):
        ExecutionLog(bad, 0)


def test_padding_prefix_detection():
    codes = np.zeros(LOG_LENGTH, dtype=np.int8)
    codes[-5:] = 2
    assert ExecutionLog(codes, 1).padding_is_prefix()
    codes[-1] = 0
    assert not ExecutionLog(codes, 1).padding_is_prefix()


def test_segment_shapes():
    rng = np.random.default_rng(0)
    segs = segment(_random_log(rng))
    assert len(segs) == 4
    assert all(s.codes.shape == (SEGMENT_LENGTH,) for s in segs)
    # 4 * 784 - 3000 = 136 trailing zeros in the last segment
    assert (segs[3].codes[-136:] == 0).all()
    assert segs[0].as_grid().shape == (28, 28)


def test_segment_concat_identity_on_random_logs():
    rng = np.random.default_rng(7)
    for _ in range(100):
        log = _random_log(rng)
        assert np.array_equal(concat_segments(segment(log)), log.codes)


def test_concat_not_enough_segments():
    with pytest.raises(NotEnoughSegments):
        concat_segments([np.zeros(SEGMENT_LENGTH)] * 3)


def test_group_segments_count():
    segs = [Segment(np.full(SEGMENT_LENGTH, 2.0)) for _ in range(5029)]
    assert len(group_segments(segs)) == 1257


def test_segment_wrong_length():
    with pytest.raises(ShapeError):
        segment(np.zeros(100))
    with pytest.raises(ShapeError):
        Segment(np.zeros(10))


@pytest.mark.parametrize("v,r", [(-3.0, 0), (0.49, 0), (0.5, 1), (1.5, 2), (2.5, 3),
                                 (8.6, 9), (12.0, 9)])
def test_round_codes_half_away_and_clamp(v, r):
    assert round_codes(np.array([v]))[0] == r


@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=50))
def test_round_codes_alphabet_closure(vals):
    r = round_codes(np.array(vals))
    assert r.min() >= 0 and r.max() <= 9


# -- corpus files ----------------------------------------------------------------------

def test_corpus_jsonl_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    corpus = Corpus([_random_log(rng, 1), _random_log(rng, 0)], [_random_log(rng, 1)], seed=3)
    path = tmp_path / "c.jsonl"
    write_corpus(corpus, path)
    back = read_corpus(path)
    assert [lg.codes.tolist() for lg in back.train] == [lg.codes.tolist() for lg in corpus.train]
    assert [int(lg.label) for lg in back.test] == [1]
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"codes", "label", "origin", "split"}
    assert len(first["codes"]) == LOG_LENGTH and first["origin"] == "real"


def test_dumps_jsonl_origin():
    log = ExecutionLog(np.full(LOG_LENGTH, 2, dtype=np.int8), Label.MALICIOUS, Origin.GENERATED)
    obj = json.loads(dumps_jsonl([log]))
    assert obj["origin"] == "generated" and obj["label"] == 1
    assert dumps_jsonl([]) == ""


def test_corpus_arrays():
    rng = np.random.default_rng(1)
    X, y = Corpus.arrays([_random_log(rng, 0), _random_log(rng, 1)])
    assert X.shape == (2, LOG_LENGTH) and y.tolist() == [0, 1]
    X0, y0 = Corpus.arrays([])
    assert X0.shape == (0, LOG_LENGTH) and y0.size == 0
    assert math.isfinite(float(X.mean()))
