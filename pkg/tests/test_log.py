from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmsl.log import (
    BOS, EOS, PAD, EmptyLogError, EncodingError, EventLog, LogFormatError, VariantTable, Vocabulary,
    all_prefixes, build_prefix_dataset, occ, one_hot, read_log, variants_of, write_log,
)
from pmsl.models import builtin_model, enumerate_variants, playout_log

traces_st = st.lists(st.lists(st.sampled_from("ABCDE"), min_size=1, max_size=8), min_size=1, max_size=30)


def test_variants_of_counts(tiny_log):
    assert variants_of(tiny_log) == {("A", "B"): 2, ("A", "C"): 1}


def test_variants_of_empty_log():
    assert variants_of(EventLog([])) == {}


def test_occ(tiny_log):
    assert occ(["A", "B"], tiny_log) == 2
    assert occ(["Z"], tiny_log) == 0


def test_model1_playout_variants_within_enumeration():
    net = builtin_model(1)
    log = playout_log(net, 12_000, seed=3)
    enumerated = set(enumerate_variants(net))
    assert len(log) == 12_000
    assert len(log.variants) <= 120
    assert set(log.variants) <= enumerated


def test_model6_all_loops_once_frequency():
    net = builtin_model(6)
    log = playout_log(net, 2700, seed=5)
    once = min(log.variants, key=len)
    assert len(once) == 16
    n, p = 2700, 0.5 ** 3
    assert abs(occ(once, log) - n * p) <= 3 * np.sqrt(n * p * (1 - p))


def test_vocabulary_layout():
    vocab = Vocabulary.from_activities(["C", "A", "B", "A"])
    assert vocab.labels == ("A", "B", "C", BOS, EOS)
    assert (vocab.bos, vocab.eos, vocab.pad) == (3, 4, 5)
    assert vocab.n_targets == 4
    assert vocab.target_position(vocab.eos) == 3
    assert vocab.target_label(3) == EOS
    with pytest.raises(ValueError):
        vocab.target_position(vocab.bos)


def test_reserved_labels_rejected():
    with pytest.raises(ValueError):
        EventLog([["A", BOS]])
    with pytest.raises(ValueError):
        EventLog([[]])


def test_one_hot():
    vocab = Vocabulary.from_activities("ABC")
    assert one_hot("A", vocab)[:3].tolist() == [1, 0, 0]
    assert not one_hot(PAD, vocab).any()
    with pytest.raises(EncodingError, match="D"):
        one_hot("D", vocab)


def test_prefix_pairs_example():
    log = EventLog([["A", "B"]])
    v = log.vocabulary
    data = all_prefixes(log, 3)
    assert data.inputs.tolist() == [[v.pad, v.pad, v.bos], [v.pad, v.bos, 0], [v.bos, 0, 1]]
    assert data.targets.tolist() == [0, 1, v.eos]


def test_prefix_left_truncation():
    log = EventLog([["A", "B", "C", "D"]])
    data = all_prefixes(log, 2)
    assert data.inputs[-1].tolist() == [2, 3]
    assert data.targets[-1] == log.vocabulary.eos


def test_model2_pair_count():
    log = playout_log(builtin_model(2), 500, seed=0)
    tr, va = build_prefix_dataset(log, 6, seed=1)
    assert len(tr) + len(va) == len(log) * 20
    assert len(va) == round(0.2 * len(log) * 20)


def test_prefix_split_is_seeded():
    log = playout_log(builtin_model(4), 200, seed=0)
    a = build_prefix_dataset(log, 6, seed=9)
    b = build_prefix_dataset(log, 6, seed=9)
    c = build_prefix_dataset(log, 6, seed=10)
    assert np.array_equal(a[0].inputs, b[0].inputs)
    assert not np.array_equal(a[0].inputs, c[0].inputs)


def test_roundtrip(tmp_path, tiny_log):
    path = tmp_path / "log.jsonl"
    write_log(tiny_log, path)
    back = read_log(path)
    assert back.variants == tiny_log.variants
    assert back.case_ids == tiny_log.case_ids


def test_large_roundtrip(tmp_path):
    log = playout_log(builtin_model(1), 12_000, seed=1)
    write_log(log, tmp_path / "l.jsonl")
    assert len(read_log(tmp_path / "l.jsonl")) == 12_000


def test_malformed_lines(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"case_id": "1", "activities": ["A"]}) + "\n" + json.dumps({"activities": []}) + "\n")
    with pytest.raises(LogFormatError, match=":2:"):
        read_log(path)
    path.write_text("{not json\n")
    with pytest.raises(LogFormatError, match=":1:"):
        read_log(path)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert len(read_log(path)) == 0
    with pytest.raises(EmptyLogError):
        read_log(path, allow_empty=False)


def test_variant_table_csv():
    table = VariantTable({("A", "B"): 2, ("C",): 1})
    text = table.to_csv()
    assert text.splitlines() == ["variant;count", "A|B;2", "C;1"]
    assert VariantTable.from_csv(text) == table


@given(traces_st)
def test_occurrences_sum_to_size(traces):
    log = EventLog(traces)
    assert sum(log.variants.values()) == len(log)
    assert all(occ(v, log) == n for v, n in log.variants.items())


@given(traces_st, st.integers(1, 10))
def test_prefix_count_and_padding(traces, prefix_len):
    log = EventLog(traces)
    v = log.vocabulary
    data = all_prefixes(log, prefix_len)
    assert len(data) == sum(len(t) + 1 for t in traces)
    assert not np.isin(data.targets, [v.bos, v.pad]).any()
    assert not (data.inputs == v.eos).any()
    for row in data.inputs:
        pads = row == v.pad
        assert not pads[np.argmin(pads):].any()  # padding only at the front


@given(traces_st)
@settings(max_examples=30)
def test_roundtrip_property(tmp_path_factory, traces):
    log = EventLog(traces)
    path = tmp_path_factory.mktemp("rt") / "log.jsonl"
    write_log(log, path)
    assert read_log(path).variants == log.variants


@given(st.sets(st.text("abcdefgh", min_size=1, max_size=3), min_size=1, max_size=8))
def test_one_hot_orthonormal(labels):
    vocab = Vocabulary.from_activities(labels)
    mat = np.array([one_hot(a, vocab) for a in vocab.labels])
    assert np.array_equal(mat @ mat.T, np.eye(vocab.size))
    assert Vocabulary.from_activities(sorted(labels, reverse=True)) == vocab
