from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmsl.log import EventLog
from pmsl.models import builtin_model, enumerate_variants, playout_log
from pmsl.splitter import FoldPlan, lovocv_folds, make_folds, split_log


def _variants(n: int) -> list[tuple[str, ...]]:
    return [(f"v{i:03d}",) for i in range(n)]


@pytest.mark.parametrize("order", ["sorted", "shuffled"])
def test_lovocv_as_k_equals_n(order):
    plan = make_folds(_variants(120), 120, seed=1, order=order)
    assert plan.sizes == [1] * 120
    assert lovocv_folds(_variants(120)).sizes == [1] * 120


def test_eight_folds_of_fifteen():
    assert make_folds(_variants(120), 8, seed=0).sizes == [15] * 8


@pytest.mark.parametrize("seed", range(10))
def test_remainders_on_distinct_folds(seed):
    plan = make_folds(_variants(27), 5, seed=seed)
    assert sorted(plan.sizes) == [5, 5, 5, 6, 6]


def test_k_out_of_range():
    with pytest.raises(ValueError):
        make_folds(_variants(5), 1, seed=0)
    with pytest.raises(ValueError):
        make_folds(_variants(5), 6, seed=0)
    with pytest.raises(ValueError):
        make_folds(_variants(5), 2, seed=0, order="random")


def test_sorted_folds_are_contiguous_runs():
    variants = sorted(enumerate_variants(builtin_model(3)))
    plan = make_folds(variants, 2, seed=4)
    assert set(plan.folds[0]) == set(variants[:64])
    # the first XOR choice is constant inside each half
    assert {("x1a" in v) for v in plan.folds[0]} == {True}


def test_shuffled_folds_depend_on_seed():
    a = make_folds(_variants(40), 4, seed=1, order="shuffled")
    b = make_folds(_variants(40), 4, seed=2, order="shuffled")
    assert a != b
    assert a.sizes == b.sizes


def test_split_example(tiny_log):
    s = split_log(tiny_log, [("A", "C")])
    assert s.training_log.variants == {("A", "B"): 2}
    assert s.test_log.variants == {("A", "C"): 1}


def test_split_errors(tiny_log):
    with pytest.raises(ValueError):
        split_log(tiny_log, [("A", "B"), ("A", "C")])
    with pytest.raises(ValueError):
        split_log(tiny_log, [("Z",)])


def test_model1_lovocv_test_size():
    log = playout_log(builtin_model(1), 12_000, seed=8)
    n, p = 12_000, 1 / 120
    sd = np.sqrt(n * p * (1 - p))
    for fold in lovocv_folds(log.variants).folds[:10]:
        assert abs(len(split_log(log, fold).test_log) - n * p) <= 4 * sd


def test_plan_json_roundtrip():
    plan = make_folds(_variants(11), 3, seed=5)
    assert FoldPlan.from_json(plan.to_json()) == plan


def test_plan_rejects_overlap():
    with pytest.raises(ValueError):
        FoldPlan(((("a",),), (("a",),)))


variant_sets = st.sets(st.tuples(st.sampled_from("ABC"), st.sampled_from("ABCD"), st.sampled_from("xyz")),
                       min_size=2, max_size=36)


@given(variant_sets, st.integers(0, 2 ** 31), st.sampled_from(["sorted", "shuffled"]), st.data())
def test_plan_exhaustive_and_balanced(variants, seed, order, data):
    k = data.draw(st.integers(2, len(variants)))
    plan = make_folds(variants, k, seed, order)
    flat = [v for f in plan.folds for v in f]
    assert sorted(flat) == sorted(variants)
    base = len(variants) // k
    assert all(s in (base, base + 1) for s in plan.sizes)
    assert make_folds(variants, k, seed, order) == plan


@given(variant_sets, st.integers(0, 2 ** 31), st.data())
def test_split_is_multiset_partition(variants, seed, data):
    rng = np.random.default_rng(seed)
    traces = [v for v in sorted(variants) for _ in range(int(rng.integers(1, 4)))]
    log = EventLog(traces)
    test = data.draw(st.sets(st.sampled_from(sorted(variants)), min_size=1, max_size=len(variants) - 1))
    s = split_log(log, test)
    assert len(s.training_log) + len(s.test_log) == len(log)
    assert not set(s.training_log.variants) & set(s.test_log.variants)
    assert s.training_log.variants + s.test_log.variants == log.variants
