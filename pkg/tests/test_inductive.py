from __future__ import annotations

import functools
import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np

from pmsl.inductive import baseline_run, build_dfg, discover, is_flower
from pmsl.log import EventLog
from pmsl.metrics import abs_metrics
from pmsl.models import builtin_model, enumerate_variants, playout_log
from pmsl.splitter import lovocv_folds, make_folds
from pmsl.treegen import GenSettings, generate_tree
from pmsl.trees import LOOP, SEQ, XOR, format_tree, tree_language


def test_dfg_counts():
    g = build_dfg(EventLog([["A", "B"]] * 2))
    assert g.edges == {("A", "B"): 2}
    assert g.starts == {"A": 2} and g.ends == {"B": 2}
    assert not build_dfg(EventLog([["A"]])).edges
    with pytest.raises(ValueError):
        build_dfg(EventLog([]))


def test_model1_parallel_block_fully_connected():
    variants = enumerate_variants(builtin_model(1))
    g = build_dfg(EventLog.from_variants(variants))
    # oracle: adjacencies read directly off the enumerated traces
    adjacent = {(a, b) for v in variants for a, b in zip(v, v[1:])}
    assert set(g.edges) == adjacent
    branch = [f"p{i}" for i in range(1, 6)]
    for a, b in itertools.permutations(branch, 2):
        assert g.has_edge(a, b)


def test_small_cuts():
    assert format_tree(discover([["A", "B"], ["B", "A"]])) == "+(A, B)"
    assert format_tree(discover([["A", "B", "C"]])) == "->(A, B, C)"
    assert format_tree(discover([["A"], ["B"]])) == "X(A, B)"
    assert format_tree(discover([["A", "B", "A", "B"], ["A", "B"]])) in ("*(->(A, B), tau)", "*(A, B)")
    assert format_tree(discover([["A", "B", "C"], ["A", "C"]])) == "->(A, X(tau, B), C)"


def test_loop_cut_with_redo_activity():
    tree = discover([["A", "C", "B"], ["A", "D", "A", "C", "B"]])
    assert format_tree(tree) == "->(*(A, D), C, B)"


def test_flower_fallback():
    log = [list("ABC"), list("CAB"), list("BCA")]
    tree = discover(log)
    assert is_flower(tree)
    assert format_tree(tree) == "*(X(A, B, C), tau)"
    assert not is_flower(discover([["A", "B"], ["B", "A"]]))


@pytest.mark.parametrize("model_id", [1, 2, 5, 6])
def test_block_structured_models_rediscovered(model_id):
    variants = enumerate_variants(builtin_model(model_id))
    tree = discover(EventLog.from_variants(variants))
    assert set(enumerate_variants(tree)) == set(variants)


def test_model3_dependency_is_lost():
    variants = enumerate_variants(builtin_model(3))
    tree = discover(EventLog.from_variants(variants))
    assert len(enumerate_variants(tree)) == 256


def test_discovery_is_deterministic():
    log = playout_log(builtin_model(4), 640, seed=2)
    assert discover(log) == discover(EventLog(list(reversed(log.traces))))


def test_baseline_model3_lovocv_near_half():
    log = playout_log(builtin_model(3), 100 * 128, seed=9)
    plan = lovocv_folds(log.variants)
    rows = baseline_run(log, type(plan)(plan.folds[:4]), seed=1)
    for _, rep in rows:
        assert abs(rep.f_pmsl - 0.5) < 0.1
        assert rep.f_a_pmsl == 1.0


def test_baseline_shapes():
    log = playout_log(builtin_model(2), 2560, seed=1)
    plan = make_folds(log.variants, 4, seed=3)
    rows = baseline_run(log, plan, seed=1)
    assert len(rows) == 4
    assert all(rep.size_sim == len(log) for _, rep in rows)


def accepts(tree, trace) -> bool:
    """Brute-force membership of a trace in a tree's language (independent of the enumerators)."""

    @functools.lru_cache(maxsize=None)
    def member(node, s):
        if node.is_leaf:
            return s == () if node.is_tau else s == (node.label,)
        kids = node.children
        if node.op == XOR:
            return any(member(c, s) for c in kids)
        if node.op == SEQ:
            return seq_member(kids, s)
        if node.op == LOOP:
            # do (redo do)*; an iteration consuming nothing adds no words, so require progress
            do, redo = kids
            n = len(s)
            return any(
                member(do, s[:k]) and (k == n or any(
                    member(redo, s[k:m]) and member(node, s[m:]) for m in range(max(k, 1), n + 1)))
                for k in range(n + 1)
            )
        for assign in itertools.product(range(len(kids)), repeat=len(s)):
            if all(member(c, tuple(a for a, w in zip(s, assign) if w == i)) for i, c in enumerate(kids)):
                return True
        return False

    def seq_member(kids, s):
        if not kids:
            return s == ()
        return any(member(kids[0], s[:k]) and seq_member(kids[1:], s[k:]) for k in range(len(s) + 1))

    return member(tree, tuple(trace))


def test_membership_oracle():
    t = discover([["A", "B"], ["B", "A"]])
    assert accepts(t, "AB") and accepts(t, "BA") and not accepts(t, "AA")
    mixed = discover([["A", "B", "C"], ["C", "B", "A"], ["B", "A", "C", "A"]])
    assert accepts(mixed, "AACAB") and not accepts(mixed, "ACA") and not accepts(mixed, "")
    lp = discover([["A", "C", "B"], ["A", "D", "A", "C", "B"]])
    assert accepts(lp, "ADADACB") and not accepts(lp, "ADCB")


gen_trees = st.builds(
    lambda p_and, seed: generate_tree(GenSettings(0.5, p_and, 0.5 - p_and, activity_range=(3, 7)),
                                      np.random.default_rng(seed)),
    st.sampled_from([0.0, 0.2, 0.5]),
    st.integers(0, 100_000),
)


@given(gen_trees)
@settings(max_examples=60, deadline=None)
def test_discovered_tree_replays_training_log(tree):
    variants = tree_language(tree)
    found = discover(EventLog(sorted(variants)))
    assert all(accepts(found, v) for v in variants)


def test_flower_replay_through_playout():
    log = EventLog([["A", "B", "C"], ["C", "B", "A"], ["B", "A", "C", "A"]])
    found = discover(log)
    sim = playout_log(found, 300 * 3, seed=1)
    assert abs_metrics(log, EventLog([["B"]]), sim)[0] == 1.0
