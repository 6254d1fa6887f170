"""The six basic control-flow models and model-agnostic enumeration and play-out.

Sequential scaffolding positions are a fixed layout; what is pinned is each
model's variant count, activity count and trace-length range:

====  ===========  =====  =====  ==========  ==========
id    pattern      #var   #act   min length  max length
====  ===========  =====  =====  ==========  ==========
1     parallel     120    13     13          13
2     XOR          128    26     19          19
3     XOR + LTD    128    27     19          19
4     IOR          64     18     15          18
5     parallel     126    24     24          24
6     loop         27     16     16          28
====  ===========  =====  =====  ==========  ==========
"""

from __future__ import annotations

from typing import Union

import numpy as np

from .log import EventLog, VariantTable
from .nets import EnumerationConfig, NetBuilder, NetSampler, WorkflowNet, enumerate_net
from .trees import ProcessTree, TreeSampler, leaf, loop, par, seq, tau, tree_language, tree_to_net, xor

Model = Union[WorkflowNet, ProcessTree]

# Input window used for each built-in model when training sequence models.
PREFIX_LENGTHS = {1: 6, 2: 6, 3: 18, 4: 6, 5: 12, 6: 12}
BUILTIN_IDS = tuple(PREFIX_LENGTHS)


def _s(*idx: int) -> list[ProcessTree]:
    return [leaf(f"s{i:02d}") for i in idx]


def _xor_block(k: int) -> ProcessTree:
    return xor(leaf(f"x{k}a"), leaf(f"x{k}b"))


def _ior_block(k: int) -> ProcessTree:
    x, y = f"i{k}x", f"i{k}y"
    return xor(leaf(x), leaf(y), par(leaf(x), leaf(y)))


def _loop_block(k: int) -> ProcessTree:
    return loop(seq(leaf(f"l{k}a"), leaf(f"l{k}b")), tau())


def builtin_tree(model_id: int) -> ProcessTree | None:
    """Block-structured form of the built-in model, or None for model 3 (not block-structured)."""
    if model_id == 1:
        return seq(*_s(1, 2, 3, 4), par(*(leaf(f"p{i}") for i in range(1, 6))), *_s(5, 6, 7, 8))
    if model_id == 2:
        body: list[ProcessTree] = _s(1, 2)
        for k in range(1, 8):
            body += [_xor_block(k), *_s(k + 2)]
        return seq(*body, *_s(10, 11, 12))
    if model_id == 4:
        return seq(*_s(1, 2, 3), _ior_block(1), *_s(4, 5, 6), _ior_block(2), *_s(7, 8, 9), _ior_block(3), *_s(10, 11, 12))
    if model_id == 5:
        chain_c = seq(*(leaf(f"c{i}") for i in range(1, 5)))
        chain_d = seq(*(leaf(f"d{i}") for i in range(1, 6)))
        return seq(*_s(*range(1, 8)), par(chain_c, chain_d), *_s(*range(8, 16)))
    if model_id == 6:
        return seq(*_s(1, 2), _loop_block(1), *_s(3, 4, 5), _loop_block(2), *_s(6, 7, 8), _loop_block(3), *_s(9, 10))
    if model_id == 3:
        return None
    raise ValueError(f"built-in models are numbered 1..6, got {model_id}")


def _model3_net() -> WorkflowNet:
    # Eight binary XOR splits separated by sequential activities; the branch taken
    # at the first split is remembered in a dedicated state place and decides the
    # branch of the eighth split.
    b = NetBuilder("model3")
    source = b.place()
    cur = b.chain(source, ["s01", "s02"])
    mem_a, mem_b = b.place(), b.place()
    nxt = b.place()
    b.transition("x1a", [cur], [nxt, mem_a])
    b.transition("x1b", [cur], [nxt, mem_b])
    cur = b.chain(nxt, ["s03"])
    for k in range(2, 8):
        nxt = b.place()
        b.transition(f"x{k}a", [cur], [nxt])
        b.transition(f"x{k}b", [cur], [nxt])
        cur = b.chain(nxt, [f"s{k + 2:02d}"])
    nxt = b.place()
    b.transition("x8a", [cur, mem_a], [nxt])
    b.transition("x8b", [cur, mem_b], [nxt])
    sink = b.chain(nxt, ["s10", "s11"])
    return b.build(source, sink)


def builtin_model(model_id: int) -> WorkflowNet:
    if model_id == 3:
        return _model3_net()
    tree = builtin_tree(model_id)
    assert tree is not None
    return tree_to_net(tree, name=f"model{model_id}")


def enumerate_variants(model: Model, cfg: EnumerationConfig = EnumerationConfig()) -> VariantTable:
    """Every distinct complete trace of the model under the caps, each with count 1.

    The empty trace (possible in trees with silent leaves) is not a trace and is dropped.
    """
    if isinstance(model, ProcessTree):
        lang = tree_language(model, cfg)
    else:
        lang = enumerate_net(model, cfg)
    return VariantTable({v: 1 for v in lang if v})


def sampler_for(model: Model, cfg: EnumerationConfig = EnumerationConfig()) -> NetSampler | TreeSampler:
    if isinstance(model, ProcessTree):
        return TreeSampler(model, cfg)
    return NetSampler(model, cfg)


def playout_log(
    model: Model,
    n_traces: int,
    cfg: EnumerationConfig = EnumerationConfig(),
    seed: int = 0,
    case_prefix: str = "case",
) -> EventLog:
    """Sample ``n_traces`` complete non-empty traces (empty runs are redrawn)."""
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    rng = np.random.default_rng(seed)
    sampler = sampler_for(model, cfg)
    traces = []
    while len(traces) < n_traces:
        t = sampler.sample(rng)
        if t:
            traces.append(t)
    return EventLog(traces, [f"{case_prefix}-{i}" for i in range(n_traces)])


def model_stats(model: Model, cfg: EnumerationConfig = EnumerationConfig()) -> dict[str, int]:
    variants = enumerate_variants(model, cfg)
    lengths = [len(v) for v in variants]
    acts = {a for v in variants for a in v}
    return {
        "variants": len(variants),
        "activities": len(acts),
        "min_len": min(lengths, default=0),
        "max_len": max(lengths, default=0),
    }
