"""Process trees: text format, language enumeration, play-out and conversion to workflow nets."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterable

import numpy as np

from .nets import EnumerationConfig, NetBuilder, StateSpaceExplosion, WorkflowNet

SEQ, XOR, AND, LOOP = "->", "X", "+", "*"
OPERATORS = (SEQ, XOR, AND, LOOP)
TAU = "tau"

Language = frozenset[tuple[str, ...]]


@dataclass(frozen=True)
class ProcessTree:
    """Operator node (``op`` set) or leaf (``op`` None; ``label`` None is a silent leaf)."""

    op: str | None = None
    label: str | None = None
    children: tuple[ProcessTree, ...] = ()

    def __post_init__(self) -> None:
        if self.op is None:
            if self.children:
                raise ValueError("leaves have no children")
        else:
            if self.op not in OPERATORS:
                raise ValueError(f"unknown operator {self.op!r}")
            if self.op == LOOP and len(self.children) != 2:
                raise ValueError("a loop has exactly a do-child and a redo-child")
            if len(self.children) < 2:
                raise ValueError(f"operator {self.op} needs at least two children")

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    @property
    def is_tau(self) -> bool:
        return self.op is None and self.label is None

    def leaves(self) -> list[ProcessTree]:
        if self.is_leaf:
            return [self]
        return [leaf for c in self.children for leaf in c.leaves()]

    @property
    def activities(self) -> set[str]:
        return {leaf.label for leaf in self.leaves() if leaf.label is not None}

    def nodes(self) -> list[ProcessTree]:
        out = [self]
        for c in self.children:
            out.extend(c.nodes())
        return out

    def operator_counts(self) -> Counter[str]:
        return Counter(n.op for n in self.nodes() if n.op is not None)

    def has_loop(self) -> bool:
        return any(n.op == LOOP for n in self.nodes())

    def __str__(self) -> str:
        return format_tree(self)


def leaf(label: str) -> ProcessTree:
    return ProcessTree(label=label)


def tau() -> ProcessTree:
    return ProcessTree()


def seq(*children: ProcessTree) -> ProcessTree:
    return ProcessTree(SEQ, children=tuple(children))


def xor(*children: ProcessTree) -> ProcessTree:
    return ProcessTree(XOR, children=tuple(children))


def par(*children: ProcessTree) -> ProcessTree:
    return ProcessTree(AND, children=tuple(children))


def loop(do: ProcessTree, redo: ProcessTree) -> ProcessTree:
    return ProcessTree(LOOP, children=(do, redo))


def flatten(tree: ProcessTree) -> ProcessTree:
    """Merge nested SEQ/XOR/AND nodes of the same kind; language-preserving."""
    if tree.is_leaf:
        return tree
    kids: list[ProcessTree] = []
    for c in (flatten(c) for c in tree.children):
        if tree.op != LOOP and c.op == tree.op:
            kids.extend(c.children)
        else:
            kids.append(c)
    return ProcessTree(tree.op, children=tuple(kids))


# -- text format ------------------------------------------------------------------

_PLAIN = re.compile(r"[^\s,()'\"]+")


def _format_label(label: str) -> str:
    if label != TAU and label not in OPERATORS and _PLAIN.fullmatch(label):
        return label
    return "'" + label.replace("\\", "\\\\").replace("'", "\\'") + "'"


def format_tree(tree: ProcessTree) -> str:
    if tree.is_tau:
        return TAU
    if tree.is_leaf:
        return _format_label(tree.label)  # type: ignore[arg-type]
    return f"{tree.op}(" + ", ".join(format_tree(c) for c in tree.children) + ")"


_TOKEN = re.compile(r"\s*(->|'(?:[^'\\]|\\.)*'|[(),]|[^\s,()']+)")


def parse_tree(text: str) -> ProcessTree:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"cannot tokenize process tree at offset {pos}: {text[pos:pos + 20]!r}")
        tokens.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1

    def parse(i: int) -> tuple[ProcessTree, int]:
        if i >= len(tokens):
            raise ValueError("unexpected end of process tree")
        tok = tokens[i]
        if tok in OPERATORS and i + 1 < len(tokens) and tokens[i + 1] == "(":
            children = []
            i += 2
            while True:
                child, i = parse(i)
                children.append(child)
                if i >= len(tokens):
                    raise ValueError("unclosed operator")
                if tokens[i] == ")":
                    return ProcessTree(tok, children=tuple(children)), i + 1
                if tokens[i] != ",":
                    raise ValueError(f"expected ',' or ')' but got {tokens[i]!r}")
                i += 1
        if tok in "(),":
            raise ValueError(f"unexpected {tok!r}")
        if tok == TAU:
            return tau(), i + 1
        if tok.startswith("'"):
            tok = re.sub(r"\\(.)", r"\1", tok[1:-1])
        return leaf(tok), i + 1

    tree, end = parse(0)
    if end != len(tokens):
        raise ValueError(f"trailing input after process tree: {tokens[end:]}")
    return tree


# -- language -------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _interleavings(a: tuple[str, ...], b: tuple[str, ...]) -> frozenset[tuple[str, ...]]:
    if not a:
        return frozenset({b})
    if not b:
        return frozenset({a})
    return frozenset(
        {(a[0],) + r for r in _interleavings(a[1:], b)} | {(b[0],) + r for r in _interleavings(a, b[1:])}
    )


def _guard(lang: set, limit: int) -> None:
    if len(lang) > limit:
        raise StateSpaceExplosion(f"more than {limit} variants reachable")


def tree_language(tree: ProcessTree, cfg: EnumerationConfig = EnumerationConfig()) -> set[tuple[str, ...]]:
    """Distinct traces of the tree; loops repeat their body at most ``redo_cap`` extra times.

    The empty trace is included when the tree can complete silently.
    """
    limit = cfg.max_variants

    def lang(node: ProcessTree) -> set[tuple[str, ...]]:
        if node.is_leaf:
            return {()} if node.label is None else {(node.label,)}
        kids = [lang(c) for c in node.children]
        if node.op == XOR:
            out = set().union(*kids)
        elif node.op == SEQ:
            out = {()}
            for k in kids:
                out = {a + b for a in out for b in k}
                _guard(out, limit)
        elif node.op == AND:
            out = {()}
            for k in kids:
                nxt: set[tuple[str, ...]] = set()
                for a in out:
                    for b in k:
                        nxt |= _interleavings(a, b)
                    _guard(nxt, limit)
                out = nxt
        else:
            do, redo = kids
            out = set(do)
            frontier = set(do)
            for _ in range(cfg.redo_cap):
                frontier = {a + r + d for a in frontier for r in redo for d in do}
                out |= frontier
                _guard(out, limit)
        _guard(out, limit)
        return out

    return lang(tree)


def length_profile(tree: ProcessTree) -> dict[int, int] | None:
    """Number of distinct traces per length, by recursion over the tree.

    Exact for loop-free trees without silent leaves and with unique labels;
    returns None otherwise.
    """
    labels = [leaf.label for leaf in tree.leaves()]
    if None in labels or len(set(labels)) != len(labels) or tree.has_loop():
        return None

    def prof(node: ProcessTree) -> dict[int, int]:
        if node.is_leaf:
            return {1: 1}
        kids = [prof(c) for c in node.children]
        out: dict[int, int] = {}
        if node.op == XOR:
            for k in kids:
                for n, c in k.items():
                    out[n] = out.get(n, 0) + c
            return out
        out = {0: 1}
        for k in kids:
            nxt: dict[int, int] = {}
            for n1, c1 in out.items():
                for n2, c2 in k.items():
                    mult = comb(n1 + n2, n1) if node.op == AND else 1
                    nxt[n1 + n2] = nxt.get(n1 + n2, 0) + c1 * c2 * mult
            out = nxt
        return out

    return prof(tree)


# -- play-out ---------------------------------------------------------------------------


class TreeSampler:
    """Random play-out: XOR picks a child uniformly, AND interleaves by picking a
    uniformly random unfinished branch at each step, LOOP redoes with probability
    1/2 up to the redo cap."""

    def __init__(self, tree: ProcessTree, cfg: EnumerationConfig = EnumerationConfig()) -> None:
        self.tree = tree
        self.redo_cap = cfg.redo_cap

    def _run(self, node: ProcessTree, rng: np.random.Generator) -> list[str]:
        if node.is_leaf:
            return [] if node.label is None else [node.label]
        if node.op == SEQ:
            return [a for c in node.children for a in self._run(c, rng)]
        if node.op == XOR:
            return self._run(node.children[int(rng.integers(len(node.children)))], rng)
        if node.op == AND:
            branches = [self._run(c, rng) for c in node.children]
            pos = [0] * len(branches)
            live = [i for i, b in enumerate(branches) if b]
            out = []
            while live:
                i = live[int(rng.integers(len(live)))]
                out.append(branches[i][pos[i]])
                pos[i] += 1
                if pos[i] == len(branches[i]):
                    live.remove(i)
            return out
        do, redo = node.children
        out = self._run(do, rng)
        redos = 0
        while redos < self.redo_cap and rng.random() < 0.5:
            out += self._run(redo, rng)
            out += self._run(do, rng)
            redos += 1
        return out

    def sample(self, rng: np.random.Generator) -> tuple[str, ...]:
        return tuple(self._run(self.tree, rng))


# -- conversion -------------------------------------------------------------------------


def tree_to_net(tree: ProcessTree, name: str = "") -> WorkflowNet:
    """Language-equivalent workflow net (for loop-free trees; loops nested in loops or
    parallel branches are capped per marking in the net and may admit fewer repetitions)."""
    b = NetBuilder(name)

    def build(node: ProcessTree, p_in: str, p_out: str) -> None:
        if node.is_leaf:
            b.transition(node.label, [p_in], [p_out])
        elif node.op == SEQ:
            cur = p_in
            for i, c in enumerate(node.children):
                nxt = p_out if i == len(node.children) - 1 else b.place()
                build(c, cur, nxt)
                cur = nxt
        elif node.op == XOR:
            for c in node.children:
                build(c, p_in, p_out)
        elif node.op == AND:
            starts = [b.place() for _ in node.children]
            ends = [b.place() for _ in node.children]
            b.transition(None, [p_in], starts)
            for c, s, e in zip(node.children, starts, ends):
                build(c, s, e)
            b.transition(None, ends, [p_out])
        else:
            do, redo = node.children
            q1, q2 = b.place(), b.place()
            b.transition(None, [p_in], [q1])
            build(do, q1, q2)
            build(redo, q2, q1)
            b.transition(None, [q2], [p_out])

    source, sink = b.place(), b.place()
    build(tree, source, sink)
    return b.build(source, sink)


def tree_from_labels(op: str, labels: Iterable[str]) -> ProcessTree:
    return ProcessTree(op, children=tuple(leaf(a) for a in labels))
