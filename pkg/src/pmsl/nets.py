"""Workflow nets: construction, capped exhaustive enumeration, stochastic play-out, export."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

Marking = tuple[int, ...]


class StateSpaceExplosion(RuntimeError):
    pass


@dataclass(frozen=True)
class EnumerationConfig:
    """Caps that make looping models finite.

    ``marking_visit_cap`` bounds how often a single run may visit the same
    net marking; ``loop_redo_cap`` bounds redo iterations of tree loops and
    defaults to ``marking_visit_cap - 1`` so both engines agree on simple loops.
    """

    marking_visit_cap: int = 3
    loop_redo_cap: int | None = None
    max_variants: int = 100_000

    def __post_init__(self) -> None:
        if self.marking_visit_cap < 1:
            raise ValueError("marking_visit_cap must be >= 1")
        if self.loop_redo_cap is not None and self.loop_redo_cap < 0:
            raise ValueError("loop_redo_cap must be >= 0")

    @property
    def redo_cap(self) -> int:
        return self.marking_visit_cap - 1 if self.loop_redo_cap is None else self.loop_redo_cap


@dataclass(frozen=True)
class Transition:
    name: str
    label: str | None  # None marks a silent (tau) transition

    @property
    def silent(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class WorkflowNet:
    places: tuple[str, ...]
    transitions: tuple[Transition, ...]
    arcs: tuple[tuple[str, str], ...]
    source: str
    sink: str
    name: str = ""
    _pre: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _post: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pidx = {p: i for i, p in enumerate(self.places)}
        tidx = {t.name: i for i, t in enumerate(self.transitions)}
        if len(pidx) != len(self.places) or len(tidx) != len(self.transitions):
            raise ValueError("place and transition names must be unique")
        if set(pidx) & set(tidx):
            raise ValueError("places and transitions share a name")
        pre: list[list[int]] = [[] for _ in self.transitions]
        post: list[list[int]] = [[] for _ in self.transitions]
        for src, dst in self.arcs:
            if src in pidx and dst in tidx:
                pre[tidx[dst]].append(pidx[src])
            elif src in tidx and dst in pidx:
                post[tidx[src]].append(pidx[dst])
            else:
                raise ValueError(f"arc {src}->{dst} must connect a place and a transition")
        object.__setattr__(self, "_pre", tuple(tuple(sorted(p)) for p in pre))
        object.__setattr__(self, "_post", tuple(tuple(sorted(p)) for p in post))
        self._validate()

    def _validate(self) -> None:
        targets = {dst for _, dst in self.arcs}
        sources = {src for src, _ in self.arcs}
        no_in = [p for p in self.places if p not in targets]
        no_out = [p for p in self.places if p not in sources]
        if no_in != [self.source] or no_out != [self.sink]:
            raise ValueError(
                f"workflow net needs a single source and sink place (got {no_in} / {no_out})"
            )
        succ: dict[str, list[str]] = {}
        pred: dict[str, list[str]] = {}
        for src, dst in self.arcs:
            succ.setdefault(src, []).append(dst)
            pred.setdefault(dst, []).append(src)
        fwd = _reach(self.source, succ)
        bwd = _reach(self.sink, pred)
        nodes = set(self.places) | {t.name for t in self.transitions}
        stray = nodes - (fwd & bwd)
        if stray:
            raise ValueError(f"nodes not on a source-sink path: {sorted(stray)}")

    @property
    def initial_marking(self) -> Marking:
        return tuple(int(p == self.source) for p in self.places)

    @property
    def final_marking(self) -> Marking:
        return tuple(int(p == self.sink) for p in self.places)

    @property
    def activities(self) -> set[str]:
        return {t.label for t in self.transitions if t.label is not None}

    def successors(self, marking: Marking) -> list[tuple[int, Marking]]:
        """Enabled transitions with the marking each one produces."""
        out = []
        for ti, pre in enumerate(self._pre):
            if all(marking[p] > 0 for p in pre):
                m = list(marking)
                for p in pre:
                    m[p] -= 1
                for p in self._post[ti]:
                    m[p] += 1
                out.append((ti, tuple(m)))
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "places": list(self.places),
                "transitions": [{"name": t.name, "label": t.label} for t in self.transitions],
                "arcs": [list(a) for a in self.arcs],
                "initial_marking": {self.source: 1},
                "final_marking": {self.sink: 1},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> WorkflowNet:
        doc = json.loads(text)
        (source,) = doc["initial_marking"]
        (sink,) = doc["final_marking"]
        return cls(
            places=tuple(doc["places"]),
            transitions=tuple(Transition(t["name"], t["label"]) for t in doc["transitions"]),
            arcs=tuple(tuple(a) for a in doc["arcs"]),
            source=source,
            sink=sink,
            name=doc.get("name", ""),
        )

    def to_dot(self) -> str:
        lines = [f'digraph "{self.name or "net"}" {{', "  rankdir=LR;"]
        for p in self.places:
            extra = ' style=filled fillcolor="#dddddd"' if p in (self.source, self.sink) else ""
            lines.append(f'  "{p}" [shape=circle label=""{extra}];')
        for t in self.transitions:
            if t.silent:
                lines.append(f'  "{t.name}" [shape=box style=filled fillcolor=black label=""];')
            else:
                lines.append(f'  "{t.name}" [shape=box label="{t.label}"];')
        for src, dst in self.arcs:
            lines.append(f'  "{src}" -> "{dst}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _reach(start: str, adj: dict[str, list[str]]) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adj.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


class NetBuilder:
    """Incremental construction helper; names places and transitions sequentially."""

    def __init__(self, name: str = "") -> None:
        self.name = name
        self.places: list[str] = []
        self.transitions: list[Transition] = []
        self.arcs: list[tuple[str, str]] = []

    def place(self) -> str:
        p = f"p{len(self.places)}"
        self.places.append(p)
        return p

    def transition(self, label: str | None, pre: list[str], post: list[str]) -> str:
        name = f"t{len(self.transitions)}"
        self.transitions.append(Transition(name, label))
        self.arcs.extend((p, name) for p in pre)
        self.arcs.extend((name, p) for p in post)
        return name

    def chain(self, start: str, labels: list[str]) -> str:
        """Sequence of visible transitions from ``start``; returns the last place."""
        cur = start
        for label in labels:
            nxt = self.place()
            self.transition(label, [cur], [nxt])
            cur = nxt
        return cur

    def build(self, source: str, sink: str) -> WorkflowNet:
        return WorkflowNet(
            tuple(self.places), tuple(self.transitions), tuple(self.arcs), source, sink, self.name
        )


class _Cyclic(Exception):
    pass


def enumerate_net(net: WorkflowNet, cfg: EnumerationConfig = EnumerationConfig()) -> set[tuple[str, ...]]:
    """All distinct complete traces reachable when no marking is visited more than the cap."""
    try:
        return _enumerate_acyclic(net, cfg)
    except _Cyclic:
        return _enumerate_capped(net, cfg)


def _enumerate_acyclic(net: WorkflowNet, cfg: EnumerationConfig) -> set[tuple[str, ...]]:
    # Memoised suffix languages; only valid while no marking can repeat on a run.
    final = net.final_marking
    memo: dict[Marking, frozenset[tuple[str, ...]]] = {}
    on_stack: set[Marking] = set()

    def suffixes(m: Marking) -> frozenset[tuple[str, ...]]:
        if m in memo:
            return memo[m]
        if m == final:
            return frozenset({()})
        if m in on_stack:
            raise _Cyclic
        on_stack.add(m)
        out: set[tuple[str, ...]] = set()
        for ti, m2 in net.successors(m):
            label = net.transitions[ti].label
            head = () if label is None else (label,)
            for s in suffixes(m2):
                out.add(head + s)
            if len(out) > cfg.max_variants:
                raise StateSpaceExplosion(
                    f"more than {cfg.max_variants} variants reachable; raise max_variants or simplify"
                )
        on_stack.discard(m)
        memo[m] = frozenset(out)
        return memo[m]

    return set(suffixes(net.initial_marking))


def _enumerate_capped(net: WorkflowNet, cfg: EnumerationConfig) -> set[tuple[str, ...]]:
    final = net.final_marking
    cap = cfg.marking_visit_cap
    visits: Counter[Marking] = Counter()
    found: set[tuple[str, ...]] = set()
    trace: list[str] = []

    def dfs(m: Marking) -> None:
        if m == final:
            found.add(tuple(trace))
            if len(found) > cfg.max_variants:
                raise StateSpaceExplosion(f"more than {cfg.max_variants} variants reachable")
            return
        for ti, m2 in net.successors(m):
            if visits[m2] >= cap:
                continue
            label = net.transitions[ti].label
            visits[m2] += 1
            if label is not None:
                trace.append(label)
            dfs(m2)
            if label is not None:
                trace.pop()
            visits[m2] -= 1

    visits[net.initial_marking] = 1
    dfs(net.initial_marking)
    return found


class NetSampler:
    """Uniform random play-out over enabled transitions, respecting the visit cap.

    A run that reaches a marking with no admissible move before the final
    marking is discarded and restarted.
    """

    def __init__(self, net: WorkflowNet, cfg: EnumerationConfig = EnumerationConfig()) -> None:
        self.net = net
        self.cfg = cfg
        self._succ: dict[Marking, list[tuple[str | None, Marking]]] = {}

    def _moves(self, m: Marking) -> list[tuple[str | None, Marking]]:
        moves = self._succ.get(m)
        if moves is None:
            moves = [(self.net.transitions[ti].label, m2) for ti, m2 in self.net.successors(m)]
            self._succ[m] = moves
        return moves

    def sample(self, rng: np.random.Generator, max_restarts: int = 1000) -> tuple[str, ...]:
        final = self.net.final_marking
        cap = self.cfg.marking_visit_cap
        for _ in range(max_restarts):
            m = self.net.initial_marking
            visits: Counter[Marking] = Counter({m: 1})
            trace: list[str] = []
            while m != final:
                moves = [mv for mv in self._moves(m) if visits[mv[1]] < cap]
                if not moves:
                    break
                label, m = moves[int(rng.integers(len(moves)))]
                visits[m] += 1
                if label is not None:
                    trace.append(label)
            else:
                return tuple(trace)
        raise RuntimeError("play-out kept reaching dead markings")

    def traces(self, n: int, rng: np.random.Generator) -> Iterator[tuple[str, ...]]:
        for _ in range(n):
            yield self.sample(rng)
