"""Basic inductive discovery of process trees (no noise filtering) and the baseline pipeline.

Cuts are tried in the order exclusive, sequence, parallel, loop. When none
applies, a strict tau-loop split is attempted (traces that concatenate
complete runs of the sub-process) before falling back to the flower model.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .log import EventLog
from .metrics import MetricReport, evaluate
from .models import playout_log
from .nets import EnumerationConfig
from .splitter import FoldPlan, split_log
from .trees import LOOP, ProcessTree, flatten, leaf, loop, par, seq, tau, xor

SubLog = Counter  # Counter[Trace] where the empty trace is allowed


@dataclass
class DirectlyFollowsGraph:
    nodes: set[str] = field(default_factory=set)
    edges: Counter = field(default_factory=Counter)
    starts: Counter = field(default_factory=Counter)
    ends: Counter = field(default_factory=Counter)

    def successors(self, a: str) -> set[str]:
        return {b for (x, b) in self.edges if x == a}

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in self.edges


def _dfg_from_counts(log: SubLog) -> DirectlyFollowsGraph:
    g = DirectlyFollowsGraph()
    for trace, n in log.items():
        g.nodes.update(trace)
        if not trace:
            continue
        g.starts[trace[0]] += n
        g.ends[trace[-1]] += n
        for a, b in zip(trace, trace[1:]):
            g.edges[(a, b)] += n
    return g


def build_dfg(log: EventLog) -> DirectlyFollowsGraph:
    if len(log) == 0:
        raise ValueError("cannot build a directly-follows graph from an empty log")
    return _dfg_from_counts(Counter(log.variants))


# -- graph helpers -----------------------------------------------------------------------


def _components(nodes: Sequence[str], adjacent) -> list[list[str]]:
    """Connected components of an undirected relation, in first-node order."""
    seen: set[str] = set()
    out = []
    for a in nodes:
        if a in seen:
            continue
        comp, stack = [], [a]
        seen.add(a)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in nodes:
                if y not in seen and adjacent(x, y):
                    seen.add(y)
                    stack.append(y)
        out.append(sorted(comp))
    return out


def _reachability(nodes: Sequence[str], g: DirectlyFollowsGraph) -> dict[str, set[str]]:
    succ = {a: {b for b in g.successors(a) if b in nodes} for a in nodes}
    reach = {}
    for a in nodes:
        seen: set[str] = set()
        stack = list(succ[a])
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(succ[x])
        reach[a] = seen
    return reach


# -- cuts -----------------------------------------------------------------------------


def _xor_cut(nodes: list[str], g: DirectlyFollowsGraph) -> list[list[str]] | None:
    comps = _components(nodes, lambda a, b: g.has_edge(a, b) or g.has_edge(b, a))
    return comps if len(comps) > 1 else None


def _seq_cut(nodes: list[str], g: DirectlyFollowsGraph) -> list[list[str]] | None:
    reach = _reachability(nodes, g)
    # strongly connected components
    sccs: list[set[str]] = []
    assigned: set[str] = set()
    for a in nodes:
        if a in assigned:
            continue
        comp = {a} | {b for b in reach[a] if a in reach[b]}
        assigned |= comp
        sccs.append(comp)
    if len(sccs) < 2:
        return None

    def reaches(i: int, j: int) -> bool:
        a = next(iter(sccs[i]))
        return next(iter(sccs[j])) in reach[a]

    # merge SCCs connected through mutual unreachability (neither precedes the other)
    comps = _components(
        [str(i) for i in range(len(sccs))],
        lambda x, y: not reaches(int(x), int(y)) and not reaches(int(y), int(x)),
    )
    groups = [{int(x) for x in c} for c in comps]

    def before(gi: set[int], gj: set[int]) -> bool:
        return any(reaches(i, j) for i in gi for j in gj)

    ordered: list[set[int]] = []
    remaining = list(groups)
    while remaining:
        for grp in remaining:
            if not any(before(o, grp) for o in remaining if o is not grp):
                ordered.append(grp)
                remaining.remove(grp)
                break
        else:
            return None
    if len(ordered) < 2:
        return None
    parts = [sorted(a for i in grp for a in sccs[i]) for grp in ordered]
    # validate: every pair across parts must be one-directional in the right order
    for x in range(len(parts)):
        for y in range(x + 1, len(parts)):
            for a in parts[x]:
                for b in parts[y]:
                    if a in reach[b] or b not in reach[a]:
                        return None
    return parts


def _par_cut(nodes: list[str], g: DirectlyFollowsGraph) -> list[list[str]] | None:
    comps = _components(
        nodes, lambda a, b: not (g.has_edge(a, b) and g.has_edge(b, a))
    )
    if len(comps) < 2:
        return None
    complete = [c for c in comps if any(a in g.starts for a in c) and any(a in g.ends for a in c)]
    if not complete:
        return None
    merged = [list(c) for c in complete]
    for c in comps:
        if c not in complete:
            merged[0] = sorted(merged[0] + c)
    if len(merged) < 2:
        return None
    return merged


def _loop_cut(nodes: list[str], g: DirectlyFollowsGraph) -> list[list[str]] | None:
    body = sorted(set(g.starts) | set(g.ends))
    rest = [a for a in nodes if a not in body]
    if not rest:
        return None
    redo_comps = _components(rest, lambda a, b: g.has_edge(a, b) or g.has_edge(b, a))
    do = set(body)
    redos: list[list[str]] = []
    for comp in redo_comps:
        cs = set(comp)
        ok = True
        # edges from the body into a redo part must come from end activities
        for (a, b) in g.edges:
            if a in do and b in cs and a not in g.ends:
                ok = False
            if a in cs and b in do and b not in g.starts:
                ok = False
        if ok:
            # a redo part must be entered from every end activity and lead back to every start activity
            entered = all(any((e, b) in g.edges for b in cs) for e in g.ends)
            leaves = all(any((a, s) in g.edges for a in cs) for s in g.starts)
            ok = entered and leaves
        if ok:
            redos.append(comp)
        else:
            do |= cs
    if not redos:
        return None
    return [sorted(do)] + redos


# -- projection ------------------------------------------------------------------------


def _project_xor(log: SubLog, parts: list[list[str]]) -> list[SubLog]:
    where = {a: i for i, p in enumerate(parts) for a in p}
    out = [Counter() for _ in parts]
    for trace, n in log.items():
        if trace:
            out[where[trace[0]]][trace] += n
    return out


def _project_seq(log: SubLog, parts: list[list[str]]) -> list[SubLog]:
    where = {a: i for i, p in enumerate(parts) for a in p}
    out = [Counter() for _ in parts]
    for trace, n in log.items():
        pieces: list[list[str]] = [[] for _ in parts]
        for a in trace:
            pieces[where[a]].append(a)
        for i, p in enumerate(pieces):
            out[i][tuple(p)] += n
    return out


def _project_par(log: SubLog, parts: list[list[str]]) -> list[SubLog]:
    return _project_seq(log, parts)


def _project_loop(log: SubLog, parts: list[list[str]]) -> list[SubLog]:
    where = {a: i for i, p in enumerate(parts) for a in p}
    do_log: SubLog = Counter()
    redo_logs = [Counter() for _ in parts[1:]]
    for trace, n in log.items():
        cur: list[str] = []
        cur_part = 0
        for a in trace:
            w = where[a]
            if w != cur_part:
                _store(do_log, redo_logs, cur_part, cur, n)
                cur, cur_part = [], w
            cur.append(a)
        _store(do_log, redo_logs, cur_part, cur, n)
    return [do_log] + redo_logs


def _store(do_log: SubLog, redo_logs: list[SubLog], part: int, piece: list[str], n: int) -> None:
    if part == 0:
        do_log[tuple(piece)] += n
    else:
        redo_logs[part - 1][tuple(piece)] += n


def _tau_loop_split(log: SubLog, g: DirectlyFollowsGraph) -> SubLog | None:
    """Split traces wherever an end activity is directly followed by a start activity."""
    out: SubLog = Counter()
    split_any = False
    for trace, n in log.items():
        cur = [trace[0]]
        for a, b in zip(trace, trace[1:]):
            if a in g.ends and b in g.starts:
                out[tuple(cur)] += n
                cur = []
                split_any = True
            cur.append(b)
        out[tuple(cur)] += n
    return out if split_any else None


# -- discovery -------------------------------------------------------------------------


def _discover(log: SubLog) -> ProcessTree:
    n_empty = log.get((), 0)
    if n_empty:
        rest = Counter({t: n for t, n in log.items() if t})
        if not rest:
            return tau()
        return xor(tau(), _discover(rest))
    g = _dfg_from_counts(log)
    nodes = sorted(g.nodes)
    if len(nodes) == 1:
        a = nodes[0]
        if all(len(t) == 1 for t in log):
            return leaf(a)
        return loop(leaf(a), tau())
    for cut, project, build in (
        (_xor_cut, _project_xor, lambda kids: xor(*kids)),
        (_seq_cut, _project_seq, lambda kids: seq(*kids)),
        (_par_cut, _project_par, lambda kids: par(*kids)),
        (_loop_cut, _project_loop, None),
    ):
        parts = cut(nodes, g)
        if parts is None:
            continue
        subs = project(log, parts)
        kids = [_discover(s) for s in subs]
        if build is None:
            redo = kids[1] if len(kids) == 2 else xor(*kids[1:])
            return loop(kids[0], redo)
        return build(kids)
    split = _tau_loop_split(log, g)
    if split is not None and set(split) != set(log):
        return loop(_discover(split), tau())
    return loop(xor(*(leaf(a) for a in nodes)), tau())


def discover(log: EventLog | Iterable[Sequence[str]]) -> ProcessTree:
    """Deterministic process-tree discovery from a non-empty log."""
    counts: SubLog = Counter(log.variants) if isinstance(log, EventLog) else Counter(tuple(t) for t in log)
    if not counts:
        raise ValueError("cannot discover a model from an empty log")
    return flatten(_discover(counts))


def is_flower(tree: ProcessTree) -> bool:
    return tree.op == LOOP and tree.children[1].is_tau and all(c.is_leaf for c in tree.children[0].children)


def baseline_run(
    log: EventLog,
    plan: FoldPlan,
    cfg: EnumerationConfig = EnumerationConfig(),
    seed: int = 0,
    playout_size: int | None = None,
) -> list[tuple[ProcessTree, MetricReport]]:
    """Discover on each fold's Tr and score a play-out of the discovered tree.

    The play-out has |Tr| + |Te| traces unless ``playout_size`` is given (then
    Sim counts are rescaled).
    """
    out = []
    for fold_index, test_variants in enumerate(plan.folds):
        split = split_log(log, test_variants)
        tree = discover(split.training_log)
        size = playout_size or len(log)
        fold_seed = int(np.random.SeedSequence([seed, fold_index]).generate_state(1)[0])
        sim = playout_log(tree, size, cfg, seed=fold_seed, case_prefix="sim")
        out.append((tree, evaluate(split.training_log, split.test_log, sim, allow_rescale=size != len(log))))
    return out

