"""Random process-tree generation with operator probabilities, plus filtering and selection."""

from __future__ import annotations

import string
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .nets import EnumerationConfig, StateSpaceExplosion
from .trees import AND, SEQ, XOR, ProcessTree, format_tree, length_profile, parse_tree, tree_language

KINDS = (SEQ, AND, XOR)


@dataclass(frozen=True)
class GenSettings:
    p_seq: float = 0.5
    p_and: float = 0.25
    p_xor: float = 0.25
    p_silent: float = 0.0
    activity_range: tuple[int, int] = (10, 25)
    seed: int = 0

    def __post_init__(self) -> None:
        probs = (self.p_seq, self.p_and, self.p_xor)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("operator probabilities must be non-negative and sum to 1")
        if not 0.0 <= self.p_silent <= 1.0:
            raise ValueError("p_silent must lie in [0, 1]")
        lo, hi = self.activity_range
        if not 1 <= lo <= hi:
            raise ValueError("activity_range must be a non-empty range of positive counts")
        if self.p_silent == 1.0:
            raise ValueError("p_silent = 1 can never produce visible activities")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.p_seq, self.p_and, self.p_xor])

    @classmethod
    def with_parallelism(cls, p_and: float, seed: int = 0, **kw) -> GenSettings:
        """SEQ fixed at 50%; the rest split between AND and XOR."""
        return cls(0.5, p_and, round(0.5 - p_and, 12), seed=seed, **kw)


@dataclass(frozen=True)
class ModelFilter:
    variant_range: tuple[int, int] = (80, 160)
    min_trace_len_exceeds: int = 5

    def __post_init__(self) -> None:
        lo, hi = self.variant_range
        if lo < 1 or hi < lo or self.min_trace_len_exceeds < 0:
            raise ValueError("filter bounds must be positive with a non-empty range")


def label(i: int) -> str:
    """a, b, ..., z, aa, ab, ..."""
    letters = string.ascii_lowercase
    out = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        out = letters[r] + out
    return out


@dataclass
class _Node:
    op: str | None = None
    silent: bool = False
    children: list[_Node] = field(default_factory=list)


def generate_tree(settings: GenSettings, rng: np.random.Generator | None = None) -> ProcessTree:
    """Grow by replacing a uniformly chosen leaf with a binary operator over two fresh leaves."""
    rng = rng if rng is not None else np.random.default_rng(settings.seed)
    lo, hi = settings.activity_range
    probs = settings.vector
    while True:
        target = int(rng.integers(lo, hi + 1))
        root = _Node(silent=bool(rng.random() < settings.p_silent))
        leaves = [root]
        visible = 0 if root.silent else 1
        while visible < target:
            node = leaves.pop(int(rng.integers(len(leaves))))
            node.op = KINDS[int(rng.choice(3, p=probs))]
            node.children = [_Node(silent=bool(rng.random() < settings.p_silent)) for _ in range(2)]
            leaves.extend(node.children)
            visible += sum(not c.silent for c in node.children) - (0 if node.silent else 1)
            node.silent = False
        if visible <= hi:
            break
    counter = iter(range(10 ** 9))

    def build(n: _Node) -> ProcessTree:
        if n.op is None:
            return ProcessTree() if n.silent else ProcessTree(label=label(next(counter)))
        return ProcessTree(n.op, children=tuple(build(c) for c in n.children))

    return build(root)


def operator_proportions(tree: ProcessTree) -> dict[str, float]:
    counts = tree.operator_counts()
    total = sum(counts[k] for k in KINDS)
    if total == 0:
        return {k: 0.0 for k in KINDS}
    return {k: counts[k] / total for k in KINDS}


@dataclass(frozen=True)
class CandidateStats:
    index: int
    variants: int | None
    min_len: int | None
    max_len: int | None
    proportions: tuple[float, float, float]
    reason: str | None  # rejection reason, None when accepted


def tree_stats(tree: ProcessTree, cap: int) -> tuple[int | None, int | None, int | None]:
    """(variant count, min length, max length); variant count None when above ``cap``."""
    prof = length_profile(tree)
    if prof is not None:
        prof = {n: c for n, c in prof.items() if n > 0}
        total = sum(prof.values())
        return (total if total <= cap else None), min(prof), max(prof)
    try:
        lang = [t for t in tree_language(tree, EnumerationConfig(max_variants=cap)) if t]
    except StateSpaceExplosion:
        return None, None, None
    if not lang:
        return 0, None, None
    lengths = [len(t) for t in lang]
    return len(lang), min(lengths), max(lengths)


def _candidate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _evaluate_candidate(args) -> tuple[CandidateStats, str]:
    settings, filt, seed, index = args
    tree = generate_tree(settings, _candidate_rng(seed, index))
    lo, hi = filt.variant_range
    n, mn, mx = tree_stats(tree, hi)
    props = operator_proportions(tree)
    reason = None
    if n is None:
        reason = "too many variants"
    elif n < lo:
        reason = "too few variants"
    elif mn is None or mn <= filt.min_trace_len_exceeds:
        reason = "traces too short"
    stats = CandidateStats(index, n, mn, mx, tuple(props[k] for k in KINDS), reason)
    return stats, format_tree(tree)


class NoModelFound(RuntimeError):
    def __init__(self, reasons: Counter) -> None:
        detail = ", ".join(f"{r}: {c}" for r, c in sorted(reasons.items()))
        super().__init__(f"no model found ({detail})")
        self.reasons = reasons


@dataclass(frozen=True)
class Selection:
    tree: ProcessTree
    stats: CandidateStats
    distance: float
    rejections: dict[str, int]

    def sidecar(self) -> dict:
        return {
            "candidate": self.stats.index,
            "proportions": dict(zip(("seq", "and", "xor"), self.stats.proportions)),
            "distance": self.distance,
            "variants": self.stats.variants,
            "min_len": self.stats.min_len,
            "max_len": self.stats.max_len,
            "rejections": self.rejections,
        }


def select_model(
    settings: GenSettings,
    filt: ModelFilter = ModelFilter(),
    n_candidates: int = 5000,
    seed: int | None = None,
    workers: int = 1,
) -> Selection:
    """Best-matching survivor among ``n_candidates`` generated trees.

    Candidate ``i`` is generated from its own stream ``(seed, i)``, so the
    outcome is independent of ``workers``. Selection minimises squared
    distance between realized and requested operator proportions, breaking
    ties by fewer variants and then by generation order.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    seed = settings.seed if seed is None else seed
    jobs = [(settings, filt, seed, i) for i in range(n_candidates)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_evaluate_candidate, jobs, chunksize=256))
    else:
        results = [_evaluate_candidate(j) for j in jobs]
    reasons: Counter = Counter()
    best = None
    target = settings.vector
    for stats, text in results:
        if stats.reason is not None:
            reasons[stats.reason] += 1
            continue
        dist = float(np.sum((np.array(stats.proportions) - target) ** 2))
        key = (dist, stats.variants, stats.index)
        if best is None or key < best[0]:
            best = (key, stats, text)
    if best is None:
        raise NoModelFound(reasons)
    (dist, _, _), stats, text = best
    return Selection(parse_tree(text), stats, dist, dict(reasons))


def parallelism_sweep(seed: int = 0) -> list[GenSettings]:
    """The eleven parallelism levels: AND from 0% to 50% in 5% steps, SEQ fixed at 50%."""
    return [GenSettings.with_parallelism(round(0.05 * i, 2), seed=seed) for i in range(11)]


def settings_dict(settings: GenSettings) -> dict:
    return asdict(settings)
