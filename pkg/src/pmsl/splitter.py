"""Variant-level resampling: fold plans over distinct traces and (Tr, Te) splits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .log import EventLog, Trace

FOLD_ORDERS = ("sorted", "shuffled")


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[Trace, ...], ...]

    def __post_init__(self) -> None:
        seen: set[Trace] = set()
        for fold in self.folds:
            for v in fold:
                if v in seen:
                    raise ValueError(f"variant {v} assigned to more than one fold")
                seen.add(v)

    def __len__(self) -> int:
        return len(self.folds)

    @property
    def variants(self) -> set[Trace]:
        return {v for fold in self.folds for v in fold}

    @property
    def sizes(self) -> list[int]:
        return [len(f) for f in self.folds]

    def to_json(self) -> str:
        return json.dumps([[list(v) for v in fold] for fold in self.folds])

    @classmethod
    def from_json(cls, text: str) -> FoldPlan:
        return cls(tuple(tuple(tuple(v) for v in fold) for fold in json.loads(text)))


def make_folds(variants: Iterable[Sequence[str]], k: int, seed: int, order: str = "sorted") -> FoldPlan:
    """Deal ``n`` variants into ``k`` folds of ``n // k`` plus distinct-fold remainders.

    ``order="sorted"`` deals contiguous runs of the lexicographically sorted
    variants, so variants sharing a prefix of early choices land together;
    ``order="shuffled"`` permutes the variants with ``seed`` first. In both
    modes each of the ``n % k`` leftover variants joins a different fold drawn
    at random without replacement.
    """
    items = sorted({tuple(v) for v in variants})
    n = len(items)
    if not 2 <= k <= n:
        raise ValueError(f"fold count must lie in [2, {n}], got {k}")
    if order not in FOLD_ORDERS:
        raise ValueError(f"order must be one of {FOLD_ORDERS}")
    rng = np.random.default_rng(seed)
    if order == "shuffled":
        items = [items[i] for i in rng.permutation(n)]
    size = n // k
    folds = [list(items[i * size:(i + 1) * size]) for i in range(k)]
    extra = items[k * size:]
    if extra:
        for v, f in zip(extra, rng.choice(k, size=len(extra), replace=False)):
            folds[int(f)].append(v)
    return FoldPlan(tuple(tuple(f) for f in folds))


def lovocv_folds(variants: Iterable[Sequence[str]]) -> FoldPlan:
    return FoldPlan(tuple((v,) for v in sorted({tuple(v) for v in variants})))


@dataclass(frozen=True)
class SplitResult:
    training_log: EventLog
    test_log: EventLog


def split_log(log: EventLog, test_variants: Iterable[Sequence[str]]) -> SplitResult:
    """Move every occurrence of the test variants into Te; everything else forms Tr."""
    test = {tuple(v) for v in test_variants}
    present = set(log.variants)
    unknown = test - present
    if unknown:
        raise ValueError(f"{len(unknown)} test variants do not occur in the log")
    if test >= present:
        raise ValueError("test variants cover the whole log; the training log would be empty")
    tr, te = [], []
    tr_ids, te_ids = [], []
    for case_id, trace in zip(log.case_ids, log.traces):
        if trace in test:
            te.append(trace)
            te_ids.append(case_id)
        else:
            tr.append(trace)
            tr_ids.append(case_id)
    return SplitResult(EventLog(tr, tr_ids), EventLog(te, te_ids))
