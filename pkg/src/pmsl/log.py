"""Event logs: traces, variant tables, vocabularies, prefix datasets and JSONL I/O."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

BOS = "<BOS>"
EOS = "<EOS>"
PAD = "<PAD>"
RESERVED = frozenset({BOS, EOS, PAD})

Trace = tuple[str, ...]


class LogFormatError(ValueError):
    """A log file line could not be parsed."""


class EmptyLogError(ValueError):
    pass


class EncodingError(KeyError):
    def __str__(self) -> str:
        return f"label {self.args[0]!r} is not in the vocabulary"


def _check_label(label: object) -> str:
    if not isinstance(label, str) or not label:
        raise ValueError(f"activity labels must be non-empty strings, got {label!r}")
    if label in RESERVED:
        raise ValueError(f"activity label {label!r} collides with a reserved token")
    return label


def as_trace(activities: Iterable[str]) -> Trace:
    trace = tuple(_check_label(a) for a in activities)
    if not trace:
        raise ValueError("traces must contain at least one activity")
    return trace


class VariantTable(Counter):
    """Distinct traces mapped to their multiplicity. Missing variants count 0."""

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=";", lineterminator="\n")
        writer.writerow(["variant", "count"])
        for variant, count in sorted(self.items()):
            writer.writerow(["|".join(variant), count])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> VariantTable:
        rows = list(csv.reader(io.StringIO(text), delimiter=";"))
        table = cls()
        for row in rows[1:]:
            if row:
                table[tuple(row[0].split("|"))] = int(row[1])
        return table


@dataclass(frozen=True)
class Vocabulary:
    """Activity labels in sorted order followed by BOS and EOS.

    PAD has no position: it is encoded as the index ``size`` and maps to the
    all-zero one-hot vector. Output layers predict over the activities plus
    EOS, so target positions are ``0..n_activities`` with EOS last.
    """

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("vocabulary labels must be unique")
        if self.labels[-2:] != (BOS, EOS):
            raise ValueError("vocabulary must end with BOS, EOS")

    @classmethod
    def from_activities(cls, activities: Iterable[str]) -> Vocabulary:
        acts = sorted({_check_label(a) for a in activities})
        return cls(tuple(acts) + (BOS, EOS))

    @cached_property
    def _index(self) -> dict[str, int]:
        idx = {label: i for i, label in enumerate(self.labels)}
        idx[PAD] = len(self.labels)
        return idx

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def activities(self) -> tuple[str, ...]:
        return self.labels[:-2]

    @property
    def n_activities(self) -> int:
        return len(self.labels) - 2

    @property
    def bos(self) -> int:
        return len(self.labels) - 2

    @property
    def eos(self) -> int:
        return len(self.labels) - 1

    @property
    def pad(self) -> int:
        return len(self.labels)

    @property
    def n_targets(self) -> int:
        return self.n_activities + 1

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise EncodingError(label) from None

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def encode(self, labels: Iterable[str]) -> list[int]:
        return [self.index(a) for a in labels]

    def target_position(self, index: int) -> int:
        """Map a vocabulary index (activity or EOS) to its output-layer position."""
        if index < self.n_activities:
            return index
        if index == self.eos:
            return self.n_activities
        raise ValueError(f"{self.labels[index] if index < self.size else PAD} is never a target")

    def target_label(self, position: int) -> str:
        return EOS if position == self.n_activities else self.labels[position]

    def to_targets(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices)
        if np.any(indices == self.bos) or np.any(indices >= self.pad):
            raise ValueError("BOS and PAD are never targets")
        return np.where(indices == self.eos, self.n_activities, indices)


def one_hot(label: str, vocab: Vocabulary) -> np.ndarray:
    vec = np.zeros(vocab.size)
    idx = vocab.index(label)
    if idx < vocab.size:
        vec[idx] = 1.0
    return vec


class EventLog:
    """A multiset of traces with optional case ids.

    Instances are treated as immutable; the vocabulary covers exactly the
    activities present unless one is supplied explicitly.
    """

    def __init__(
        self,
        traces: Iterable[Sequence[str]] = (),
        case_ids: Iterable[str] | None = None,
        vocabulary: Vocabulary | None = None,
    ) -> None:
        self._traces: tuple[Trace, ...] = tuple(as_trace(t) for t in traces)
        if case_ids is None:
            self._case_ids = tuple(str(i) for i in range(len(self._traces)))
        else:
            self._case_ids = tuple(str(c) for c in case_ids)
            if len(self._case_ids) != len(self._traces):
                raise ValueError("one case id per trace required")
        if vocabulary is None:
            vocabulary = Vocabulary.from_activities(a for t in self._traces for a in t)
        else:
            missing = {a for t in self._traces for a in t} - set(vocabulary.activities)
            if missing:
                raise ValueError(f"activities missing from vocabulary: {sorted(missing)}")
        self.vocabulary = vocabulary

    @classmethod
    def from_variants(
        cls, table: dict[Trace, int], vocabulary: Vocabulary | None = None
    ) -> EventLog:
        traces = [v for v in sorted(table) for _ in range(table[v])]
        return cls(traces, vocabulary=vocabulary)

    @property
    def traces(self) -> tuple[Trace, ...]:
        return self._traces

    @property
    def case_ids(self) -> tuple[str, ...]:
        return self._case_ids

    def __len__(self) -> int:
        return len(self._traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self._traces)

    def __add__(self, other: EventLog) -> EventLog:
        """Multiset union; the vocabulary is rebuilt over both logs."""
        return EventLog(self._traces + other._traces, self._case_ids + other._case_ids)

    def __repr__(self) -> str:
        return f"EventLog(|L|={len(self)}, |Var|={len(self.variants)})"

    @cached_property
    def variants(self) -> VariantTable:
        return VariantTable(self._traces)

    @property
    def max_trace_length(self) -> int:
        return max((len(t) for t in self._traces), default=0)


def variants_of(log: EventLog) -> VariantTable:
    return VariantTable(log.variants)


def occ(variant: Sequence[str], log: EventLog) -> int:
    return log.variants[tuple(variant)]


@dataclass(frozen=True)
class PrefixDataset:
    """Fixed-length, pre-padded prefix inputs with next-activity targets.

    ``inputs`` holds vocabulary indices (PAD = ``vocab.pad``); ``targets``
    holds vocabulary indices of activities or EOS.
    """

    inputs: np.ndarray
    targets: np.ndarray
    prefix_len: int

    def __post_init__(self) -> None:
        if self.inputs.shape != (len(self.targets), self.prefix_len):
            raise ValueError("inputs must be (n, prefix_len) with one target per row")

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, idx: np.ndarray | slice) -> PrefixDataset:
        return PrefixDataset(self.inputs[idx], self.targets[idx], self.prefix_len)


def window(indices: Sequence[int], prefix_len: int, pad: int) -> list[int]:
    """Left-truncate or pre-pad an index sequence to ``prefix_len``."""
    tail = list(indices[-prefix_len:])
    return [pad] * (prefix_len - len(tail)) + tail


def all_prefixes(log: EventLog, prefix_len: int, vocab: Vocabulary | None = None) -> PrefixDataset:
    """Every (prefix, next) pair of every trace augmented with BOS and EOS."""
    if prefix_len < 1:
        raise ValueError("prefix_len must be >= 1")
    vocab = vocab or log.vocabulary
    per_variant: list[tuple[np.ndarray, np.ndarray, int]] = []
    for variant, count in sorted(log.variants.items()):
        aug = [vocab.bos] + vocab.encode(variant) + [vocab.eos]
        xs = [window(aug[:j], prefix_len, vocab.pad) for j in range(1, len(aug))]
        per_variant.append((np.array(xs, dtype=np.int64), np.array(aug[1:], dtype=np.int64), count))
    if not per_variant:
        empty = np.zeros((0, prefix_len), dtype=np.int64)
        return PrefixDataset(empty, np.zeros(0, dtype=np.int64), prefix_len)
    # traces in log order so the pair multiset does not depend on variant iteration order
    lookup = {v: i for i, v in enumerate(sorted(log.variants))}
    order = [lookup[t] for t in log.traces]
    inputs = np.concatenate([per_variant[i][0] for i in order])
    targets = np.concatenate([per_variant[i][1] for i in order])
    return PrefixDataset(inputs, targets, prefix_len)


def build_prefix_dataset(
    log: EventLog,
    prefix_len: int,
    seed: int,
    val_fraction: float = 0.2,
    vocab: Vocabulary | None = None,
) -> tuple[PrefixDataset, PrefixDataset]:
    """Shuffle all prefix pairs with ``seed`` and split them into train/validation."""
    data = all_prefixes(log, prefix_len, vocab)
    n = len(data)
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    if n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    return data.subset(perm[n_val:]), data.subset(perm[:n_val])


def write_log(log: EventLog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case_id, trace in zip(log.case_ids, log.traces):
            fh.write(json.dumps({"case_id": case_id, "activities": list(trace)}) + "\n")


def read_log(path: str | Path, allow_empty: bool = True) -> EventLog:
    traces: list[Trace] = []
    case_ids: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                acts = record["activities"]
                if not isinstance(acts, list):
                    raise TypeError("activities must be a list")
                traces.append(as_trace(acts))
                case_ids.append(str(record.get("case_id", len(case_ids))))
            except (ValueError, KeyError, TypeError) as exc:
                raise LogFormatError(f"{path}:{lineno}: {exc}") from exc
    if not traces and not allow_empty:
        raise EmptyLogError(f"{path} contains no traces")
    return EventLog(traces, case_ids)
