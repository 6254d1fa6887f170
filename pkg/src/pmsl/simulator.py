"""Autoregressive play-out of a trained sequence model into a simulated event log."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .log import EventLog, Vocabulary, window
from .lstm import SequenceModel, forward


class VocabularyMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_traces: int
    max_len: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_traces < 1:
            raise ValueError("n_traces must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


def default_max_len(training_log: EventLog) -> int:
    return 2 * training_log.max_trace_length


def _check_vocab(model: SequenceModel, vocab: Vocabulary) -> None:
    if model.n_inputs != vocab.size or model.n_outputs != vocab.n_targets:
        raise VocabularyMismatch(
            f"model expects {model.n_inputs} inputs / {model.n_outputs} outputs, "
            f"vocabulary has {vocab.size} labels / {vocab.n_targets} targets"
        )
    if model.labels and tuple(model.labels) != vocab.labels:
        raise VocabularyMismatch("model was trained on a different vocabulary")


def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one position per row given uniforms ``u``."""
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def simulate_log(model: SequenceModel, vocab: Vocabulary, cfg: SimConfig) -> EventLog:
    """Sample ``cfg.n_traces`` traces from the full predicted distribution.

    Each trace ``i`` draws from its own generator seeded with ``(seed, i)``, so
    the result does not depend on how traces are batched. All live traces step
    together and distinct input windows are evaluated once per step. EOS as the
    very first draw is rejected and redrawn; traces reaching ``max_len``
    activities are cut off and kept.
    """
    _check_vocab(model, vocab)
    L = model.hp.prefix_len
    n = cfg.n_traces
    eos_pos = vocab.n_activities
    rngs = [np.random.default_rng([cfg.seed, i]) for i in range(n)]
    histories: list[list[int]] = [[vocab.bos] for _ in range(n)]
    traces: list[list[int]] = [[] for _ in range(n)]
    live = list(range(n))
    while live:
        windows = np.array([window(histories[i], L, vocab.pad) for i in live], dtype=np.int64)
        uniq, inverse = np.unique(windows, axis=0, return_inverse=True)
        probs = forward(model, uniq)[inverse.reshape(-1)]
        u = np.array([rngs[i].random() for i in live])
        picks = _draw(probs, u)
        nxt = []
        for row, (i, pos) in enumerate(zip(live, picks)):
            pos = int(pos)
            if pos == eos_pos and not traces[i]:
                # rejection: redraw until an activity comes up
                p = probs[row].copy()
                if p[:eos_pos].sum() <= 0:
                    raise ValueError("model assigns zero probability to every activity after BOS")
                while pos == eos_pos:
                    pos = int(_draw(p[None, :], np.array([rngs[i].random()]))[0])
            if pos == eos_pos:
                continue
            traces[i].append(pos)
            histories[i].append(pos)
            if len(traces[i]) < cfg.max_len:
                nxt.append(i)
        live = nxt
    acts = vocab.activities
    return EventLog(
        [[acts[p] for p in t] for t in traces],
        [f"sim-{i}" for i in range(n)],
        vocabulary=vocab,
    )
