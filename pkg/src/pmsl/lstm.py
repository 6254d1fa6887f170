"""A small LSTM next-event classifier written directly in numpy.

Inputs are one-hot activity indices (the padding index maps to an all-zero
vector). One or two stacked LSTM layers, optionally bidirectional, feed the
last time step into a dense softmax layer over activities plus EOS. Training
uses mini-batch Adam on mean cross-entropy with L1/L2 penalties on weight
matrices, inverted dropout on LSTM outputs, a plateau learning-rate schedule
and early stopping on validation accuracy.

All arrays are float64. Gate blocks are laid out as [input, forget, output, cell].
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .log import PrefixDataset

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-7
FORGET_BIAS = 1.0
DIRECTIONS = ("f", "b")

GRID_VALUES = {
    "bidirectional": (False, True),
    "num_layers": (1, 2),
    "hidden_size": (16, 32, 64),
    "l1l2": (0.0, 0.0001, 0.001, 0.01),
    "dropout": (0.0, 0.2, 0.4, 0.6),
}


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, loss: float) -> None:
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class HyperParams:
    bidirectional: bool = True
    num_layers: int = 1
    hidden_size: int = 64
    l1: float = 0.0
    l2: float = 0.0
    dropout: float = 0.0
    learning_rate_init: float = 0.005
    batch_size: int = 128
    lr_decay_factor: float = 0.5
    lr_patience: int = 3
    stop_patience: int = 6
    max_epochs: int = 600
    prefix_len: int = 6
    seed: int = 0
    restore_best: bool = True

    def __post_init__(self) -> None:
        if self.num_layers < 1 or self.hidden_size < 1 or self.prefix_len < 1:
            raise ValueError("num_layers, hidden_size and prefix_len must be positive")
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("regularization strengths must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.learning_rate_init <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning rate, batch size and max_epochs must be positive")

    @property
    def n_directions(self) -> int:
        return 2 if self.bidirectional else 1

    def replace(self, **changes) -> HyperParams:
        return HyperParams(**{**asdict(self), **changes})

    def in_grid(self) -> bool:
        return (
            self.bidirectional in GRID_VALUES["bidirectional"]
            and self.num_layers in GRID_VALUES["num_layers"]
            and self.hidden_size in GRID_VALUES["hidden_size"]
            and self.l1 == self.l2
            and self.l1 in GRID_VALUES["l1l2"]
            and self.dropout in GRID_VALUES["dropout"]
        )


def accuracy_based(prefix_len: int, seed: int = 0, **overrides) -> HyperParams:
    """Bidirectional, one layer of 64 units, no regularization, no dropout."""
    return HyperParams(True, 1, 64, 0.0, 0.0, 0.0, prefix_len=prefix_len, seed=seed).replace(**overrides)


def post_hoc(prefix_len: int, seed: int = 0, **overrides) -> HyperParams:
    """Bidirectional, one layer of 64 units, L1 = L2 = 0.001, dropout 0.4."""
    return HyperParams(True, 1, 64, 0.001, 0.001, 0.4, prefix_len=prefix_len, seed=seed).replace(**overrides)


PROFILES = {"accuracy_based": accuracy_based, "post_hoc": post_hoc}


def grid(prefix_len: int, seed: int = 0, **filters) -> list[HyperParams]:
    """Grid cells in a fixed order; ``filters`` maps a GRID_VALUES key to allowed values."""
    unknown = set(filters) - set(GRID_VALUES)
    if unknown:
        raise ValueError(f"unknown grid axes: {sorted(unknown)}")
    axes = {k: tuple(filters.get(k, v)) for k, v in GRID_VALUES.items()}
    return [
        HyperParams(bi, nl, hs, reg, reg, dr, prefix_len=prefix_len, seed=seed)
        for bi in axes["bidirectional"]
        for nl in axes["num_layers"]
        for hs in axes["hidden_size"]
        for reg in axes["l1l2"]
        for dr in axes["dropout"]
    ]


@dataclass
class SequenceModel:
    hp: HyperParams
    n_inputs: int
    n_outputs: int
    params: dict[str, np.ndarray]
    labels: tuple[str, ...] = ()
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    lr: float = 0.0
    epochs_trained: int = 0

    @property
    def weight_names(self) -> list[str]:
        return [k for k in self.params if not k.endswith("_b")]

    def n_parameters(self) -> int:
        return sum(w.size for w in self.params.values())


def _key(layer: int, direction: str) -> str:
    return f"lstm{layer}{direction}"


def param_shapes(hp: HyperParams, n_inputs: int, n_outputs: int) -> dict[str, tuple[int, ...]]:
    H = hp.hidden_size
    shapes: dict[str, tuple[int, ...]] = {}
    in_dim = n_inputs
    for layer in range(hp.num_layers):
        for d in DIRECTIONS[: hp.n_directions]:
            shapes[f"{_key(layer, d)}_Wx"] = (in_dim, 4 * H)
            shapes[f"{_key(layer, d)}_Wh"] = (H, 4 * H)
            shapes[f"{_key(layer, d)}_b"] = (4 * H,)
        in_dim = H * hp.n_directions
    shapes["dense_W"] = (in_dim, n_outputs)
    shapes["dense_b"] = (n_outputs,)
    return shapes


def init_model(
    hp: HyperParams, vocab_size: int, n_outputs: int | None = None, labels: tuple[str, ...] = ()
) -> SequenceModel:
    """Fresh model for ``vocab_size`` input labels.

    Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at
    zero except the forget gate, which starts at 1. By default the output
    layer covers every input label except BOS (activities plus EOS).
    """
    if vocab_size < 2:
        raise ValueError("vocab_size must be >= 2")
    n_outputs = vocab_size - 1 if n_outputs is None else n_outputs
    rng = np.random.default_rng(np.random.SeedSequence([hp.seed, 0]))
    H = hp.hidden_size
    params = {}
    for name, shape in param_shapes(hp, vocab_size, n_outputs).items():
        if name.endswith("_b"):
            w = np.zeros(shape)
            if name.startswith("lstm"):
                w[H:2 * H] = FORGET_BIAS
        else:
            lim = 1.0 / math.sqrt(shape[0])
            w = rng.uniform(-lim, lim, size=shape)
        params[name] = w
    return SequenceModel(
        hp, vocab_size, n_outputs, params, tuple(labels),
        m={k: np.zeros_like(w) for k, w in params.items()},
        v={k: np.zeros_like(w) for k, w in params.items()},
        lr=hp.learning_rate_init,
    )


# -- forward / backward ------------------------------------------------------------------


def _one_hot(inputs: np.ndarray, n_inputs: int) -> np.ndarray:
    table = np.zeros((n_inputs + 1, n_inputs))
    table[np.arange(n_inputs), np.arange(n_inputs)] = 1.0
    return table[inputs]


def _cell_forward(xp: np.ndarray, Wh: np.ndarray):
    """One direction over time; ``xp`` holds input projections plus bias, (B, T, 4H)."""
    B, T, G = xp.shape
    H = G // 4
    hs = np.empty((B, T, H))
    cs = np.empty((B, T, H))
    tcs = np.empty((B, T, H))
    gates = np.empty((B, T, G))
    h = c = None
    for t in range(T):
        z = xp[:, t] if t == 0 else xp[:, t] + h @ Wh
        g = gates[:, t]
        g[:, : 3 * H] = expit(z[:, : 3 * H])
        g[:, 3 * H:] = np.tanh(z[:, 3 * H:])
        c = g[:, :H] * g[:, 3 * H:] if t == 0 else g[:, H:2 * H] * c + g[:, :H] * g[:, 3 * H:]
        tc = np.tanh(c)
        h = g[:, 2 * H:3 * H] * tc
        hs[:, t] = h
        cs[:, t] = c
        tcs[:, t] = tc
    return hs, cs, tcs, gates


def _cell_backward(cache, Wh: np.ndarray, dhs: np.ndarray | None, dh_last: np.ndarray | None) -> np.ndarray:
    """Gradients w.r.t. gate pre-activations, (B, T, 4H).

    The upstream gradient is either a full sequence ``dhs`` or only ``dh_last``
    at the final step.
    """
    hs, cs, tcs, gates = cache
    B, T, H = hs.shape
    dz = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H)) if dh_last is None else dh_last
    dc_next = None
    for t in range(T - 1, -1, -1):
        g = gates[:, t]
        i, f, o, cand = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        dh = dh_next if dhs is None else dhs[:, t] + dh_next
        tc = tcs[:, t]
        dc = dh * o * (1.0 - tc * tc)
        if dc_next is not None:
            dc += dc_next
        d = dz[:, t]
        d[:, :H] = dc * cand * i * (1.0 - i)
        d[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        d[:, 3 * H:] = dc * i * (1.0 - cand * cand)
        if t > 0:
            d[:, H:2 * H] = dc * cs[:, t - 1] * f * (1.0 - f)
            dh_next = d @ Wh.T
        else:
            d[:, H:2 * H] = 0.0
        dc_next = dc * f
    return dz


def _dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward(model: SequenceModel, inputs: np.ndarray, training: bool, rng: np.random.Generator | None):
    hp = model.hp
    P = model.params
    inputs = np.asarray(inputs)
    if inputs.ndim != 2:
        raise ValueError("inputs must be a (batch, prefix_len) index array")
    if inputs.size and (inputs.min() < 0 or inputs.max() > model.n_inputs):
        raise ValueError(f"input indices must lie in [0, {model.n_inputs}] (the last one is padding)")
    use_dropout = training and hp.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    B, T = inputs.shape
    x = _one_hot(inputs, model.n_inputs)
    layers = []
    for layer in range(hp.num_layers):
        last = layer == hp.num_layers - 1
        dirs = []
        outs = []
        for d in DIRECTIONS[: hp.n_directions]:
            k = _key(layer, d)
            seq_in = x if d == "f" else x[:, ::-1]
            xp = (seq_in.reshape(B * T, -1) @ P[f"{k}_Wx"]).reshape(B, T, -1) + P[f"{k}_b"]
            cache = _cell_forward(xp, P[f"{k}_Wh"])
            dirs.append((d, seq_in, cache))
            hs = cache[0]
            if last:
                outs.append(hs[:, -1])  # backward direction: its final step is position 0
            else:
                outs.append(hs if d == "f" else hs[:, ::-1])
        out = np.concatenate(outs, axis=-1)
        mask = _dropout_mask(out.shape, hp.dropout, rng) if use_dropout else None
        if mask is not None:
            out = out * mask
        layers.append((dirs, mask))
        x = out
    logits = x @ P["dense_W"] + P["dense_b"]
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs, (layers, x)


def forward(
    model: SequenceModel, inputs: np.ndarray, training: bool = False, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Softmax rows over the output labels, one per input prefix."""
    return _forward(model, inputs, training, rng)[0]


def penalty(model: SequenceModel) -> float:
    hp = model.hp
    if hp.l1 == 0.0 and hp.l2 == 0.0:
        return 0.0
    total = 0.0
    for k in model.weight_names:
        w = model.params[k]
        total += hp.l1 * np.abs(w).sum() + hp.l2 * np.square(w).sum()
    return float(total)


def loss_and_grads(
    model: SequenceModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    training: bool = True,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Mean cross-entropy plus weight penalties, gradients for every parameter, and the probabilities.

    ``targets`` are output-layer positions.
    """
    targets = np.asarray(targets)
    if len(targets) != len(inputs):
        raise ValueError("one target per input row required")
    hp = model.hp
    P = model.params
    probs, (layers, feat) = _forward(model, inputs, training, rng)
    B, T = np.asarray(inputs).shape
    rows = np.arange(B)
    ce = -np.log(np.maximum(probs[rows, targets], 1e-300)).mean()
    loss = float(ce) + penalty(model)

    grads: dict[str, np.ndarray] = {}
    dlogits = probs.copy()
    dlogits[rows, targets] -= 1.0
    dlogits /= B
    grads["dense_W"] = feat.T @ dlogits
    grads["dense_b"] = dlogits.sum(axis=0)
    dx = dlogits @ P["dense_W"].T

    H = hp.hidden_size
    for layer in range(hp.num_layers - 1, -1, -1):
        dirs, mask = layers[layer]
        last = layer == hp.num_layers - 1
        if mask is not None:
            dx = dx * mask
        dx_below = None
        for n, (d, seq_in, cache) in enumerate(dirs):
            k = _key(layer, d)
            part = dx[..., n * H:(n + 1) * H]
            if last:
                dz = _cell_backward(cache, P[f"{k}_Wh"], None, part)
            else:
                dz = _cell_backward(cache, P[f"{k}_Wh"], part if d == "f" else part[:, ::-1], None)
            hs = cache[0]
            dz2 = dz.reshape(B * T, 4 * H)
            grads[f"{k}_Wx"] = seq_in.reshape(B * T, -1).T @ dz2
            h_prev = np.concatenate([np.zeros((B, 1, H)), hs[:, :-1]], axis=1)
            grads[f"{k}_Wh"] = h_prev.reshape(B * T, H).T @ dz2
            grads[f"{k}_b"] = dz2.sum(axis=0)
            if layer > 0:
                dxi = (dz2 @ P[f"{k}_Wx"].T).reshape(B, T, -1)
                if d == "b":
                    dxi = dxi[:, ::-1]
                dx_below = dxi if dx_below is None else dx_below + dxi
        dx = dx_below

    if hp.l1 or hp.l2:
        for k in model.weight_names:
            w = P[k]
            grads[k] = grads[k] + hp.l1 * np.sign(w) + 2.0 * hp.l2 * w
    return loss, {k: grads[k] for k in P}, probs


def adam_step(model: SequenceModel, grads: dict[str, np.ndarray]) -> None:
    """Bias-corrected Adam update at the model's current learning rate."""
    model.step += 1
    t = model.step
    lr_t = model.lr * math.sqrt(1.0 - ADAM_BETA2 ** t) / (1.0 - ADAM_BETA1 ** t)
    for k, g in grads.items():
        m = model.m[k]
        v = model.v[k]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        model.params[k] -= lr_t * m / (np.sqrt(v) + ADAM_EPS)


# -- training --------------------------------------------------------------------------


def target_positions(targets: np.ndarray, n_inputs: int) -> np.ndarray:
    """Vocabulary indices (activities, EOS) to output positions; EOS is the last input label."""
    targets = np.asarray(targets)
    n_act = n_inputs - 2
    return np.where(targets == n_inputs - 1, n_act, targets)


def predict_unique(model: SequenceModel, inputs: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Inference probabilities, computing each distinct input row once."""
    inputs = np.asarray(inputs)
    if len(inputs) == 0:
        return np.zeros((0, model.n_outputs))
    uniq, inverse = np.unique(inputs, axis=0, return_inverse=True)
    out = np.concatenate([forward(model, uniq[i:i + chunk]) for i in range(0, len(uniq), chunk)])
    return out[inverse.reshape(-1)]


def evaluate(model: SequenceModel, data: PrefixDataset) -> tuple[float, float]:
    """Mean cross-entropy (without penalties) and argmax accuracy."""
    probs = predict_unique(model, data.inputs)
    y = target_positions(data.targets, model.n_inputs)
    rows = np.arange(len(y))
    loss = float(-np.log(np.maximum(probs[rows, y], 1e-300)).mean())
    acc = float((probs.argmax(axis=1) == y).mean())
    return loss, acc


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.val_acc)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc,lr"]
        for e in range(len(self)):
            lines.append(
                f"{e + 1},{self.train_loss[e]!r},{self.train_acc[e]!r},"
                f"{self.val_loss[e]!r},{self.val_acc[e]!r},{self.lr[e]!r}"
            )
        return "\n".join(lines) + "\n"


class PlateauSchedule:
    """Validation-accuracy bookkeeping for LR decay and early stopping.

    An epoch counts as an improvement only when accuracy strictly exceeds the
    best so far. The LR counter resets after every decay; the stop counter
    only resets on improvement.
    """

    def __init__(self, lr_patience: int, stop_patience: int, factor: float) -> None:
        self.lr_patience = lr_patience
        self.stop_patience = stop_patience
        self.factor = factor
        self.best = -math.inf
        self.lr_wait = 0
        self.stop_wait = 0

    def update(self, val_acc: float, lr: float) -> tuple[bool, float, bool]:
        """Returns (improved, new_lr, stop)."""
        if val_acc > self.best:
            self.best = val_acc
            self.lr_wait = self.stop_wait = 0
            return True, lr, False
        self.lr_wait += 1
        self.stop_wait += 1
        if self.lr_wait >= self.lr_patience:
            lr *= self.factor
            self.lr_wait = 0
        return False, lr, self.stop_wait >= self.stop_patience


def train(model: SequenceModel, train_data: PrefixDataset, val_data: PrefixDataset) -> TrainHistory:
    hp = model.hp
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("training and validation prefix sets must be non-empty")
    if train_data.prefix_len != hp.prefix_len:
        raise ValueError("dataset prefix length differs from the model's")
    shuffle_ss, dropout_ss = np.random.SeedSequence([hp.seed, 1]).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    x_all = train_data.inputs
    y_all = target_positions(train_data.targets, model.n_inputs)
    n = len(y_all)
    history = TrainHistory()
    schedule = PlateauSchedule(hp.lr_patience, hp.stop_patience, hp.lr_decay_factor)
    best_params = {k: w.copy() for k, w in model.params.items()}
    for epoch in range(1, hp.max_epochs + 1):
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, hp.batch_size):
            idx = perm[start:start + hp.batch_size]
            loss, grads, probs = loss_and_grads(model, x_all[idx], y_all[idx], True, dropout_rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            adam_step(model, grads)
            loss_sum += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y_all[idx]).sum())
        val_loss, val_acc = evaluate(model, val_data)
        history.train_loss.append(loss_sum / n)
        history.train_acc.append(correct / n)
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        history.lr.append(model.lr)
        model.epochs_trained = epoch
        improved, model.lr, stop = schedule.update(val_acc, model.lr)
        if improved:
            history.best_epoch = epoch
            best_params = {k: w.copy() for k, w in model.params.items()}
        logger.debug("epoch %d loss %.4f val_acc %.4f lr %.2e", epoch, loss_sum / n, val_acc, model.lr)
        if stop:
            history.stopped_early = True
            break
    if hp.restore_best:
        model.params = best_params
    return history


def predict_next(model: SequenceModel, prefix: np.ndarray) -> np.ndarray:
    """Probability row for a single already padded/truncated prefix."""
    prefix = np.asarray(prefix)
    if prefix.shape != (model.hp.prefix_len,):
        raise ValueError(f"prefix must have length {model.hp.prefix_len}")
    return forward(model, prefix[None, :])[0]


# -- checkpoints -----------------------------------------------------------------------

MAGIC = b"PMSLLSTM"
FORMAT_VERSION = 1


def save_model(model: SequenceModel, path: str | Path) -> None:
    """Binary checkpoint: magic, u32 version, u64 header length, JSON header, then
    float64 little-endian parameter blocks in header order."""
    header = {
        "hyperparams": asdict(model.hp),
        "n_inputs": model.n_inputs,
        "n_outputs": model.n_outputs,
        "labels": list(model.labels),
        "blocks": [[k, list(w.shape)] for k, w in model.params.items()],
        "epochs_trained": model.epochs_trained,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for w in model.params.values():
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_model(path: str | Path) -> SequenceModel:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path} is not a model checkpoint")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 8 + struct.calcsize("<IQ")
    header = json.loads(data[off:off + hlen])
    off += hlen
    params = {}
    for name, shape in header["blocks"]:
        count = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
    hp = HyperParams(**header["hyperparams"])
    return SequenceModel(
        hp, header["n_inputs"], header["n_outputs"], params, tuple(header["labels"]),
        m={k: np.zeros_like(w) for k, w in params.items()},
        v={k: np.zeros_like(w) for k, w in params.items()},
        lr=hp.learning_rate_init,
        epochs_trained=header["epochs_trained"],
    )


def write_history(history: TrainHistory, path: str | Path) -> None:
    Path(path).write_text(history.to_csv())


def read_history(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
