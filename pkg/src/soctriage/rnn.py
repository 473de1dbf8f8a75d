"""Recurrent classifier over event sequences, written against numpy only.

A single-layer Elman recurrence with tanh units reads one feature vector
per event and keeps a running hidden state:

    h_t = tanh(W_xh x_t + W_hh h_{t-1} + b_h)
    p   = softmax(W_hy h_T + b_y)

Class 0 is background noise, class 1 an attack-chain-relevant sequence.
Training is plain SGD over class-weighted cross-entropy with global-norm
gradient clipping, fully deterministic for a fixed seed (numpy PCG64 for
initialization and the shuffle schedule). The model can be maintained
incrementally: new event types append feature slots without disturbing
existing ones, and further training resumes from the current parameters.

Trained parameter snapshots are immutable; share them freely across
threads. Training itself mutates nothing it did not create.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import (EmptyDataset, EmptySequence, NonFiniteLoss, ShapeMismatch)
from .events import Event, Protocol

NOISE, CHAIN = 0, 1
CLASS_NAMES = ("noise", "chain")

_PROTOCOLS = tuple(Protocol)
_SENSOR_BUCKETS = 8
_TIME_CAP = 10**7  # seconds; log1p-scaled deltas saturate here
_FIXED_SLOTS = 4 + _SENSOR_BUCKETS + 3 + 2 + 8 + 2 + 1  # + 1 OTHER slot


@dataclass(frozen=True)
class Vocabulary:
    """Ordered event-type table; unknown types fall into the OTHER slot."""

    types: tuple[str, ...] = ()

    def index(self, event_type: str) -> int | None:
        try:
            return self.types.index(event_type)
        except ValueError:
            return None

    def extend(self, event_types) -> "Vocabulary":
        """Append unseen types in first-seen order; existing indices keep."""
        known = set(self.types)
        added = []
        for t in event_types:
            if t not in known:
                known.add(t)
                added.append(t)
        return Vocabulary(self.types + tuple(added)) if added else self


def vocabulary_from_sequences(sequences) -> Vocabulary:
    return Vocabulary().extend(e.event_type for seq in sequences for e in seq)


def feature_dim(vocab: Vocabulary) -> int:
    return _FIXED_SLOTS + len(vocab.types)


def _scaled_log(seconds: int) -> float:
    return min(math.log1p(max(0, seconds)), math.log1p(_TIME_CAP)) / math.log1p(_TIME_CAP)


def featurize_event(e: Event, prev: Event | None, vocab: Vocabulary) -> np.ndarray:
    """Fixed-layout feature vector; deterministic, every component finite.

    Layout: protocol one-hot (4), sensor hash buckets (8), severity,
    confidence, attack prior, ports (2), IP octets (8), detect-gap from
    prev, detect lag, OTHER slot, then one slot per vocabulary type. The
    growable type block sits at the end so existing slot indices survive
    vocabulary growth.
    """
    x = np.zeros(feature_dim(vocab))
    x[_PROTOCOLS.index(e.protocol)] = 1.0
    x[4 + zlib.crc32(e.sensor.encode("utf-8")) % _SENSOR_BUCKETS] = 1.0
    base = 4 + _SENSOR_BUCKETS
    x[base] = e.severity / 10.0
    x[base + 1] = e.confidence
    x[base + 2] = e.attack_prior / 5.0
    x[base + 3] = e.port_src / 65535.0
    x[base + 4] = e.port_dst / 65535.0
    for i, oct_ in enumerate(e.ip_src.split(".")):
        x[base + 5 + i] = int(oct_) / 255.0
    for i, oct_ in enumerate(e.ip_dst.split(".")):
        x[base + 9 + i] = int(oct_) / 255.0
    x[base + 13] = _scaled_log(e.t_detect - prev.t_detect) if prev is not None else 0.0
    x[base + 14] = _scaled_log(e.t_detect - e.t_occur)
    slot = vocab.index(e.event_type)
    if slot is None:
        x[base + 15] = 1.0  # OTHER
    else:
        x[_FIXED_SLOTS + slot] = 1.0
    return x


def featurize_sequence(events, vocab: Vocabulary) -> np.ndarray:
    if not events:
        raise EmptySequence("cannot featurize an empty sequence")
    prev = None
    rows = []
    for e in events:
        rows.append(featurize_event(e, prev, vocab))
        prev = e
    return np.stack(rows)


@dataclass(frozen=True)
class RnnParams:
    w_xh: np.ndarray  # hidden x input
    w_hh: np.ndarray  # hidden x hidden
    b_h: np.ndarray   # hidden
    w_hy: np.ndarray  # classes x hidden
    b_y: np.ndarray   # classes

    def __post_init__(self):
        h, d = self.w_xh.shape
        if self.w_hh.shape != (h, h) or self.b_h.shape != (h,):
            raise ShapeMismatch("hidden-layer shapes inconsistent")
        c = self.w_hy.shape[0]
        if self.w_hy.shape != (c, h) or self.b_y.shape != (c,):
            raise ShapeMismatch("output-layer shapes inconsistent")
        for a in (self.w_xh, self.w_hh, self.b_h, self.w_hy, self.b_y):
            if not np.all(np.isfinite(a)):
                raise ShapeMismatch("parameters must be finite")

    @property
    def hidden_size(self) -> int:
        return self.w_xh.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_xh.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w_hy.shape[0]

    def copy(self) -> "RnnParams":
        return RnnParams(self.w_xh.copy(), self.w_hh.copy(), self.b_h.copy(),
                         self.w_hy.copy(), self.b_y.copy())


INIT_SCALE = 0.08


def init_params(input_dim: int, hidden: int, n_classes: int = 2,
                seed: int = 0) -> RnnParams:
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
    return RnnParams(u(hidden, input_dim), u(hidden, hidden), np.zeros(hidden),
                     u(n_classes, hidden), np.zeros(n_classes))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    ez = np.exp(z)
    return ez / ez.sum()


def forward_sequence(params: RnnParams, xs: np.ndarray,
                     h0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and the final hidden state.

    The state folds each new input into the previous summary, so the
    returned state can seed a later call on the continuation of the
    stream.
    """
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise EmptySequence("need a (T, D) array with T >= 1")
    if xs.shape[1] != params.input_dim:
        raise ShapeMismatch(
            f"input dim {xs.shape[1]} != parameter dim {params.input_dim}")
    h = np.zeros(params.hidden_size) if h0 is None else h0
    for x in xs:
        h = np.tanh(params.w_xh @ x + params.w_hh @ h + params.b_h)
    probs = _softmax(params.w_hy @ h + params.b_y)
    return probs, h


def sequence_loss(params: RnnParams, xs: np.ndarray, label: int,
                  class_weights: tuple[float, float]) -> float:
    """Class-weighted cross-entropy of one sequence."""
    probs, _ = forward_sequence(params, xs)
    return -class_weights[label] * math.log(max(probs[label], 1e-300))


def bptt_gradients(params: RnnParams, xs: np.ndarray, label: int,
                   class_weights: tuple[float, float]) -> tuple[RnnParams, float]:
    """Analytic gradients via backpropagation through time, plus the loss.

    Gradient tensors mirror the parameter shapes. The loss is linear in
    the labeled class's weight, so doubling that weight doubles every
    component.
    """
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise EmptySequence("need a (T, D) array with T >= 1")
    if xs.shape[1] != params.input_dim:
        raise ShapeMismatch(
            f"input dim {xs.shape[1]} != parameter dim {params.input_dim}")
    hs = [np.zeros(params.hidden_size)]
    for x in xs:
        hs.append(np.tanh(params.w_xh @ x + params.w_hh @ hs[-1] + params.b_h))
    probs = _softmax(params.w_hy @ hs[-1] + params.b_y)
    loss = -class_weights[label] * math.log(max(probs[label], 1e-300))

    d_logits = class_weights[label] * probs.copy()
    d_logits[label] -= class_weights[label]
    g_w_hy = np.outer(d_logits, hs[-1])
    g_b_y = d_logits
    g_w_xh = np.zeros_like(params.w_xh)
    g_w_hh = np.zeros_like(params.w_hh)
    g_b_h = np.zeros_like(params.b_h)
    d_h = params.w_hy.T @ d_logits
    for t in range(len(xs) - 1, -1, -1):
        d_z = (1.0 - hs[t + 1] ** 2) * d_h
        g_w_xh += np.outer(d_z, xs[t])
        g_w_hh += np.outer(d_z, hs[t])
        g_b_h += d_z
        d_h = params.w_hh.T @ d_z
    grads = RnnParams(g_w_xh, g_w_hh, g_b_h, g_w_hy, g_b_y)
    return grads, loss


def _clip(grads: RnnParams, max_norm: float) -> RnnParams:
    total = math.sqrt(sum(float(np.sum(a * a)) for a in
                          (grads.w_xh, grads.w_hh, grads.b_h, grads.w_hy, grads.b_y)))
    if total <= max_norm or total == 0.0:
        return grads
    s = max_norm / total
    return RnnParams(grads.w_xh * s, grads.w_hh * s, grads.b_h * s,
                     grads.w_hy * s, grads.b_y * s)


@dataclass(frozen=True)
class TrainConfig:
    rate: float = 0.1
    epochs: int = 50
    clip_norm: float = 5.0
    seed: int = 0
    class_weights: tuple[float, float] | None = None  # None: inverse frequency


def _default_weights(labels) -> tuple[float, float]:
    n = len(labels)
    counts = [labels.count(NOISE), labels.count(CHAIN)]
    return tuple(n / (2 * c) if c else 1.0 for c in counts)


def train_epochs(params: RnnParams, dataset: list[tuple[np.ndarray, int]],
                 cfg: TrainConfig) -> tuple[RnnParams, list[float]]:
    """SGD over the dataset; returns updated parameters and per-epoch loss.

    Deterministic for a fixed seed: the shuffle schedule comes from one
    seeded generator, examples update one at a time in schedule order.
    Raises NonFiniteLoss (with the failing epoch) if the loss diverges.
    """
    if not dataset:
        raise EmptyDataset("no training sequences")
    for xs, _ in dataset:
        if xs.ndim != 2 or xs.shape[1] != params.input_dim:
            raise ShapeMismatch(
                f"dataset input dim {xs.shape} != parameter dim {params.input_dim}")
    weights = cfg.class_weights or _default_weights([lb for _, lb in dataset])
    rng = np.random.default_rng(cfg.seed)
    cur = params.copy()
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for i in order:
            xs, label = dataset[i]
            try:
                grads, loss = bptt_gradients(cur, xs, label, weights)
                if not math.isfinite(loss):
                    raise NonFiniteLoss(
                        f"loss {loss} at epoch {epoch}, example {i}")
                g = _clip(grads, cfg.clip_norm)
                cur = RnnParams(cur.w_xh - cfg.rate * g.w_xh,
                                cur.w_hh - cfg.rate * g.w_hh,
                                cur.b_h - cfg.rate * g.b_h,
                                cur.w_hy - cfg.rate * g.w_hy,
                                cur.b_y - cfg.rate * g.b_y)
            except ShapeMismatch:
                # dims were validated up front; a shape failure here means
                # a gradient or parameter left the finite range
                raise NonFiniteLoss(
                    f"training diverged at epoch {epoch}, example {i} "
                    f"(rate {cfg.rate}, clip {cfg.clip_norm})") from None
            total += loss
        curve.append(total / len(dataset))
    return cur, curve


# -- event-level wrapper -------------------------------------------------------

@dataclass(frozen=True)
class SequenceClassifier:
    """Trained parameters plus the vocabulary that fixes the feature layout."""

    params: RnnParams
    vocab: Vocabulary

    def predict_proba(self, events) -> tuple[float, float]:
        probs, _ = forward_sequence(self.params, featurize_sequence(events, self.vocab))
        return float(probs[NOISE]), float(probs[CHAIN])

    def classify(self, events) -> int:
        """CHAIN only when strictly more likely; 0.5 ties resolve to NOISE."""
        return CHAIN if self.predict_proba(events)[CHAIN] > 0.5 else NOISE


def init_classifier(vocab: Vocabulary, hidden: int = 16,
                    seed: int = 0) -> SequenceClassifier:
    return SequenceClassifier(init_params(feature_dim(vocab), hidden, 2, seed), vocab)


def _featurize_dataset(data, vocab: Vocabulary) -> list[tuple[np.ndarray, int]]:
    return [(featurize_sequence(events, vocab), label) for events, label in data]


def train_classifier(clf: SequenceClassifier, data: list[tuple[list[Event], int]],
                     cfg: TrainConfig) -> tuple[SequenceClassifier, list[float]]:
    params, curve = train_epochs(clf.params, _featurize_dataset(data, clf.vocab), cfg)
    return SequenceClassifier(params, clf.vocab), curve


def incremental_update(clf: SequenceClassifier, new_data: list[tuple[list[Event], int]],
                       cfg: TrainConfig) -> tuple[SequenceClassifier, list[float]]:
    """Fold new labeled sequences into an already-trained model.

    Exactly train_epochs resumed from the current parameters. Unseen
    event types append vocabulary slots; the new input columns start at
    zero so previously learned behavior is untouched until training moves
    them. An empty batch is a no-op.
    """
    if not new_data:
        return clf, []
    vocab = clf.vocab.extend(e.event_type for events, _ in new_data for e in events)
    params = clf.params
    if len(vocab.types) > len(clf.vocab.types):
        pad = len(vocab.types) - len(clf.vocab.types)
        params = replace(params, w_xh=np.hstack(
            [params.w_xh, np.zeros((params.hidden_size, pad))]))
    params, curve = train_epochs(params, _featurize_dataset(new_data, vocab), cfg)
    return SequenceClassifier(params, vocab), curve


def accuracy(clf: SequenceClassifier, data: list[tuple[list[Event], int]]) -> float:
    if not data:
        raise EmptyDataset("no evaluation sequences")
    hits = sum(1 for events, label in data if clf.classify(events) == label)
    return hits / len(data)


def build_sequence_dataset(events: list[Event], labels: dict[str, str],
                           noise_chunk: int = 3) -> list[tuple[list[Event], int]]:
    """Group a labeled stream into training sequences.

    Chain-labeled events form one sequence per chain id (detect order);
    noise events are chunked into consecutive runs of noise_chunk. Output
    order: chains by id, then noise chunks by time.
    """
    chains: dict[str, list[Event]] = {}
    noise: list[Event] = []
    for e in sorted(events, key=lambda e: (e.t_detect, e.id)):
        label = labels.get(e.id, "noise")
        if label == "noise":
            noise.append(e)
        else:
            chains.setdefault(label, []).append(e)
    data: list[tuple[list[Event], int]] = [
        (chains[cid], CHAIN) for cid in sorted(chains)]
    for i in range(0, len(noise), noise_chunk):
        chunk = noise[i:i + noise_chunk]
        if chunk:
            data.append((chunk, NOISE))
    return data


# -- checkpoint format ---------------------------------------------------------

CHECKPOINT_MAGIC = "soctriage-rnn"
CHECKPOINT_VERSION = 1


def _fmt_float(v: float) -> str:
    return repr(float(v))


def save_checkpoint(clf: SequenceClassifier, path: str) -> None:
    """Write the documented text checkpoint; loading round-trips exactly.

    Decimal float text uses Python's shortest round-trip repr, so every
    float64 survives bit-for-bit.
    """
    p = clf.params
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        fh.write(f"hidden {p.hidden_size}\n")
        fh.write(f"classes {p.n_classes}\n")
        fh.write(f"vocab {len(clf.vocab.types)}\n")
        for t in clf.vocab.types:
            fh.write(t + "\n")
        for name, arr in (("w_xh", p.w_xh), ("w_hh", p.w_hh), ("b_h", p.b_h),
                          ("w_hy", p.w_hy), ("b_y", p.b_y)):
            mat = np.atleast_2d(arr)
            fh.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
            for row in mat:
                fh.write(" ".join(_fmt_float(v) for v in row) + "\n")


def load_checkpoint(path: str) -> SequenceClassifier:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    it = iter(lines)
    magic = next(it).split()
    if magic[0] != CHECKPOINT_MAGIC:
        raise ShapeMismatch(f"not a checkpoint file: {path}")
    hidden = int(next(it).split()[1])
    n_classes = int(next(it).split()[1])
    n_vocab = int(next(it).split()[1])
    vocab = Vocabulary(tuple(next(it) for _ in range(n_vocab)))
    arrays = {}
    for name in ("w_xh", "w_hh", "b_h", "w_hy", "b_y"):
        header = next(it).split()
        if header[0] != name:
            raise ShapeMismatch(f"expected section {name}, found {header[0]}")
        rows, cols = int(header[1]), int(header[2])
        mat = np.array([[float(v) for v in next(it).split()] for _ in range(rows)])
        if mat.shape != (rows, cols):
            raise ShapeMismatch(f"section {name} malformed")
        arrays[name] = mat
    params = RnnParams(arrays["w_xh"], arrays["w_hh"], arrays["b_h"].ravel(),
                       arrays["w_hy"], arrays["b_y"].ravel())
    if params.hidden_size != hidden or params.n_classes != n_classes:
        raise ShapeMismatch("checkpoint dimensions inconsistent")
    return SequenceClassifier(params, vocab)
