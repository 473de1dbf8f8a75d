"""Evasion crafting, adversarial training, surrogate extraction, transfer.

The evasion primitive is insertion of real benign events: the original
events survive in their original relative order (an attacker can add
cover traffic but cannot rewrite history), and inserted copies get
timestamps consistent with their position so detection order stays
monotone. Crafting is greedy: each round evaluates every
(candidate, position) pair and applies the single insertion that lowers
the chain-relevant probability the most.

Grid cells are independent, so evaluation could fan out; the accepted
step is the deterministic argmin either way, and the public calls are
synchronous.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .errors import (BadValue, EmptyPool, LayoutMismatch, NotInitiallyDetected,
                     ZeroBudget)
from .events import Event
from .rnn import (CHAIN, NOISE, SequenceClassifier, TrainConfig, Vocabulary,
                  init_classifier, train_classifier)


@dataclass(frozen=True)
class AttackBudget:
    """Insertion budget and the benign candidate pool.

    With preserve_pool_order the pool is used exactly as given; otherwise
    it is canonicalized by event id so callers with unordered sources
    still get deterministic attacks.
    """

    max_insertions: int
    pool: tuple[Event, ...]
    preserve_pool_order: bool = True

    def __post_init__(self):
        if self.max_insertions < 0:
            raise BadValue("max_insertions must be >= 0")

    def ordered_pool(self) -> tuple[Event, ...]:
        if self.preserve_pool_order:
            return self.pool
        return tuple(sorted(self.pool, key=lambda e: e.id))


@dataclass(frozen=True)
class EvasionResult:
    sequence: tuple[Event, ...]
    flipped: bool
    insertions: int
    p_trace: tuple[float, ...]  # chain probability after each accepted step

    @property
    def p_before(self) -> float:
        return self.p_trace[0]

    @property
    def p_after(self) -> float:
        return self.p_trace[-1]


def _fit_timestamps(candidate: Event, before: Event | None, after: Event | None,
                    serial: int) -> Event:
    """Copy of a pool event whose detect time fits between its neighbors."""
    if before is None and after is None:
        t = candidate.t_detect
    elif before is None:
        t = after.t_detect
    elif after is None:
        t = before.t_detect
    else:
        t = (before.t_detect + after.t_detect) // 2
    lag = candidate.t_detect - candidate.t_occur
    return replace(candidate, id=f"{candidate.id}~adv{serial}",
                   t_detect=t, t_occur=max(0, t - lag))


def craft_evasion(clf: SequenceClassifier, events: Sequence[Event],
                  budget: AttackBudget) -> EvasionResult:
    """Greedy insertion attack against one chain-relevant sequence.

    Stops on class flip, on budget exhaustion, or as soon as no single
    insertion lowers the current chain probability (confidence along
    accepted steps never increases). Ties break to the earliest position,
    then pool order. Raises NotInitiallyDetected when the model already
    calls the sequence noise.
    """
    current = list(events)
    p_chain = clf.predict_proba(current)[CHAIN]
    if p_chain <= 0.5:
        raise NotInitiallyDetected(f"chain probability {p_chain:.4f} <= 0.5")
    pool = budget.ordered_pool()
    trace = [p_chain]
    inserted = 0
    flipped = False
    while inserted < budget.max_insertions and pool:
        best = None  # (p, position, pool index, sequence)
        for pos in range(len(current) + 1):
            before = current[pos - 1] if pos > 0 else None
            after = current[pos] if pos < len(current) else None
            for ci, candidate in enumerate(pool):
                fitted = _fit_timestamps(candidate, before, after, inserted)
                trial = current[:pos] + [fitted] + current[pos:]
                p = clf.predict_proba(trial)[CHAIN]
                if best is None or p < best[0]:
                    best = (p, pos, ci, trial)
        if best is None or best[0] > p_chain:
            break
        p_chain = best[0]
        current = best[3]
        inserted += 1
        trace.append(p_chain)
        if p_chain <= 0.5:
            flipped = True
            break
    return EvasionResult(tuple(current), flipped, inserted, tuple(trace))


@dataclass(frozen=True)
class AttackConfig:
    budget: AttackBudget
    sample_size: int = 20
    seed: int = 0


def adversarial_train(clf: SequenceClassifier,
                      dataset: list[tuple[list[Event], int]],
                      attack: AttackConfig, rounds: int,
                      train_cfg: TrainConfig) -> tuple[SequenceClassifier, list[float]]:
    """Harden by folding crafted evasions (true labels kept) into training.

    Each round attacks a seeded sample of currently detected chain
    sequences and appends the adversarial variants labeled CHAIN; the
    crafted set accumulates across rounds, then train_epochs runs on the
    clean data plus everything crafted so far. Returns the final model
    and the per-round evasion success rate against the model as it stood.
    """
    log: list[float] = []
    crafted: list[tuple[list[Event], int]] = []
    for r in range(rounds):
        rng = random.Random(f"{attack.seed}:{r}")
        detected = [seq for seq, label in dataset
                    if label == CHAIN and clf.classify(seq) == CHAIN]
        sample = detected if len(detected) <= attack.sample_size \
            else rng.sample(detected, attack.sample_size)
        flips = 0
        for seq in sample:
            result = craft_evasion(clf, seq, attack.budget)
            crafted.append((list(result.sequence), CHAIN))
            flips += 1 if result.flipped else 0
        log.append(flips / len(sample) if sample else 0.0)
        clf, _ = train_classifier(clf, dataset + crafted, train_cfg)
    return clf, log


@dataclass(frozen=True)
class SurrogateConfig:
    hidden: int = 12
    seed: int = 7
    train: TrainConfig = TrainConfig(rate=0.1, epochs=60, seed=7)
    vocab: Vocabulary | None = None  # None: built from the queried items


def train_surrogate(oracle: Callable[[list[Event]], int],
                    pool: list[list[Event]], query_budget: int,
                    cfg: SurrogateConfig) -> SequenceClassifier:
    """Extract a model from label queries alone.

    Spends exactly query_budget oracle calls on a seeded shuffle of the
    pool, then trains a freshly initialized model (its own size and
    seed) on the answers. The oracle is a black-box label function, so
    target parameters are unreachable by construction.
    """
    if not pool:
        raise EmptyPool("no unlabeled sequences to query")
    if query_budget < 1:
        raise ZeroBudget("query budget must be >= 1")
    if query_budget > len(pool):
        raise EmptyPool(f"pool of {len(pool)} smaller than budget {query_budget}")
    order = list(range(len(pool)))
    random.Random(cfg.seed).shuffle(order)
    chosen = order[:query_budget]
    labeled = [(pool[i], oracle(pool[i])) for i in chosen]
    vocab = cfg.vocab
    if vocab is None:
        vocab = Vocabulary().extend(
            e.event_type for seq, _ in labeled for e in seq)
    surrogate = init_classifier(vocab, cfg.hidden, cfg.seed)
    surrogate, _ = train_classifier(surrogate, labeled, cfg.train)
    return surrogate


@dataclass(frozen=True)
class TransferReport:
    surrogate_agreement: float
    evasion_success: float   # on the surrogate
    transfer_rate: float     # surrogate-successful evasions that flip the target
    query_count: int         # target-model evaluations spent on the measurement
    empty_denominator: bool  # no surrogate evasion succeeded; rate pinned to 0

    def __post_init__(self):
        for name in ("surrogate_agreement", "evasion_success", "transfer_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise BadValue(f"{name} outside [0, 1]")


def evaluate_transfer(target: SequenceClassifier, surrogate: SequenceClassifier,
                      test_sequences: list[list[Event]],
                      budget: AttackBudget) -> TransferReport:
    """Craft evasions against the surrogate only; measure carry-over.

    A transfer means the target detected the original and no longer
    detects the adversarial variant. Fully deterministic given its
    inputs.
    """
    if target.vocab != surrogate.vocab:
        raise LayoutMismatch("models use different vocabulary tables")
    if not test_sequences:
        raise BadValue("no test sequences")
    agree = 0
    queries = 0
    successes: list[tuple[list[Event], tuple[Event, ...]]] = []
    detected = 0
    for seq in test_sequences:
        t_label = target.classify(seq)
        queries += 1
        s_label = surrogate.classify(seq)
        agree += 1 if t_label == s_label else 0
        if s_label != CHAIN:
            continue
        detected += 1
        result = craft_evasion(surrogate, seq, budget)
        if result.flipped:
            successes.append((seq, result.sequence))
    transferred = 0
    for original, adversarial in successes:
        queries += 2
        if target.classify(list(original)) == CHAIN \
                and target.classify(list(adversarial)) == NOISE:
            transferred += 1
    return TransferReport(
        surrogate_agreement=agree / len(test_sequences),
        evasion_success=len(successes) / detected if detected else 0.0,
        transfer_rate=transferred / len(successes) if successes else 0.0,
        query_count=queries,
        empty_denominator=not successes,
    )
