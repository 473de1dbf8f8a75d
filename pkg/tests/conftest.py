"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the code paths they check: the filter
oracle interprets constraints with basic Python operators and the
ipaddress module (the engine uses integer masks), the retrieval oracle
scores every experience and sorts, and the Petri oracle enumerates
markings recursively.
"""

from __future__ import annotations

import ipaddress
import random

import pytest

from soctriage.dsl import Constraint, Criteria, FilterOp, Form, OpKind
from soctriage.events import Event, Protocol, event_value
from soctriage.store import ContextSnapshot, Experience, Outcome, StepRecord
from soctriage.synth import GenConfig, default_templates, generate_stream


def make_event(**kw) -> Event:
    base = dict(
        t_occur=100, t_detect=120, event_type="Deny", attack_prior=2,
        sensor="sensor-1", protocol=Protocol.TCP, ip_src="10.1.2.3",
        port_src=40000, ip_dst="192.168.0.9", port_dst=443, severity=5,
        confidence=0.8, msg="probe", id="e-1",
    )
    base.update(kw)
    return Event(**base)


def seeded_events(seed: int, n_noise: int, n_chains: int = 0):
    cfg = GenConfig(seed=seed, n_noise=n_noise, n_chains=n_chains,
                    templates=default_templates())
    return generate_stream(cfg)


_EVENT_TYPES = ("Built", "Deny", "PortScan", "Exploit", "Exfil")
_SENSORS = ("sensor-0", "sensor-1", "sensor-2")


def random_constraint(rng: random.Random) -> Constraint:
    """One random well-typed constraint; covers every form."""
    pick = rng.randrange(8)
    priority = rng.randint(1, 4)
    if pick == 0:
        lo = rng.randint(0, 10)
        return Constraint("severity", Form.RANGE, (lo, rng.randint(lo, 10)), priority)
    if pick == 1:
        return Constraint("protocol", Form.EQUALS,
                          rng.choice(["TCP", "UDP", "ICMP", "OTHER"]), priority)
    if pick == 2:
        prefix = rng.choice([8, 16, 24, 32])
        ip = f"10.{rng.randrange(4)}.{rng.randrange(4)}.{rng.randrange(1, 5)}"
        return Constraint("ip_src", Form.CIDR, f"{ip}/{prefix}", priority)
    if pick == 3:
        members = rng.sample(_EVENT_TYPES, rng.randint(1, 3))
        return Constraint("event_type", Form.IN_SET, tuple(sorted(members)), priority)
    if pick == 4:
        lo = rng.randint(0, 65535)
        return Constraint("port_dst", Form.RANGE, (lo, rng.randint(lo, 65535)), priority)
    if pick == 5:
        lo = round(rng.uniform(0, 1), 2)
        hi = round(rng.uniform(lo, 1), 2)
        return Constraint("confidence", Form.RANGE, (lo, hi), priority)
    if pick == 6:
        return Constraint("sensor", Form.EQUALS, rng.choice(_SENSORS), priority)
    return Constraint("msg", Form.CONTAINS, rng.choice(["scan", "->", "10."]), priority)


def random_criteria(rng: random.Random, max_constraints: int = 4) -> Criteria:
    constraints: dict[str, Constraint] = {}
    for _ in range(rng.randint(0, max_constraints)):
        c = random_constraint(rng)
        constraints.setdefault(c.attribute, c)
    return Criteria(tuple(constraints.values()))


# -- independent filter oracle -------------------------------------------------

def oracle_matches(c: Constraint, e: Event) -> bool:
    """Naive per-constraint check: plain operators + ipaddress membership."""
    v = event_value(e, c.attribute)
    if c.form is Form.EQUALS:
        return v == c.value
    if c.form is Form.IN_SET:
        return v in set(c.value)
    if c.form is Form.RANGE:
        return c.value[0] <= v <= c.value[1]
    if c.form is Form.CIDR:
        return ipaddress.ip_address(v) in ipaddress.ip_network(c.value)
    if c.form is Form.CONTAINS:
        return c.value in v
    raise AssertionError(f"unhandled form {c.form}")


def oracle_filter(criteria: Criteria, events) -> list[Event]:
    out = []
    for e in events:
        if all(oracle_matches(c, e) for c in criteria.constraints):
            out.append(e)
    return out


# -- experience / retrieval corpus ---------------------------------------------

def make_experience(criteria: Criteria, recorded_at: int, analyst: str = "ana",
                    outcome: Outcome = Outcome.ESCALATED,
                    next_criteria: Criteria | None = None,
                    exp_id: int | None = None) -> Experience:
    steps = [StepRecord(FilterOp(OpKind.SELECT, criteria, op_id="s0",
                                 created_at=recorded_at - 10), 3, ("x",))]
    if next_criteria is not None:
        steps.append(StepRecord(FilterOp(OpKind.SELECT, next_criteria, op_id="s1",
                                         created_at=recorded_at - 5), 2, ()))
    return Experience(
        analyst=analyst,
        steps=tuple(steps),
        snapshot=ContextSnapshot(criteria, recorded_at - 600, recorded_at,
                                 trigger_step=0),
        outcome=outcome,
        recorded_at=recorded_at,
        id=exp_id,
    )


def oracle_rank(store_entries, score_fn, k: int):
    """Brute-force score-all-then-sort ranking oracle."""
    scored = []
    for exp in store_entries:
        score, level = score_fn(exp)
        if level is not None and score > 0:
            scored.append((score, exp.recorded_at, exp.id, level))
    scored.sort(key=lambda t: (-t[0], -t[1], t[2]))
    return scored[:k]


# -- desk-scale model harness (shared by adversarial + acceptance) --------------

DESK_SEED = 20240515


@pytest.fixture(scope="session")
def desk_stream():
    # 40 chains (~104 chain events) and 480 noise events -> with noise
    # chunks of 3 that is 40 chain vs 160 noise sequences, a 4:1 imbalance
    return seeded_events(DESK_SEED, n_noise=480, n_chains=40)


@pytest.fixture(scope="session")
def desk_dataset(desk_stream):
    from soctriage.rnn import build_sequence_dataset
    events, labels = desk_stream
    return build_sequence_dataset(events, labels, noise_chunk=3)


@pytest.fixture(scope="session")
def desk_model(desk_dataset):
    from soctriage import rnn
    vocab = rnn.vocabulary_from_sequences(seq for seq, _ in desk_dataset)
    clf = rnn.init_classifier(vocab, hidden=16, seed=DESK_SEED)
    cfg = rnn.TrainConfig(rate=0.1, epochs=60, seed=DESK_SEED)
    clf, curve = rnn.train_classifier(clf, desk_dataset, cfg)
    return clf


@pytest.fixture(scope="session")
def benign_pool(desk_stream):
    events, labels = desk_stream
    noise = [e for e in events if labels[e.id] == "noise"]
    return tuple(noise[:20])
