"""Stepwise generalization of filter criteria into a specificity hierarchy.

Each constraint owns a finite generalization chain ending in DROPPED:

    IP equals / CIDR      /32 -> /24 -> /16 -> /8 -> DROPPED
    port equals / range   exact -> covering port class -> DROPPED
    timestamp             exact window -> containing hour -> containing day -> DROPPED
    ordinal range         widen one scale-quarter per side until full -> DROPPED
    categorical, text     original -> DROPPED

A hierarchy advances one chain step per level, always on the not-yet-
exhausted constraint with the lowest (priority, attribute name). Level 0
is the original criteria; the last level accepts everything. Specificity
S runs strictly from 1 down to 0. Pure code, thread-safe.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from .errors import StepOutOfRange
from .dsl import Constraint, Criteria, Form, Kind, attribute_kind, attribute_scale


class _Dropped:
    """Terminal chain position: the constraint is gone entirely."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DROPPED"


DROPPED = _Dropped()

PORT_CLASSES = ((0, 1023), (1024, 49151), (49152, 65535))
_IP_COARSER = (24, 16, 8)


def _port_class_cover(lo: int, hi: int) -> tuple[int, int]:
    cover_lo = next(c[0] for c in PORT_CLASSES if c[0] <= lo <= c[1])
    cover_hi = next(c[1] for c in PORT_CLASSES if c[0] <= hi <= c[1])
    return cover_lo, cover_hi


def _time_cover(lo: int, hi: int, unit: int) -> tuple[int, int]:
    return (int(lo) // unit * unit, int(hi) // unit * unit + unit - 1)


def _chain_ip(c: Constraint) -> list:
    if c.form is Form.EQUALS:
        base = ipaddress.ip_network(f"{c.value}/32")
    else:
        base = ipaddress.ip_network(c.value)
    positions: list = [c]
    for p in _IP_COARSER:
        if p < base.prefixlen:
            net = ipaddress.ip_network(f"{base.network_address}/{p}", strict=False)
            positions.append(Constraint(c.attribute, Form.CIDR,
                                        net.with_prefixlen, c.priority))
    positions.append(DROPPED)
    return positions


def _chain_port(c: Constraint) -> list:
    lo, hi = (c.value, c.value) if c.form is Form.EQUALS else c.value
    cover = _port_class_cover(int(lo), int(hi))
    return [c, Constraint(c.attribute, Form.RANGE, cover, c.priority), DROPPED]


def _chain_time(c: Constraint) -> list:
    lo, hi = (c.value, c.value) if c.form is Form.EQUALS else c.value
    hour = Constraint(c.attribute, Form.RANGE, _time_cover(lo, hi, 3600), c.priority)
    day = Constraint(c.attribute, Form.RANGE, _time_cover(lo, hi, 86400), c.priority)
    return [c, hour, day, DROPPED]


def _chain_ordinal(c: Constraint) -> list:
    scale_lo, scale_hi = attribute_scale(c.attribute)
    quarter = (scale_hi - scale_lo) / 4
    lo, hi = (c.value, c.value) if c.form is Form.EQUALS else c.value
    positions: list = [c]
    k = 1
    while True:
        wide_lo = max(scale_lo, lo - k * quarter)
        wide_hi = min(scale_hi, hi + k * quarter)
        if wide_lo == scale_lo and wide_hi == scale_hi:
            positions.append(DROPPED)
            return positions
        positions.append(Constraint(c.attribute, Form.RANGE,
                                    (wide_lo, wide_hi), c.priority))
        k += 1


def chain_positions(c: Constraint) -> list:
    """All positions of c's generalization chain; index 0 is c, last is DROPPED."""
    kind = attribute_kind(c.attribute)
    if kind is Kind.IP:
        return _chain_ip(c)
    if kind is Kind.PORT:
        return _chain_port(c)
    if kind is Kind.TIME:
        return _chain_time(c)
    if kind is Kind.ORDINAL:
        return _chain_ordinal(c)
    return [c, DROPPED]  # categorical / text


def chain_length(c: Constraint) -> int:
    return len(chain_positions(c)) - 1


def generalize_constraint(c: Constraint, step: int):
    """Chain position `step` for c (0 = original); DROPPED at the end.

    Every step accepts a superset of the one before it.
    """
    positions = chain_positions(c)
    if step < 0 or step >= len(positions):
        raise StepOutOfRange(
            f"step {step} beyond chain of length {len(positions) - 1}")
    return positions[step]


@dataclass(frozen=True)
class Level:
    """One hierarchy level: a criteria variant plus its chain positions."""

    index: int
    criteria: Criteria
    positions: dict[str, int]  # attribute -> chain position
    specificity: float
    changed_attribute: str | None


@dataclass(frozen=True)
class RelaxationHierarchy:
    base: Criteria
    levels: tuple[Level, ...]

    def __len__(self) -> int:
        return len(self.levels)


def _specificity(positions: dict[str, int], lengths: dict[str, int]) -> float:
    if not lengths:
        return 1.0
    return sum(1 - positions[a] / lengths[a] for a in lengths) / len(lengths)


def build_hierarchy(criteria: Criteria) -> RelaxationHierarchy:
    """Deterministic level schedule for one criteria.

    Per level, the single not-fully-relaxed constraint with minimal
    (priority, attribute name) advances one chain position. With n
    constraints of chain lengths d_c there are 1 + sum(d_c) levels;
    S falls strictly from 1 to 0 (an empty base is the lone S=1 level).
    """
    chains = {c.attribute: chain_positions(c) for c in criteria.constraints}
    lengths = {a: len(ps) - 1 for a, ps in chains.items()}
    by_attr = {c.attribute: c for c in criteria.constraints}
    positions = {a: 0 for a in chains}

    def level(index: int, changed: str | None) -> Level:
        kept = tuple(chains[c.attribute][positions[c.attribute]]
                     for c in criteria.constraints
                     if chains[c.attribute][positions[c.attribute]] is not DROPPED)
        return Level(index, Criteria(kept, criteria.name),
                     dict(positions), _specificity(positions, lengths), changed)

    levels = [level(0, None)]
    while any(positions[a] < lengths[a] for a in positions):
        candidates = [a for a in positions if positions[a] < lengths[a]]
        chosen = min(candidates, key=lambda a: (by_attr[a].priority, a))
        positions[chosen] += 1
        levels.append(level(len(levels), chosen))
    return RelaxationHierarchy(criteria, tuple(levels))
