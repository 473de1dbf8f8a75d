"""Rank stored experiences against a live triage context.

An experience matches at the most specific hierarchy level whose criteria
(a) are implied, attribute by attribute, by the query's last-op criteria
and (b) still accept at least one of the focus events. The level's
specificity is the score, so exact situations beat relaxed ones.

Read-only over a store snapshot; concurrent retrievals are safe.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from .errors import BadValue, StoreUnavailable
from .dsl import Constraint, Criteria, FilterOp, Form, apply_filter, format_criteria
from .events import Event
from .relaxation import build_hierarchy
from .store import Experience, ExperienceStore


@dataclass(frozen=True)
class QueryContext:
    """What the analyst is looking at right now."""

    focus_events: tuple[Event, ...]
    last_op: FilterOp | None
    as_of: int = 0


@dataclass(frozen=True)
class RetrievalHit:
    experience_id: int
    level: int
    score: float
    suggested_op: FilterOp | None


def _as_range(c: Constraint) -> tuple[float, float] | None:
    if c.form is Form.RANGE:
        return c.value
    if c.form is Form.EQUALS and isinstance(c.value, (int, float)) \
            and not isinstance(c.value, bool):
        return (c.value, c.value)
    return None


def _as_network(c: Constraint):
    if c.form is Form.CIDR:
        return ipaddress.ip_network(c.value)
    if c.form is Form.EQUALS and isinstance(c.value, str):
        try:
            return ipaddress.ip_network(f"{c.value}/32")
        except ValueError:
            return None
    return None


def constraint_implies(narrow: Constraint, wide: Constraint) -> bool:
    """True when every event accepted by `narrow` is accepted by `wide`.

    Decided structurally per form pair; unknown pairings answer False
    (conservative).
    """
    if narrow.attribute != wide.attribute:
        return False
    nr, wr = _as_range(narrow), _as_range(wide)
    if nr is not None and wr is not None:
        return wr[0] <= nr[0] and nr[1] <= wr[1]
    nn, wn = _as_network(narrow), _as_network(wide)
    if nn is not None and wn is not None:
        return nn.subnet_of(wn)
    if narrow.form is Form.EQUALS and wide.form is Form.EQUALS:
        return narrow.value == wide.value
    if narrow.form is Form.EQUALS and wide.form is Form.IN_SET:
        return narrow.value in wide.value
    if narrow.form is Form.IN_SET and wide.form is Form.IN_SET:
        return set(narrow.value) <= set(wide.value)
    if narrow.form is Form.IN_SET and wide.form is Form.EQUALS:
        return set(narrow.value) == {wide.value}
    if narrow.form is Form.CONTAINS and wide.form is Form.CONTAINS:
        return wide.value in narrow.value
    return False


def _criteria_implied(query: Criteria, level: Criteria) -> bool:
    by_attr = {c.attribute: c for c in level.constraints}
    for qc in query.constraints:
        lc = by_attr.get(qc.attribute)
        if lc is not None and not constraint_implies(qc, lc):
            return False
    return True


def score_experience(exp: Experience, q: QueryContext) -> tuple[float, int | None]:
    """Most specific matching level and its specificity; (0.0, None) if none.

    A level matches when every query constraint implies the level's
    constraint on that attribute (attributes the level leaves
    unconstrained always pass) and the level still accepts a non-empty
    subset of the focus events.
    """
    hierarchy = build_hierarchy(exp.snapshot.criteria)
    query_criteria = q.last_op.criteria if q.last_op else Criteria()
    for level in hierarchy.levels:
        if not _criteria_implied(query_criteria, level.criteria):
            continue
        if not apply_filter(level.criteria, q.focus_events):
            continue
        return level.specificity, level.index
    return 0.0, None


def retrieve_topk(store: ExperienceStore, q: QueryContext, k: int,
                  model=None, rerank_weight: float = 0.0) -> list[RetrievalHit]:
    """Top-k hits with score > 0, by (score desc, recency desc, id asc).

    The optional model re-rank multiplies each score by
    (1 - w) + w * p_chain over the focus events the matched level accepts.
    The default weight 0 leaves the symbolic ranking untouched.
    """
    if store is None:
        raise StoreUnavailable("no experience store loaded")
    if k < 1:
        raise BadValue("k must be >= 1")
    hits = []
    for exp in store.all():
        score, level = score_experience(exp, q)
        if level is None or score <= 0.0:
            continue
        if model is not None and rerank_weight > 0.0:
            accepted = _accepted_at_level(exp, level, q)
            if accepted:
                p_chain = model.predict_proba(accepted)[1]
                score *= (1.0 - rerank_weight) + rerank_weight * p_chain
        hits.append((score, exp.recorded_at, exp.id or 0,
                     RetrievalHit(exp.id or 0, level, score,
                                  exp.suggested_next_op())))
    hits.sort(key=lambda h: (-h[0], -h[1], h[2]))
    return [h[3] for h in hits[:k]]


def _accepted_at_level(exp: Experience, level: int, q: QueryContext) -> list[Event]:
    criteria = build_hierarchy(exp.snapshot.criteria).levels[level].criteria
    accepted = apply_filter(criteria, q.focus_events)
    accepted.sort(key=lambda e: (e.t_detect, e.id))
    return accepted


def suggest_next_ops(hits: list[RetrievalHit], k: int) -> list[tuple[FilterOp, int, float]]:
    """Deduplicated follow-up ops: (op, support, best score).

    Structurally equal suggestions merge; ranking is best score desc,
    then support desc, then op text for determinism. Hits matched at
    terminal steps contribute nothing.
    """
    merged: dict[tuple, list] = {}
    for hit in hits:
        op = hit.suggested_op
        if op is None:
            continue
        entry = merged.setdefault(op.canonical(), [op, 0, 0.0])
        entry[1] += 1
        entry[2] = max(entry[2], hit.score)
    ranked = sorted(merged.values(),
                    key=lambda e: (-e[2], -e[1], format_criteria(e[0].criteria)))
    return [(op, support, best) for op, support, best in ranked[:k]]
