"""Generalization chains and hierarchy construction."""

import random

import pytest

from soctriage.errors import StepOutOfRange
from soctriage.dsl import Constraint, Criteria, Form, apply_filter, parse_criteria
from soctriage.relaxation import (DROPPED, build_hierarchy, chain_length,
                                  chain_positions, generalize_constraint)
from conftest import random_constraint, seeded_events


def test_ip_chain_shortens_prefixes():
    c = Constraint("ip_src", Form.CIDR, "10.1.2.3/32")
    assert generalize_constraint(c, 1) == Constraint("ip_src", Form.CIDR, "10.1.2.0/24")
    assert generalize_constraint(c, 2) == Constraint("ip_src", Form.CIDR, "10.1.0.0/16")
    assert generalize_constraint(c, 3) == Constraint("ip_src", Form.CIDR, "10.0.0.0/8")
    assert generalize_constraint(c, 4) is DROPPED
    assert chain_length(c) == 4


def test_ip_equals_behaves_as_host_prefix():
    c = Constraint("ip_dst", Form.EQUALS, "192.168.7.9")
    assert generalize_constraint(c, 1) == Constraint("ip_dst", Form.CIDR, "192.168.7.0/24")
    assert chain_length(c) == 4


def test_mid_prefix_starts_at_next_coarser():
    c = Constraint("ip_src", Form.CIDR, "10.1.0.0/20")
    assert [x if x is DROPPED else x.value for x in chain_positions(c)] == \
        ["10.1.0.0/20", "10.1.0.0/16", "10.0.0.0/8", DROPPED]


def test_categorical_drops_immediately():
    c = Constraint("event_type", Form.EQUALS, "Deny")
    assert generalize_constraint(c, 1) is DROPPED
    assert chain_length(c) == 1


def test_port_chain_goes_through_class():
    c = Constraint("port_dst", Form.EQUALS, 80)
    assert generalize_constraint(c, 1) == Constraint("port_dst", Form.RANGE, (0, 1023))
    assert generalize_constraint(c, 2) is DROPPED
    spanning = Constraint("port_src", Form.RANGE, (80, 2000))
    assert generalize_constraint(spanning, 1) == \
        Constraint("port_src", Form.RANGE, (0, 49151))


def test_time_chain_hour_then_day():
    c = Constraint("t_detect", Form.RANGE, (7300, 7400))
    hour = generalize_constraint(c, 1)
    day = generalize_constraint(c, 2)
    assert hour.value == (7200, 10799)
    assert day.value == (0, 86399)
    assert generalize_constraint(c, 3) is DROPPED


def test_ordinal_widens_by_scale_quarters():
    c = Constraint("severity", Form.RANGE, (2, 3))
    steps = chain_positions(c)
    assert steps[1].value == (0, 5.5)
    assert steps[2].value == (0, 8.0)
    assert steps[3] is DROPPED


def test_step_out_of_range():
    c = Constraint("event_type", Form.EQUALS, "Deny")
    with pytest.raises(StepOutOfRange):
        generalize_constraint(c, 2)


def test_chain_steps_accept_supersets_on_seeded_corpus():
    events, _ = seeded_events(21, n_noise=800, n_chains=20)
    rng = random.Random(77)
    for _ in range(200):
        c = random_constraint(rng)
        accepted_prev = None
        for step in range(chain_length(c) + 1):
            variant = generalize_constraint(c, step)
            if variant is DROPPED:
                accepted = {e.id for e in events}
            else:
                accepted = {e.id for e in apply_filter(Criteria((variant,)), events)}
            if accepted_prev is not None:
                assert accepted_prev <= accepted, (c, step)
            accepted_prev = accepted
        assert accepted_prev == {e.id for e in events}


# -- hierarchy -----------------------------------------------------------------

def test_three_singleton_chains_give_four_levels():
    criteria = parse_criteria(
        "event_type == Deny @p1 AND sensor == sensor-1 @p2 AND "
        'msg contains "x" @p3')
    h = build_hierarchy(criteria)
    assert len(h.levels) == 4
    assert h.levels[1].changed_attribute == "event_type"
    assert h.levels[1].criteria.constraint_for("event_type") is None
    assert h.levels[2].changed_attribute == "sensor"
    assert h.levels[3].criteria == Criteria()


def test_empty_criteria_single_full_level():
    h = build_hierarchy(Criteria())
    assert len(h.levels) == 1
    assert h.levels[0].specificity == 1.0


def test_hand_enumerated_seven_step_schedule():
    criteria = parse_criteria("ip_src == 10.1.2.3 @p1 AND severity in 2..3 @p2")
    h = build_hierarchy(criteria)
    assert len(h.levels) == 8  # base + sum of chain lengths 4 + 3
    expected_changes = [None, "ip_src", "ip_src", "ip_src", "ip_src",
                        "severity", "severity", "severity"]
    assert [l.changed_attribute for l in h.levels] == expected_changes
    expected_s = [1.0, 0.875, 0.75, 0.625, 0.5, 1 / 3, 1 / 6, 0.0]
    for level, want in zip(h.levels, expected_s):
        assert level.specificity == pytest.approx(want)
    ip_values = [l.criteria.constraint_for("ip_src") for l in h.levels[:5]]
    assert [c.value for c in ip_values[1:4]] == \
        ["10.1.2.0/24", "10.1.0.0/16", "10.0.0.0/8"]
    assert h.levels[4].criteria.constraint_for("ip_src") is None


def test_specificity_strictly_decreasing_and_bounded():
    rng = random.Random(55)
    for _ in range(100):
        criteria = Criteria(tuple({c.attribute: c for c in
                                   (random_constraint(rng) for _ in range(3))}.values()))
        h = build_hierarchy(criteria)
        values = [l.specificity for l in h.levels]
        assert values[0] == 1.0
        assert values[-1] == pytest.approx(0.0)
        assert all(a > b for a, b in zip(values, values[1:]))
        assert all(0.0 <= v <= 1.0 for v in values)


def test_equal_criteria_identical_hierarchies():
    criteria = parse_criteria("severity >= 7 AND protocol == TCP @p2")
    assert build_hierarchy(criteria) == build_hierarchy(criteria)


def test_monotone_acceptance_over_full_hierarchies():
    events, _ = seeded_events(23, n_noise=500, n_chains=15)
    rng = random.Random(42)
    for _ in range(40):
        criteria = Criteria(tuple({c.attribute: c for c in
                                   (random_constraint(rng) for _ in range(3))}.values()))
        h = build_hierarchy(criteria)
        prev = None
        for level in h.levels:
            cur = {e.id for e in apply_filter(level.criteria, events)}
            if prev is not None:
                assert prev <= cur
            prev = cur
        assert prev == {e.id for e in events}
