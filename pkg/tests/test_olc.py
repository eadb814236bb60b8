import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from dqrules.errors import ModelError
from dqrules.olc import (
    coexisting_pairs,
    dominators,
    exclusive_pairs,
    olc_from_dict,
    parse_olc,
    predecessors,
    reachable,
    serialize_olc,
    transition_graph,
    validate_olc,
)

from helpers import (
    fixture_paths,
    oracle_dominators,
    oracle_edges,
    oracle_reachable,
    random_olc_dict,
)


def _olc(**kw):
    doc = {"object": "O", "states": ["A", "B", "C"], "processes": []}
    doc.update(kw)
    return olc_from_dict(doc)


def _codes(model):
    return sorted(d.code for d in validate_olc(model))


@pytest.fixture
def order():
    return parse_olc(fixture_paths()["olc"].read_text())


def test_fixture_graph(order):
    g = transition_graph(order)
    assert set(g.edge_set()) == {
        ("Paid", "Packaged"),
        ("Packaged", "Shipped"),
        ("Shipped", "Closed"),
        ("Shipped", "Returned"),
        ("Paid", "Cancelled"),
    }
    assert all(e.leaving and e.kind == "process" for e in g.edges.values())
    assert predecessors(g, "Shipped") == {"Packaged"}
    assert reachable(g, "Paid") == {"Packaged", "Shipped", "Closed", "Returned", "Cancelled"}
    assert reachable(g, "Closed") == set()
    doms = dominators(g, order.initial_states())
    assert doms["Returned"] == {"Paid", "Packaged", "Shipped", "Returned"}
    assert doms["Cancelled"] == {"Paid", "Cancelled"}


def test_fixture_exclusive_pairs(order):
    pairs = exclusive_pairs(order, transition_graph(order))
    assert frozenset(("Closed", "Cancelled")) in pairs
    # siblings out of Shipped and out of Paid
    assert frozenset(("Closed", "Returned")) in pairs
    assert frozenset(("Packaged", "Cancelled")) in pairs
    assert frozenset(("Shipped", "Cancelled")) not in pairs


def test_loop_adds_back_edge():
    m = _olc(processes=[{"name": "p", "inputs": ["A"], "outputs": ["B"]}], loops=[["B", "A"]])
    g = transition_graph(m)
    assert g.edges[("B", "A")].kind == "loop"
    assert reachable(g, "A") == {"A", "B"}
    assert not validate_olc(m)


def test_retained_makes_edge_non_leaving():
    m = _olc(
        processes=[{"name": "p", "inputs": ["A"], "outputs": ["B", "C"]}],
        retained=[["B", "A"]],
    )
    g = transition_graph(m)
    assert not g.edges[("A", "B")].leaving
    assert g.edges[("A", "C")].leaving
    assert frozenset(("A", "B")) in coexisting_pairs(m, g)
    # non-leaving siblings are not exclusive
    assert frozenset(("B", "C")) not in exclusive_pairs(m, g)


def test_leaving_siblings_exclusive_unless_connected():
    m = _olc(
        processes=[
            {"name": "p", "inputs": ["A"], "outputs": ["B"]},
            {"name": "q", "inputs": ["A"], "outputs": ["C"]},
            {"name": "r", "inputs": ["B"], "outputs": ["C"]},
        ]
    )
    assert frozenset(("B", "C")) not in exclusive_pairs(m, transition_graph(m))


def test_default_initials_are_unproduced_states():
    m = _olc(processes=[{"name": "p", "inputs": ["A"], "outputs": ["B"]}])
    assert m.initial_states() == {"A", "C"}


def test_dominators_unreachable_gets_everything():
    m = _olc(processes=[{"name": "p", "inputs": ["A"], "outputs": ["B"]}], initial=["A"])
    doms = dominators(transition_graph(m), m.initial_states())
    assert doms["C"] == {"A", "B", "C"}
    with pytest.raises(ValueError):
        dominators(transition_graph(m), [])


def test_unknown_state_for_analysis():
    g = transition_graph(_olc())
    with pytest.raises(KeyError):
        predecessors(g, "Z")


@pytest.mark.parametrize(
    "kw, code",
    [
        ({"loops": [["A", "B"]]}, "loop-target-not-predecessor"),
        ({"retained": [["C", "A"]]}, "retained-not-predecessor"),
        ({"loops": [["A", "A"]]}, "self-pair"),
        ({"exclusive": [["A", "A"]]}, "self-pair"),
    ],
)
def test_validation_codes(kw, code):
    m = _olc(processes=[{"name": "p", "inputs": ["A"], "outputs": ["B"]}], **kw)
    assert code in _codes(m)


def test_no_initial_state():
    m = _olc(
        states=["A", "B"],
        processes=[{"name": "p", "inputs": ["A"], "outputs": ["B"]}, {"name": "q", "inputs": ["B"], "outputs": ["A"]}],
    )
    assert _codes(m) == ["no-initial-state"]


def test_retained_may_follow_a_loop():
    m = _olc(
        processes=[{"name": "p", "inputs": ["A"], "outputs": ["B"]}],
        loops=[["B", "A"]],
        retained=[["A", "B"]],
    )
    assert not validate_olc(m)
    assert not transition_graph(m).edges[("B", "A")].leaving


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"object": "O", "states": []}, "states"),
        ({"object": "O", "states": ["A", "A"]}, "states[1]"),
        ({"object": "O", "states": ["A"], "processes": [{"name": "p", "inputs": ["A"], "outputs": ["Z"]}]}, "processes[0].outputs[0]"),
        ({"object": "O", "states": ["A"], "processes": [{"name": "p", "inputs": [], "outputs": ["A"]}]}, "processes[0].inputs"),
        ({"object": "O", "states": ["A"], "colour": 1}, "$"),
        ({"object": "O", "states": ["A"], "initial": ["B"]}, "initial[0]"),
    ],
)
def test_parse_errors_carry_a_path(doc, where):
    with pytest.raises(ModelError) as info:
        olc_from_dict(doc)
    assert info.value.path == where


def test_parse_error_position():
    with pytest.raises(ModelError) as info:
        parse_olc('{"object": "O",\n  "states": [1, }')
    assert info.value.line == 2


def test_serialize_round_trip_fixture(order):
    assert parse_olc(serialize_olc(order)) == order


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_graph_matches_oracle(seed):
    doc = random_olc_dict(random.Random(seed))
    m = olc_from_dict(doc)
    g = transition_graph(m)
    edges = oracle_edges(doc)
    assert g.edge_set() == edges
    for s in m.states:
        assert predecessors(g, s) == {f for f, t in edges if t == s}
        assert reachable(g, s) == oracle_reachable(edges, s, list(m.states))
    inits = m.initial_states()
    if inits:
        assert dominators(g, inits) == oracle_dominators(edges, sorted(inits), list(m.states))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_round_trip_random(seed):
    m = olc_from_dict(random_olc_dict(random.Random(seed)))
    text = serialize_olc(m)
    assert parse_olc(text) == m
    assert serialize_olc(parse_olc(text)) == text
    json.loads(text)
