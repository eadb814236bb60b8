import copy
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from dqrules.correspondence import (
    correspondence_from_dict,
    parse_correspondence,
    serialize_correspondence,
    validate_correspondence,
)
from dqrules.errors import ModelError
from dqrules.olc import olc_from_dict, parse_olc, transition_graph
from dqrules.schema import parse_schema

from helpers import fixture_paths, random_model


@pytest.fixture
def model():
    p = fixture_paths()
    olc = parse_olc(p["olc"].read_text())
    schema = parse_schema(p["schema"].read_text())
    doc = json.loads(p["map"].read_text())
    return olc, schema, doc


def _diag_codes(doc, olc, schema):
    cmap = correspondence_from_dict(doc, schema, olc)
    return {d.code for d in validate_correspondence(cmap, olc, transition_graph(olc))}


def test_fixture_is_consistent(model):
    olc, schema, doc = model
    assert _diag_codes(doc, olc, schema) == set()


def test_link_representations(model):
    olc, schema, doc = model
    cmap = correspondence_from_dict(doc, schema, olc)
    assert [str(p) for p in cmap.link_rep("Returned")] == ["Return.DeliveryNo -> Delivery.OrderNo -> Order"]
    assert [str(p) for p in cmap.link_rep("Closed")] == ["X.OrderNo -> Order"]
    assert cmap.link_rep("Packaged") == ()
    assert cmap.attribute_values("Returned") == {("Order", "OrderStatus"): "Returned"}
    assert cmap.status_attributes() == [("Order", "OrderStatus")]


def test_from_shorthand_matches_explicit(model):
    olc, schema, doc = model
    cmap = correspondence_from_dict(doc, schema, olc)
    explicit = copy.deepcopy(doc)
    for b in explicit["bindings"]:
        if b["state"] == "Cancelled" and b["kind"] == "link":
            b["path"] = [{"table": "Y", "fk": ["OrderNo"]}]
    assert correspondence_from_dict(explicit, schema, olc) == cmap


def _mutate(doc, state, kind, **fields):
    doc = copy.deepcopy(doc)
    for b in doc["bindings"]:
        if b["state"] == state and b["kind"] == kind:
            b.update(fields)
    return doc


def test_duplicate_value(model):
    olc, schema, doc = model
    doc = _mutate(doc, "Packaged", "attribute", value="Paid")
    assert "duplicate-value" in _diag_codes(doc, olc, schema)


def test_multiple_values(model):
    olc, schema, doc = model
    doc = copy.deepcopy(doc)
    doc["bindings"].append({"state": "Paid", "kind": "attribute", "table": "Order", "attribute": "OrderStatus", "value": "P"})
    assert "multiple-values" in _diag_codes(doc, olc, schema)


def test_partial_status_attribute(model):
    olc, schema, doc = model
    doc = copy.deepcopy(doc)
    doc["bindings"] = [b for b in doc["bindings"] if not (b["state"] == "Packaged" and b["kind"] == "attribute")]
    doc["unbound"] = ["Packaged"]
    assert "partial-status-attribute" in _diag_codes(doc, olc, schema)


def test_unbound_state(model):
    olc, schema, doc = model
    doc = copy.deepcopy(doc)
    doc["bindings"] = [b for b in doc["bindings"] if b.get("attribute") != "OrderStatus" and b["kind"] != "combined"]
    assert "unbound-state" in _diag_codes(doc, olc, schema)
    doc["unbound"] = ["Packaged", "Returned"]
    assert _diag_codes(doc, olc, schema) == set()


def test_shared_link_path(model):
    olc, schema, doc = model
    doc = copy.deepcopy(doc)
    doc["bindings"].append({"state": "Packaged", "kind": "link", "path": {"from": "Receipt"}})
    assert "shared-link-path" in _diag_codes(doc, olc, schema)


def test_implied_link_needs_dominance(model):
    olc, schema, doc = model
    doc = copy.deepcopy(doc)
    # Delivery's link is implied by Return's, and Shipped dominates Returned: fine.
    assert "implied-link" not in _diag_codes(doc, olc, schema)
    # Cancelled does not dominate Returned.
    doc = _mutate(doc, "Cancelled", "link", path=[{"table": "Delivery", "fk": ["OrderNo"]}])
    doc = _mutate(doc, "Shipped", "link", path=[{"table": "Receipt", "fk": ["OrderNo"]}])
    doc["bindings"] = [b for b in doc["bindings"] if not (b["state"] == "Paid" and b["kind"] == "link")]
    assert "implied-link" in _diag_codes(doc, olc, schema)


def test_coexistence_conflict():
    olc = olc_from_dict(
        {
            "object": "O",
            "states": ["A", "B"],
            "initial": ["A"],
            "processes": [{"name": "p", "inputs": ["A"], "outputs": ["B"]}],
            "retained": [["B", "A"]],
        }
    )
    schema = parse_schema(
        json.dumps(
            {"tables": [{"name": "O", "columns": [{"name": "id", "type": "integer"}, {"name": "s", "type": "string"}], "primary_key": ["id"]}]}
        )
    )
    doc = {
        "object": "O",
        "identity": {"table": "O", "key": ["id"]},
        "bindings": [
            {"state": "A", "kind": "attribute", "table": "O", "attribute": "s", "value": "a"},
            {"state": "B", "kind": "attribute", "table": "O", "attribute": "s", "value": "b"},
        ],
    }
    assert "coexistence-conflict" in _diag_codes(doc, olc, schema)


@pytest.mark.parametrize(
    "change, where",
    [
        (lambda d: d["bindings"][0].update(state="Lost"), "bindings[0].state"),
        (lambda d: d["bindings"][0].update(attribute="Colour"), "bindings[0]"),
        (lambda d: d["bindings"][0].update(value=12), "bindings[0].value"),
        (lambda d: d["bindings"][1].update(path=[{"table": "Receipt", "fk": ["Nope"]}]), "bindings[1].path[0].fk"),
        (lambda d: d["bindings"][1].update(path=[{"table": "Return", "fk": ["DeliveryNo"]}]), "bindings[1].path"),
        (lambda d: d["bindings"][6].update(table="Nowhere"), "bindings[6].table"),
        (lambda d: d["identity"].update(key=["OrderDate"]), "identity.key"),
        (lambda d: d.update(colour="red"), "$"),
        (lambda d: d["bindings"][0].update(kind="magic"), "bindings[0].kind"),
    ],
)
def test_parse_errors(model, change, where):
    olc, schema, doc = model
    doc = copy.deepcopy(doc)
    change(doc)
    with pytest.raises(ModelError) as info:
        correspondence_from_dict(doc, schema, olc)
    assert info.value.path.startswith(where)


def test_attribute_on_other_table_rejected(model):
    olc, schema, doc = model
    doc = _mutate(doc, "Paid", "attribute", table="Receipt", attribute="Amount", value="1")
    with pytest.raises(ModelError):
        correspondence_from_dict(doc, schema, olc)


def test_fixture_round_trip(model):
    olc, schema, doc = model
    cmap = correspondence_from_dict(doc, schema, olc)
    text = serialize_correspondence(cmap, olc)
    assert parse_correspondence(text, schema, olc) == cmap
    assert serialize_correspondence(parse_correspondence(text, schema, olc), olc) == text


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_random_round_trip(seed):
    olc, schema, cmap, _ = random_model(random.Random(seed))
    text = serialize_correspondence(cmap, olc)
    back = parse_correspondence(text, schema, olc)
    assert back == cmap
    assert serialize_correspondence(back, olc) == text
