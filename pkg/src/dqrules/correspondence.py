"""Bindings between life-cycle states and schema elements.

Four binding kinds are supported: a dedicated ``table`` whose rows mark the
state, an ``attribute`` value on the identity table, a ``link`` (FK path from
some table to the identity table), and ``combined`` conjunctions of attribute
and link parts. For rule purposes a state's attribute parts and link parts
are pooled: its *link representation* is the conjunction of every link path
any of its bindings names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import Diagnostic, ModelError, check_keys, expect_str, expect_str_list, load_json_document
from .olc import OlcModel, TransitionGraph, coexisting_pairs, dominators
from .schema import DbSchema, LinkPath, coerce_literal, find_link_paths, hop_for

KINDS = ("table", "attribute", "link", "combined")


@dataclass(frozen=True)
class AttributePart:
    table: str
    attribute: str
    value: object  # JSON scalar


@dataclass(frozen=True)
class StateBinding:
    state: str
    kind: str
    attributes: tuple[AttributePart, ...] = ()
    links: tuple[LinkPath, ...] = ()
    table: str | None = None  # for kind == "table"


@dataclass(frozen=True)
class CorrespondenceMap:
    object_name: str
    identity_table: str
    identity_key: tuple[str, ...]
    bindings: tuple[StateBinding, ...] = ()
    unbound: frozenset[str] = field(default_factory=frozenset)

    def attribute_values(self, state: str) -> dict[tuple[str, str], object]:
        out: dict[tuple[str, str], object] = {}
        for b in self.bindings:
            if b.state == state:
                for a in b.attributes:
                    out.setdefault((a.table, a.attribute), a.value)
        return out

    def link_rep(self, state: str) -> tuple[LinkPath, ...]:
        paths: list[LinkPath] = []
        for b in self.bindings:
            if b.state == state:
                for p in b.links:
                    if p not in paths:
                        paths.append(p)
        return tuple(paths)

    def status_attributes(self) -> list[tuple[str, str]]:
        seen: list[tuple[str, str]] = []
        for b in self.bindings:
            for a in b.attributes:
                if (a.table, a.attribute) not in seen:
                    seen.append((a.table, a.attribute))
        return seen

    def bound_states(self) -> set[str]:
        return {b.state for b in self.bindings}


# --------------------------------------------------------------------------
# parsing


def parse_correspondence(document: str, schema: DbSchema, olc: OlcModel, *, max_hops: int = 3) -> CorrespondenceMap:
    raw = load_json_document(document, "correspondence document")
    return correspondence_from_dict(raw, schema, olc, max_hops=max_hops)


def _literal(schema: DbSchema, table: str, attribute: str, value, path: str):
    t = schema.table(table)
    col = t.column(attribute) if t else None
    if col is None:
        raise ModelError(f"unknown attribute {table}.{attribute}", path=path)
    if value is None or isinstance(value, (list, dict)):
        raise ModelError("attribute value must be a non-null scalar", path=path)
    try:
        coerce_literal(col.type, value)
    except ValueError as exc:
        raise ModelError(f"value incompatible with {col.type} column {table}.{attribute}: {exc}", path=path) from None
    return value


def _parse_path(raw, schema: DbSchema, identity: str, path: str, max_hops: int) -> LinkPath:
    if isinstance(raw, dict):
        # {"from": table} resolves to the unique FK chain to the identity table
        check_keys(raw, path, {"from"})
        source = expect_str(raw["from"], f"{path}.from")
        if schema.table(source) is None:
            raise ModelError(f"unknown table {source!r}", path=f"{path}.from")
        found = find_link_paths(schema, source, identity, max_hops)
        if len(found) != 1:
            raise ModelError(
                f"{len(found)} link paths from {source!r} to {identity!r} within {max_hops} hops; spell the path out",
                path=path,
            )
        return found[0]
    if not isinstance(raw, list) or not raw:
        raise ModelError("expected a non-empty list of hops", path=path)
    hops = []
    for i, rh in enumerate(raw):
        hw = f"{path}[{i}]"
        rh = check_keys(rh, hw, {"table", "fk"})
        table = expect_str(rh["table"], f"{hw}.table")
        if schema.table(table) is None:
            raise ModelError(f"unknown table {table!r}", path=f"{hw}.table")
        try:
            hop = hop_for(schema, table, tuple(expect_str_list(rh["fk"], f"{hw}.fk")))
        except KeyError as exc:
            raise ModelError(str(exc.args[0]), path=f"{hw}.fk") from None
        if hops and hops[-1].ref_table != hop.table:
            raise ModelError(f"hop does not continue from {hops[-1].ref_table!r}", path=hw)
        hops.append(hop)
    lp = LinkPath(tuple(hops))
    if lp.target_table != identity:
        raise ModelError(f"link path must end at identity table {identity!r}", path=path)
    return lp


def correspondence_from_dict(raw: object, schema: DbSchema, olc: OlcModel, *, max_hops: int = 3) -> CorrespondenceMap:
    doc = check_keys(raw, "$", {"object", "identity", "bindings"}, {"unbound"})
    obj = expect_str(doc["object"], "object")
    ident = check_keys(doc["identity"], "identity", {"table", "key"})
    id_table = expect_str(ident["table"], "identity.table")
    table = schema.table(id_table)
    if table is None:
        raise ModelError(f"unknown table {id_table!r}", path="identity.table")
    key = tuple(expect_str_list(ident["key"], "identity.key"))
    if key != tuple(table.primary_key):
        raise ModelError(f"identity key must be the primary key of {id_table!r}", path="identity.key")
    states = set(olc.states)
    unbound = expect_str_list(doc.get("unbound", []), "unbound")
    for i, s in enumerate(unbound):
        if s not in states:
            raise ModelError(f"unknown state {s!r}", path=f"unbound[{i}]")

    def attr_part(rp, path: str) -> AttributePart:
        rp = check_keys(rp, path, {"table", "attribute", "value"})
        t = expect_str(rp["table"], f"{path}.table")
        if schema.table(t) is None:
            raise ModelError(f"unknown table {t!r}", path=f"{path}.table")
        if t != id_table:
            raise ModelError(f"attribute bindings must be on identity table {id_table!r}", path=f"{path}.table")
        a = expect_str(rp["attribute"], f"{path}.attribute")
        return AttributePart(t, a, _literal(schema, t, a, rp["value"], f"{path}.value"))

    if not isinstance(doc["bindings"], list):
        raise ModelError("expected a list", path="bindings")
    bindings = []
    for i, rb in enumerate(doc["bindings"]):
        where = f"bindings[{i}]"
        if not isinstance(rb, dict):
            raise ModelError("expected an object", path=where)
        kind = rb.get("kind")
        if kind not in KINDS:
            raise ModelError(f"kind must be one of {', '.join(KINDS)}", path=f"{where}.kind")
        if kind == "table":
            rb = check_keys(rb, where, {"state", "kind", "table"}, {"fk"})
        elif kind == "attribute":
            rb = check_keys(rb, where, {"state", "kind", "table", "attribute", "value"})
        elif kind == "link":
            rb = check_keys(rb, where, {"state", "kind", "path"})
        else:
            rb = check_keys(rb, where, {"state", "kind", "parts"})
        state = expect_str(rb["state"], f"{where}.state")
        if state not in states:
            raise ModelError(f"unknown state {state!r}", path=f"{where}.state")

        if kind == "table":
            src = expect_str(rb["table"], f"{where}.table")
            st = schema.table(src)
            if st is None:
                raise ModelError(f"unknown table {src!r}", path=f"{where}.table")
            if "fk" in rb:
                try:
                    hop = hop_for(schema, src, tuple(expect_str_list(rb["fk"], f"{where}.fk")))
                except KeyError as exc:
                    raise ModelError(str(exc.args[0]), path=f"{where}.fk") from None
                if hop.ref_table != id_table:
                    raise ModelError(f"foreign key must reference {id_table!r}", path=f"{where}.fk")
            else:
                fks = [fk for fk in st.foreign_keys if fk.ref_table == id_table]
                if len(fks) != 1:
                    raise ModelError(
                        f"table {src!r} has {len(fks)} foreign keys to {id_table!r}; give \"fk\"", path=where
                    )
                hop = hop_for(schema, src, fks[0].columns)
            bindings.append(StateBinding(state, kind, links=(LinkPath((hop,)),), table=src))
        elif kind == "attribute":
            part = attr_part({k: rb[k] for k in ("table", "attribute", "value")}, where)
            bindings.append(StateBinding(state, kind, attributes=(part,)))
        elif kind == "link":
            lp = _parse_path(rb["path"], schema, id_table, f"{where}.path", max_hops)
            bindings.append(StateBinding(state, kind, links=(lp,)))
        else:
            parts = rb["parts"]
            if not isinstance(parts, list) or not parts:
                raise ModelError("combined binding needs a non-empty parts list", path=f"{where}.parts")
            attrs, links = [], []
            for j, rp in enumerate(parts):
                pw = f"{where}.parts[{j}]"
                if isinstance(rp, dict) and "path" in rp:
                    check_keys(rp, pw, {"path"})
                    links.append(_parse_path(rp["path"], schema, id_table, f"{pw}.path", max_hops))
                else:
                    attrs.append(attr_part(rp, pw))
            bindings.append(StateBinding(state, kind, attributes=tuple(attrs), links=tuple(links)))

    return CorrespondenceMap(obj, id_table, key, tuple(bindings), frozenset(unbound))


def _path_to_raw(lp: LinkPath) -> list[dict]:
    return [{"table": h.table, "fk": list(h.columns)} for h in lp.hops]


def correspondence_to_dict(cmap: CorrespondenceMap, olc: OlcModel | None = None) -> dict:
    doc: dict = {"object": cmap.object_name, "identity": {"table": cmap.identity_table, "key": list(cmap.identity_key)}}
    if cmap.unbound:
        doc["unbound"] = olc.ordered(cmap.unbound) if olc else sorted(cmap.unbound)
    out = []
    for b in cmap.bindings:
        rb: dict = {"state": b.state, "kind": b.kind}
        if b.kind == "table":
            rb["table"] = b.table
            rb["fk"] = list(b.links[0].hops[0].columns)
        elif b.kind == "attribute":
            a = b.attributes[0]
            rb.update(table=a.table, attribute=a.attribute, value=a.value)
        elif b.kind == "link":
            rb["path"] = _path_to_raw(b.links[0])
        else:
            rb["parts"] = [{"table": a.table, "attribute": a.attribute, "value": a.value} for a in b.attributes] + [
                {"path": _path_to_raw(lp)} for lp in b.links
            ]
        out.append(rb)
    doc["bindings"] = out
    return doc


def serialize_correspondence(cmap: CorrespondenceMap, olc: OlcModel | None = None) -> str:
    return json.dumps(correspondence_to_dict(cmap, olc), indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------
# validation


def validate_correspondence(cmap: CorrespondenceMap, olc: OlcModel, graph: TransitionGraph) -> list[Diagnostic]:
    """Consistency checks that the derived rules rely on for soundness."""
    diags: set[Diagnostic] = set()
    states = list(olc.states)

    # (a) one state per (table, attribute, value)
    owner: dict[tuple, str] = {}
    for b in cmap.bindings:
        for a in b.attributes:
            k = (a.table, a.attribute, json.dumps(a.value))
            prev = owner.get(k)
            if prev is not None and prev != b.state:
                diags.add(
                    Diagnostic(
                        "duplicate-value",
                        f"value {a.value!r} is bound to both {prev!r} and {b.state!r}",
                        f"{a.table}.{a.attribute}",
                    )
                )
            owner[k] = b.state
    for s in states:
        vals: dict[tuple[str, str], set] = {}
        for b in cmap.bindings:
            if b.state == s:
                for a in b.attributes:
                    vals.setdefault((a.table, a.attribute), set()).add(json.dumps(a.value))
        for (t, a), vs in vals.items():
            if len(vs) > 1:
                diags.add(Diagnostic("multiple-values", f"state {s!r} has {len(vs)} values", f"{t}.{a}"))

    # a status attribute has to say something about every state, or a walk through an
    # unbound state would produce value changes that are not edges of the graph
    for t, a in cmap.status_attributes():
        missing = [s for s in states if (t, a) not in cmap.attribute_values(s)]
        if missing:
            diags.add(
                Diagnostic(
                    "partial-status-attribute",
                    f"states without a value: {', '.join(missing)}",
                    f"{t}.{a}",
                )
            )

    # (b) coexistence on a single-valued attribute
    coexist = coexisting_pairs(olc, graph)
    for t, a in cmap.status_attributes():
        bound = [s for s in states if (t, a) in cmap.attribute_values(s)]
        for i, s1 in enumerate(bound):
            for s2 in bound[i + 1 :]:
                if frozenset((s1, s2)) in coexist:
                    diags.add(
                        Diagnostic(
                            "coexistence-conflict",
                            f"{s1!r} and {s2!r} can be held at the same time but share one attribute",
                            f"{t}.{a}",
                        )
                    )

    # (c) unbound states
    bound_states = cmap.bound_states()
    for s in states:
        if s not in bound_states and s not in cmap.unbound:
            diags.add(Diagnostic("unbound-state", "state has no binding and is not listed as unbound", s))

    # link representations
    initials = olc.initial_states()
    doms = dominators(graph, initials) if initials else {s: frozenset(states) for s in states}
    reps = {s: cmap.link_rep(s) for s in states}
    for s, rep in reps.items():
        for lp in rep:
            tables = [h.table for h in lp.hops]
            if cmap.identity_table in tables or len(set(tables)) != len(tables):
                diags.add(
                    Diagnostic("path-revisits-table", f"{lp} passes through a table twice or through the identity table", s)
                )
    for s, rep in reps.items():
        for t, other in reps.items():
            if s == t:
                continue
            for lp in rep:
                for lq in other:
                    if lp == lq and states.index(s) < states.index(t):
                        diags.add(Diagnostic("shared-link-path", f"{lp} represents both {s!r} and {t!r}", s))
                    elif lp != lq and len(lq.hops) < len(lp.hops) and lp.hops[-len(lq.hops) :] == lq.hops:
                        # rows of lp always imply rows of lq, so t must precede s on every path
                        if t not in doms[s]:
                            diags.add(
                                Diagnostic(
                                    "implied-link",
                                    f"{lp} implies the link of {t!r}, which does not dominate {s!r}",
                                    s,
                                )
                            )
    return sorted(diags)
