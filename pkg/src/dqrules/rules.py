"""Derivation of dynamic integrity rules and the rule repository.

Each template produces one rule family:

1. ``Domain``        status values belong to the life-cycle states
2. ``Transition``    status changes follow the transition graph
3. ``StatusLink``    status values agree with link establishments
4. ``LinkOrder``     links appear in the order states are entered
5. ``ExclusiveLink`` links of exclusive states never coexist

Payloads are plain JSON-compatible dicts, so a rule's identity is a digest
of ``(variant, payload)`` and the repository file is a direct dump.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .correspondence import CorrespondenceMap, validate_correspondence
from .errors import DQError, Diagnostic, ModelError, check_keys, load_json_document
from .olc import OlcModel, TransitionGraph, dominators, exclusive_pairs, reachable, transition_graph, validate_olc
from .schema import DbSchema, Hop, LinkPath, validate_schema

VARIANTS = {1: "Domain", 2: "Transition", 3: "StatusLink", 4: "LinkOrder", 5: "ExclusiveLink"}
TEMPLATE_OF = {v: k for k, v in VARIANTS.items()}


class DerivationError(DQError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class IntegrityRule:
    id: str
    template: int
    variant: str
    payload: dict = field(hash=False, compare=True)

    @classmethod
    def make(cls, variant: str, payload: dict) -> "IntegrityRule":
        return cls(rule_id(variant, payload), TEMPLATE_OF[variant], variant, payload)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[IntegrityRule, ...]
    provenance: dict = field(default_factory=dict, hash=False)

    def by_id(self) -> dict[str, IntegrityRule]:
        return {r.id: r for r in self.rules}


def rule_id(variant: str, payload: dict) -> str:
    blob = json.dumps([variant, payload], sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return f"R{TEMPLATE_OF[variant]}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}"


def sort_rules(rules: Iterable[IntegrityRule]) -> tuple[IntegrityRule, ...]:
    unique = {r.id: r for r in rules}
    return tuple(sorted(unique.values(), key=lambda r: (r.template, r.id)))


def _paths_payload(paths: Iterable[LinkPath]) -> list[list[dict]]:
    return [[h.to_dict() for h in lp.hops] for lp in paths]


def paths_from_payload(raw: list[list[dict]]) -> list[LinkPath]:
    return [LinkPath(tuple(Hop.from_dict(h) for h in lp)) for lp in raw]


def _ordered(states: Iterable[str], order: Iterable[str] | None) -> list[str]:
    states = list(dict.fromkeys(states))
    if order is None:
        return states
    index = {s: i for i, s in enumerate(order)}
    return sorted(states, key=lambda s: (index.get(s, len(index)), s))


def _bound(cmap: CorrespondenceMap, attr: tuple[str, str], order: Iterable[str] | None) -> list[tuple[str, object]]:
    """(state, value) pairs bound to ``attr``, in state order."""
    states = _ordered((b.state for b in cmap.bindings), order)
    out = []
    for s in states:
        vals = cmap.attribute_values(s)
        if attr in vals:
            out.append((s, vals[attr]))
    return out


def _base(cmap: CorrespondenceMap) -> dict:
    return {"table": cmap.identity_table, "key": list(cmap.identity_key)}


# --------------------------------------------------------------------------
# derivations


def derive_domain_rules(cmap: CorrespondenceMap, order: Iterable[str] | None = None) -> list[IntegrityRule]:
    order = list(order) if order is not None else None
    rules = []
    for attr in cmap.status_attributes():
        values = [v for _, v in _bound(cmap, attr, order)]
        rules.append(IntegrityRule.make("Domain", {**_base(cmap), "attribute": attr[1], "values": values}))
    return rules


def derive_transition_rules(
    cmap: CorrespondenceMap, graph: TransitionGraph, initials: Iterable[str]
) -> list[IntegrityRule]:
    initials = set(initials)
    rules = []
    for attr in cmap.status_attributes():
        bound = _bound(cmap, attr, graph.nodes)
        v = dict(bound)
        pairs = [[v[s], v[t]] for s, _ in bound for t, _ in bound if (s, t) in graph.edges]
        payload = {
            **_base(cmap),
            "attribute": attr[1],
            "values": [val for _, val in bound],
            "pairs": pairs,
            "initial": [val for s, val in bound if s in initials],
        }
        rules.append(IntegrityRule.make("Transition", payload))
    return rules


def derive_status_link_rules(cmap: CorrespondenceMap, graph: TransitionGraph) -> list[IntegrityRule]:
    rules = []
    for attr in cmap.status_attributes():
        bound = _bound(cmap, attr, graph.nodes)
        v = dict(bound)
        for s, value in bound:
            rep = cmap.link_rep(s)
            if not rep:
                continue
            later = reachable(graph, s)
            allowed = [val for t, val in bound if t == s or t in later]
            payload = {
                **_base(cmap),
                "state": s,
                "attribute": attr[1],
                "value": v[s],
                "paths": _paths_payload(rep),
                "values": [val for _, val in bound],
                "allowed": allowed,
            }
            rules.append(IntegrityRule.make("StatusLink", payload))
    return rules


def derive_link_order_rules(
    cmap: CorrespondenceMap,
    doms: dict[str, frozenset[str]],
    live: Iterable[str] | None = None,
) -> list[IntegrityRule]:
    """One rule per link-bound state and each nearest link-bound dominator.

    ``live`` limits the later state to those reachable from an initial
    state; the dominator convention for unreachable states is meaningless
    for ordering.
    """
    order = list(doms)
    linked = [s for s in order if cmap.link_rep(s)]
    live = set(order if live is None else live)
    rules = []
    for s2 in linked:
        if s2 not in live:
            continue
        earlier = [s1 for s1 in linked if s1 != s2 and s1 in doms[s2]]
        for s1 in earlier:
            implied = any(sm not in (s1, s2) and s1 in doms[sm] and sm in doms[s2] for sm in earlier)
            if implied:
                continue
            payload = {
                **_base(cmap),
                "earlier_state": s1,
                "later_state": s2,
                "earlier": _paths_payload(cmap.link_rep(s1)),
                "later": _paths_payload(cmap.link_rep(s2)),
            }
            rules.append(IntegrityRule.make("LinkOrder", payload))
    return rules


def derive_exclusive_rules(
    cmap: CorrespondenceMap, pairs: Iterable[frozenset[str]], order: Iterable[str] | None = None
) -> list[IntegrityRule]:
    order = list(order) if order is not None else None
    rules = []
    for pair in pairs:
        a, b = _ordered(pair, order)
        rep_a, rep_b = cmap.link_rep(a), cmap.link_rep(b)
        if not rep_a or not rep_b:
            continue
        payload = {**_base(cmap), "states": [a, b], "paths_a": _paths_payload(rep_a), "paths_b": _paths_payload(rep_b)}
        rules.append(IntegrityRule.make("ExclusiveLink", payload))
    return rules


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def derive_all(
    olc: OlcModel,
    schema: DbSchema,
    cmap: CorrespondenceMap,
    *,
    provenance: dict | None = None,
) -> RuleSet:
    diags = validate_olc(olc) + validate_schema(schema)
    if diags:
        raise DerivationError(diags)
    graph = transition_graph(olc)
    diags = validate_correspondence(cmap, olc, graph)
    if diags:
        raise DerivationError(diags)
    initials = olc.initial_states()
    doms = dominators(graph, initials)
    live = set(initials)
    for s in initials:
        live |= reachable(graph, s)
    rules: list[IntegrityRule] = []
    rules += derive_domain_rules(cmap, olc.states)
    rules += derive_transition_rules(cmap, graph, initials)
    rules += derive_status_link_rules(cmap, graph)
    rules += derive_link_order_rules(cmap, doms, live)
    rules += derive_exclusive_rules(cmap, exclusive_pairs(olc, graph), olc.states)
    prov = dict(provenance or {})
    prov.setdefault("derived_at", _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat())
    return RuleSet(sort_rules(rules), prov)


# --------------------------------------------------------------------------
# rendering


def _lit(value) -> str:
    return json.dumps(value, ensure_ascii=False)


def _tuple(values: Iterable) -> str:
    return "(" + ", ".join(_lit(v) for v in values) + ")"


def _alias_map(paths: list[LinkPath], identity: str) -> dict[str, str]:
    aliases = {identity: identity.lower()}
    used = {identity.lower()}
    for lp in paths:
        for h in lp.hops:
            if h.table in aliases:
                continue
            base = h.table.lower()
            alias, n = base, 2
            while alias in used:
                alias, n = f"{base}{n}", n + 1
            aliases[h.table] = alias
            used.add(alias)
    return aliases


def _conds(lp: LinkPath, aliases: dict[str, str]) -> list[str]:
    return [
        f"{aliases[h.table]}.{c} = {aliases[h.ref_table]}.{rc}" for h in lp.hops for c, rc in zip(h.columns, h.ref_columns)
    ]


def _exists(lp: LinkPath, aliases: dict[str, str]) -> str:
    names = ", ".join(aliases[h.table] for h in lp.hops)
    return f"∃ {names}, " + " ∧ ".join(_conds(lp, aliases))


def _exists_all(paths: list[LinkPath], aliases: dict[str, str]) -> str:
    parts = [_exists(lp, aliases) for lp in paths]
    return parts[0] if len(parts) == 1 else " ∧ ".join(f"({p})" for p in parts)


def _not_exists_all(paths: list[LinkPath], aliases: dict[str, str]) -> str:
    if len(paths) == 1:
        lp = paths[0]
        names = ", ".join(aliases[h.table] for h in lp.hops)
        conds = _conds(lp, aliases)
        if len(conds) == 1:
            return f"∀ {names}, " + conds[0].replace(" = ", " ≠ ", 1)
        return f"∀ {names}, ¬(" + " ∧ ".join(conds) + ")"
    return "¬(" + _exists_all(paths, aliases) + ")"


def render_rule(rule: IntegrityRule) -> str:
    p = rule.payload
    obj = p["table"].lower()
    if rule.variant == "Domain":
        return f"∀ {obj}, {obj}.{p['attribute']} ∈ {_tuple(p['values'])}"
    if rule.variant == "Transition":
        col = f"{obj}.{p['attribute']}"
        frags = []
        for value in p["values"]:
            olds = [old for old, new in p["pairs"] if new == value]
            cond = f"= {_lit(olds[0])}" if len(olds) == 1 else f"∈ {_tuple(olds)}"
            frags.append(f"if {col}.New = {_lit(value)} then {col}.Old {cond}")
        frags.append(f"on insert {col} ∈ {_tuple(p['initial'])}")
        return f"∀ {obj}, " + "; ".join(frags)
    if rule.variant == "StatusLink":
        paths = paths_from_payload(p["paths"])
        aliases = _alias_map(paths, p["table"])
        col = f"{obj}.{p['attribute']}"
        link = _exists_all(paths, aliases)
        return f"if {col} = {_lit(p['value'])} then {link}; if {link} then {col} ∈ {_tuple(p['allowed'])}"
    if rule.variant == "LinkOrder":
        earlier, later = paths_from_payload(p["earlier"]), paths_from_payload(p["later"])
        aliases = _alias_map(later + earlier, p["table"])
        return f"∀ {obj}, if {_exists_all(later, aliases)} then {_exists_all(earlier, aliases)}"
    if rule.variant == "ExclusiveLink":
        pa, pb = paths_from_payload(p["paths_a"]), paths_from_payload(p["paths_b"])
        aliases = _alias_map(pa + pb, p["table"])
        return f"If {_exists_all(pa, aliases)} then {_not_exists_all(pb, aliases)}"
    raise ValueError(f"unknown variant {rule.variant!r}")


# --------------------------------------------------------------------------
# repository


def ruleset_to_dict(ruleset: RuleSet) -> dict:
    return {
        "provenance": ruleset.provenance,
        "rules": [
            {"id": r.id, "template": r.template, "variant": r.variant, "payload": r.payload, "rendered": render_rule(r)}
            for r in ruleset.rules
        ],
    }


def dumps_rules(ruleset: RuleSet) -> str:
    return json.dumps(ruleset_to_dict(ruleset), indent=2, ensure_ascii=False) + "\n"


def save_rules(ruleset: RuleSet, destination: str | Path) -> None:
    Path(destination).write_text(dumps_rules(ruleset), encoding="utf-8")


def loads_rules(text: str) -> RuleSet:
    raw = load_json_document(text, "rule repository")
    doc = check_keys(raw, "$", {"provenance", "rules"})
    if not isinstance(doc["provenance"], dict):
        raise ModelError("expected an object", path="provenance")
    if not isinstance(doc["rules"], list):
        raise ModelError("expected a list", path="rules")
    rules = []
    for i, rr in enumerate(doc["rules"]):
        where = f"rules[{i}]"
        rr = check_keys(rr, where, {"id", "template", "variant", "payload"}, {"rendered"})
        variant = rr["variant"]
        if variant not in TEMPLATE_OF or rr["template"] != TEMPLATE_OF[variant]:
            raise ModelError("unknown variant or template mismatch", path=where)
        if not isinstance(rr["payload"], dict):
            raise ModelError("expected an object", path=f"{where}.payload")
        rule = IntegrityRule(rr["id"], rr["template"], variant, rr["payload"])
        if rule_id(variant, rule.payload) != rule.id:
            raise ModelError("rule id does not match its payload", path=f"{where}.id")
        try:
            render_rule(rule)
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ModelError(f"malformed payload ({exc})", path=f"{where}.payload") from None
        rules.append(rule)
    if len({r.id for r in rules}) != len(rules):
        raise ModelError("duplicate rule ids", path="rules")
    return RuleSet(sort_rules(rules), doc["provenance"])


def load_rules(source: str | Path) -> RuleSet:
    path = Path(source)
    try:
        return loads_rules(path.read_text(encoding="utf-8"))
    except ModelError as exc:
        exc.source = str(path)
        raise


DIGEST_KEYS = {"olc": "olc_digest", "schema": "schema_digest", "correspondence": "correspondence_digest"}


def stale_inputs(ruleset: RuleSet, current: dict[str, str]) -> list[str]:
    """Names in ``current`` (olc/schema/correspondence -> digest) that changed since derivation."""
    changed = []
    for name, digest in sorted(current.items()):
        recorded = ruleset.provenance.get(DIGEST_KEYS[name])
        if recorded is not None and recorded != digest:
            changed.append(name)
    return changed
