"""Synthetic snapshots and change logs from random walks over a life cycle.

Clean objects follow the transition graph faithfully: status attributes
change only along edges, entering a state establishes its link rows, and an
object never enters a state exclusive with one it already visited.

Injected objects carry exactly one known violation each. Candidates are
checked with a state-level predictor (status values plus the set of link
suffixes established for the object) rather than by running the row-level
evaluator, so the manifest is an independent account of what ``validate``
must find.
"""

from __future__ import annotations

import datetime as _dt
import json
import random
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

from .analyzer import _sortable
from .correspondence import CorrespondenceMap
from .errors import DQError
from .olc import OlcModel, exclusive_pairs, transition_graph
from .rules import IntegrityRule, RuleSet, derive_all, paths_from_payload
from .schema import DbSchema, Hop, Table, to_text

INJECT_CLASSES = {
    "domain": 1,
    "transition": 2,
    "statuslink": 3,
    "status-link": 3,
    "linkorder": 4,
    "link-order": 4,
    "exclusive": 5,
    "exclusivelink": 5,
}
CLASS_NAMES = {1: "domain", 2: "transition", 3: "statuslink", 4: "linkorder", 5: "exclusive"}
MAX_ATTEMPTS = 2000
_EPOCH = _dt.datetime(2024, 1, 1, tzinfo=_dt.timezone.utc)

Suffix = tuple[Hop, ...]


class GenerationError(DQError):
    pass


def parse_inject_spec(spec: str | None) -> dict[int, int]:
    """``"transition=3,domain=2"`` -> ``{2: 3, 1: 2}``; template numbers work as names too."""
    counts: dict[int, int] = {}
    if not spec:
        return counts
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, num = item.partition("=")
        name = name.strip().lower()
        template = int(name.lstrip("t")) if name.lstrip("t").isdigit() else INJECT_CLASSES.get(name)
        if template not in CLASS_NAMES or not sep or not num.strip().isdigit():
            raise ValueError(f"bad injection item {item!r}; expected NAME=COUNT with NAME in {sorted(set(CLASS_NAMES.values()))}")
        counts[template] = counts.get(template, 0) + int(num)
    return counts


@dataclass
class _Plan:
    initial: str
    steps: list[tuple[str, str, bool]]  # (from, to, leaving)


@dataclass
class _Abstract:
    status: dict[str, object]
    visited: list[str]
    current: str
    established: set[Suffix]


@dataclass
class GeneratedData:
    schema: DbSchema
    tables: dict[str, dict[tuple, dict]]
    events: list[dict]
    manifest: dict

    def write(self, directory: str | Path, log_path: str | Path | None = None, manifest_path: str | Path | None = None) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for table in self.schema.tables:
            rows = self.tables.get(table.name, {})
            cols = table.column_names()
            lines = [",".join(_csv_field(c) for c in cols)]
            for key in sorted(rows, key=_sortable):
                lines.append(",".join(_csv_field(to_text(rows[key].get(c))) for c in cols))
            (directory / f"{table.name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        log_path = Path(log_path) if log_path else directory / "changes.ndjson"
        log_path.write_text(
            "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in self.events), encoding="utf-8"
        )
        manifest_path = Path(manifest_path) if manifest_path else directory / "manifest.json"
        manifest_path.write_text(json.dumps(self.manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\n\r'):
        return '"' + text.replace('"', '""') + '"'
    return text


class _Generator:
    def __init__(self, olc: OlcModel, schema: DbSchema, cmap: CorrespondenceMap, rules: RuleSet, rng: random.Random):
        self.olc, self.schema, self.cmap, self.rules, self.rng = olc, schema, cmap, rules, rng
        self.graph = transition_graph(olc)
        self.succ = {s: [t for (f, t) in sorted(self.graph.edges, key=self._edge_key) if f == s] for s in olc.states}
        self.exclusive = exclusive_pairs(olc, self.graph)
        self.initials = olc.ordered(olc.initial_states())
        self.identity = schema.require(cmap.identity_table)
        self.attrs = [a for (_, a) in cmap.status_attributes()]
        self.values = {s: {a: v for (_, a), v in cmap.attribute_values(s).items()} for s in olc.states}
        self.reps: dict[str, list[Suffix]] = {s: [lp.hops for lp in cmap.link_rep(s)] for s in olc.states}
        self.tables: dict[str, dict[tuple, dict]] = {t.name: {} for t in schema.tables}
        self.counters: dict[str, int] = {}
        self.events: list[dict] = []

    def _edge_key(self, edge: tuple[str, str]) -> tuple[int, int]:
        idx = self.olc.state_index()
        return idx[edge[0]], idx[edge[1]]

    # -- planning (no side effects) ------------------------------------------

    def plan(self) -> _Plan:
        initial = self.rng.choice(self.initials)
        held, visited = [initial], {initial}
        steps = []
        for _ in range(self.rng.randint(0, 2 * len(self.olc.states))):
            moves = []
            for s in self.olc.ordered(held):
                for t in self.succ[s]:
                    if any(frozenset((t, u)) in self.exclusive for u in visited if u != t):
                        continue
                    moves.append((s, t))
            if not moves:
                break
            s, t = self.rng.choice(moves)
            leaving = self.graph.edges[(s, t)].leaving
            if leaving:
                held.remove(s)
            if t not in held:
                held.append(t)
            visited.add(t)
            steps.append((s, t, leaving))
        return _Plan(initial, steps)

    def simulate(self, plan: _Plan) -> _Abstract:
        status = {a: None for a in self.attrs}
        established: set[Suffix] = set()
        visited = []
        for state in [plan.initial] + [t for _, t, _ in plan.steps]:
            visited.append(state)
            status.update(self.values[state])
            for hops in self.reps[state]:
                established |= {hops[i:] for i in range(len(hops))}
        return _Abstract(status, visited, visited[-1], established)

    # -- materializing -------------------------------------------------------

    def _event(self, table: Table, key: tuple, kind: str, **extra) -> int:
        seq = len(self.events) + 1
        ev = {
            "seq": seq,
            "ts": (_EPOCH + _dt.timedelta(seconds=seq)).isoformat().replace("+00:00", "Z"),
            "table": table.name,
            "key": dict(zip(table.primary_key, key)),
            "kind": kind,
        }
        ev.update(extra)
        self.events.append(ev)
        return seq

    def _next(self, table: str) -> int:
        self.counters[table] = self.counters.get(table, 0) + 1
        return self.counters[table]

    def _random_value(self, ctype: str):
        r = self.rng
        if ctype == "string":
            return "".join(r.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(6))
        if ctype == "integer":
            return r.randint(0, 1000)
        if ctype == "decimal":
            return str(Decimal(r.randint(0, 100000)) / 100)
        if ctype == "date":
            return (_dt.date(2024, 1, 1) + _dt.timedelta(days=r.randint(0, 365))).isoformat()
        return r.random() < 0.5

    def _unique(self, table: Table, ctype: str, n: int):
        if ctype == "integer":
            return n
        if ctype == "string":
            return f"{table.name}-{n}"
        if ctype == "decimal":
            return str(n)
        if ctype == "date":
            return (_dt.date(2000, 1, 1) + _dt.timedelta(days=n)).isoformat()
        raise GenerationError(f"cannot generate unique {ctype} keys for table {table.name!r}")

    def _new_row(self, table: Table, assigned: dict) -> tuple:
        fk_cols = {c for fk in table.foreign_keys for c in fk.columns}
        n = self._next(table.name)
        row = {}
        for col in table.columns:
            if col.name in assigned:
                row[col.name] = assigned[col.name]
            elif col.name in table.primary_key:
                if col.name in fk_cols:
                    raise GenerationError(f"cannot generate key column {table.name}.{col.name}: it references another table")
                row[col.name] = self._unique(table, col.type, n)
            elif col.name in fk_cols:
                row[col.name] = None
            else:
                row[col.name] = self._random_value(col.type)
        key = tuple(row[c] for c in table.primary_key)
        if key in self.tables[table.name]:
            raise GenerationError(f"generated duplicate key {key} in {table.name!r}")
        self.tables[table.name][key] = row
        return key

    def _establish(self, obj_key: tuple, chain: dict[Suffix, tuple], hops: Suffix) -> None:
        for i in range(len(hops) - 1, -1, -1):
            suffix = hops[i:]
            if suffix in chain:
                continue
            hop = hops[i]
            parent = obj_key if i == len(hops) - 1 else chain[hops[i + 1 :]]
            table = self.schema.require(hop.table)
            key = self._new_row(table, dict(zip(hop.columns, parent)))
            chain[suffix] = key
            self._event(table, key, "insert", new=dict(self.tables[table.name][key]))

    def materialize(self, plan: _Plan) -> tuple[tuple, dict[Suffix, tuple]]:
        assigned = {a: self.values[plan.initial].get(a) for a in self.attrs}
        key = self._new_row(self.identity, assigned)
        self._event(self.identity, key, "insert", new=dict(self.tables[self.identity.name][key]))
        chain: dict[Suffix, tuple] = {}
        for hops in self.reps[plan.initial]:
            self._establish(key, chain, hops)
        row = self.tables[self.identity.name][key]
        for _, t, _ in plan.steps:
            for a, v in self.values[t].items():
                if row[a] != v:
                    self._event(self.identity, key, "update", attribute=a, old=row[a], new=v)
                    row[a] = v
            for hops in self.reps[t]:
                self._establish(key, chain, hops)
        return key, chain

    def _delete_source(self, chain: dict[Suffix, tuple], hops: Suffix) -> None:
        table = self.schema.require(hops[0].table)
        key = chain.pop(hops)
        del self.tables[table.name][key]
        self._event(table, key, "delete")

    # -- prediction ----------------------------------------------------------

    @staticmethod
    def _has(established: set[Suffix], paths: list) -> bool:
        return all(lp.hops in established for lp in paths)

    def predict(self, ab: _Abstract) -> set[str]:
        """Rule ids the end state of ``ab`` violates (transition rules excluded)."""
        hit = set()
        for r in self.rules.rules:
            p = r.payload
            if r.variant == "Domain":
                v = ab.status.get(p["attribute"])
                if v is not None and v not in p["values"]:
                    hit.add(r.id)
            elif r.variant == "StatusLink":
                v = ab.status.get(p["attribute"])
                q = self._has(ab.established, paths_from_payload(p["paths"]))
                if (v == p["value"] and not q) or (q and v in p["values"] and v not in p["allowed"]):
                    hit.add(r.id)
            elif r.variant == "LinkOrder":
                if self._has(ab.established, paths_from_payload(p["later"])) and not self._has(
                    ab.established, paths_from_payload(p["earlier"])
                ):
                    hit.add(r.id)
            elif r.variant == "ExclusiveLink":
                if self._has(ab.established, paths_from_payload(p["paths_a"])) and self._has(
                    ab.established, paths_from_payload(p["paths_b"])
                ):
                    hit.add(r.id)
        return hit

    def _removable(self, ab: _Abstract, hops: Suffix) -> bool:
        # the source row of ``hops`` must not be an intermediate row of a longer chain
        return hops in ab.established and not any(
            len(s) > len(hops) and s[-len(hops) :] == hops for s in ab.established
        )

    # -- injection -----------------------------------------------------------

    def _rules_of(self, variant: str) -> list[IntegrityRule]:
        return [r for r in self.rules.rules if r.variant == variant]

    def _invalid_value(self, rule: IntegrityRule, k: int):
        col = self.identity.column(rule.payload["attribute"])
        values = rule.payload["values"]
        if col.type == "string":
            v = f"~invalid-{k}"
            while v in values:
                v += "~"
            return v
        if col.type == "integer":
            return max(values) + 1 + k
        if col.type == "decimal":
            return str(max(Decimal(str(v)) for v in values) + 1 + k)
        if col.type == "date":
            top = max(_dt.date.fromisoformat(v) for v in values)
            return (top + _dt.timedelta(days=1 + k)).isoformat()
        rest = [b for b in (True, False) if b not in values]
        return rest[0] if rest else None

    def inject(self, template: int, k: int) -> dict:
        variant = {1: "Domain", 2: "Transition", 3: "StatusLink", 4: "LinkOrder", 5: "ExclusiveLink"}[template]
        candidates = self._rules_of(variant)
        if template == 1:
            candidates = [r for r in candidates if self._invalid_value(r, k) is not None]
        if template == 2:
            candidates = [r for r in candidates if self._forbidden(r)]
        if not candidates:
            raise GenerationError(f"cannot inject {CLASS_NAMES[template]}: the rule set has no suitable rule")
        for _ in range(MAX_ATTEMPTS):
            rule = self.rng.choice(candidates)
            plan = self.plan()
            ab = self.simulate(plan)
            if self.predict(ab):
                raise GenerationError("internal error: a faithful walk violates a derived rule")
            entry = self._try(template, rule, plan, ab, k)
            if entry is not None:
                return entry
        raise GenerationError(f"cannot inject {CLASS_NAMES[template]}: no walk yields exactly one violation")

    def _forbidden(self, rule: IntegrityRule) -> list[tuple]:
        p = rule.payload
        allowed = {(a, b) for a, b in p["pairs"]}
        return [(a, b) for a in p["values"] for b in p["values"] if a != b and (a, b) not in allowed]

    def _try(self, template: int, rule: IntegrityRule, plan: _Plan, ab: _Abstract, k: int) -> dict | None:
        p = rule.payload
        seq = None
        if template == 1:
            bad = self._invalid_value(rule, k)
            after = _Abstract({**ab.status, p["attribute"]: bad}, ab.visited, ab.current, ab.established)
            if self.predict(after) != {rule.id}:
                return None
            key, _ = self.materialize(plan)
            self.tables[self.identity.name][key][p["attribute"]] = bad
        elif template == 2:
            old, new = self.rng.choice(self._forbidden(rule))
            key, _ = self.materialize(plan)
            seq = self._event(self.identity, key, "update", attribute=p["attribute"], old=old, new=new)
        elif template in (3, 4):
            paths = paths_from_payload(p["paths"] if template == 3 else p["earlier"])
            if template == 3 and ab.status.get(p["attribute"]) != p["value"]:
                return None
            if template == 4 and not self._has(ab.established, paths_from_payload(p["later"])):
                return None
            hops = paths[0].hops
            if not self._removable(ab, hops):
                return None
            after = _Abstract(ab.status, ab.visited, ab.current, ab.established - {hops})
            if self.predict(after) != {rule.id}:
                return None
            key, chain = self.materialize(plan)
            self._delete_source(chain, hops)
        else:
            pa, pb = paths_from_payload(p["paths_a"]), paths_from_payload(p["paths_b"])
            if self._has(ab.established, pa):
                add = pb
            elif self._has(ab.established, pb):
                add = pa
            else:
                return None
            grown = set(ab.established)
            for lp in add:
                grown |= {lp.hops[i:] for i in range(len(lp.hops))}
            after = _Abstract(ab.status, ab.visited, ab.current, grown)
            cleared = False
            if self.predict(after) != {rule.id}:
                # a status value always contradicts one side's status-link rule;
                # a null status sits outside every status-link condition
                after = _Abstract({a: None for a in ab.status}, ab.visited, ab.current, grown)
                if self.predict(after) != {rule.id}:
                    return None
                cleared = True
            key, chain = self.materialize(plan)
            for lp in add:
                self._establish(key, chain, lp.hops)
            if cleared:
                for attr in ab.status:
                    self.tables[self.identity.name][key][attr] = None
        return {
            "class": CLASS_NAMES[template],
            "template": template,
            "rule_id": rule.id,
            "table": self.identity.name,
            "key": list(key),
            "event_seq": seq,
        }


def generate(
    olc: OlcModel,
    schema: DbSchema,
    cmap: CorrespondenceMap,
    *,
    seed: int = 0,
    count: int = 100,
    inject: dict[int, int] | None = None,
    rules: RuleSet | None = None,
) -> GeneratedData:
    if count < 0:
        raise ValueError("count must be >= 0")
    rules = rules or derive_all(olc, schema, cmap, provenance={"derived_at": ""})
    gen = _Generator(olc, schema, cmap, rules, random.Random(seed))
    if not gen.initials:
        raise GenerationError("the life cycle has no initial states")
    for _ in range(count):
        gen.materialize(gen.plan())
    injected = []
    for template in sorted(inject or {}):
        for k in range(inject[template]):
            injected.append(gen.inject(template, k))
    manifest = {"seed": seed, "clean_objects": count, "injected": injected}
    return GeneratedData(schema, gen.tables, gen.events, manifest)
