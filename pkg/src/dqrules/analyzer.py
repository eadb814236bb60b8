"""Snapshots, change logs and rule evaluation."""

from __future__ import annotations

import csv
import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import AnalysisError, DataError
from .rules import IntegrityRule, RuleSet, paths_from_payload
from .schema import DbSchema, LinkPath, coerce_literal, coerce_text, to_json_value

Key = tuple


@dataclass
class TableData:
    name: str
    columns: tuple[str, ...]
    key_columns: tuple[str, ...]
    rows: dict[Key, dict] = field(default_factory=dict)
    lines: dict[Key, int] = field(default_factory=dict)


@dataclass
class Snapshot:
    schema: DbSchema
    tables: dict[str, TableData] = field(default_factory=dict)

    def sizes(self) -> dict[str, int]:
        return {name: len(t.rows) for name, t in self.tables.items()}


@dataclass(frozen=True)
class ChangeEvent:
    seq: int
    ts: str
    table: str
    key: Key
    kind: str
    attribute: str | None = None
    old: object = None
    new: object = None  # scalar for updates, row image (dict) or None for inserts


@dataclass(frozen=True)
class ChangeLog:
    events: tuple[ChangeEvent, ...] = ()

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[ChangeEvent]:
        return iter(self.events)


@dataclass(frozen=True)
class Violation:
    rule_id: str
    template: int
    table: str
    key: tuple  # JSON-native key values in primary-key order
    detail: dict = field(hash=False)
    event_seq: int | None = None

    def sort_key(self) -> tuple:
        return (self.rule_id, self.table, _sortable(self.key), -1 if self.event_seq is None else self.event_seq)


@dataclass(frozen=True)
class Dangling:
    table: str
    key: tuple
    ref_table: str
    columns: tuple[str, ...]
    value: tuple


def _sortable(key: Iterable) -> tuple:
    return tuple((0, x, "") if isinstance(x, (int, float)) and not isinstance(x, bool) else (1, 0, str(x)) for x in key)


def json_key(key: Key) -> tuple:
    return tuple(to_json_value(v) for v in key)


# --------------------------------------------------------------------------
# loading


def load_snapshot(directory: str | Path, schema: DbSchema, allow_missing: Iterable[str] = ()) -> Snapshot:
    directory = Path(directory)
    allow_missing = set(allow_missing)
    snap = Snapshot(schema)
    for table in schema.tables:
        path = directory / f"{table.name}.csv"
        if not path.exists():
            if table.name in allow_missing:
                continue
            raise DataError(f"missing table file {path}")
        types = {c.name: c.type for c in table.columns}
        data = TableData(table.name, tuple(table.column_names()), tuple(table.primary_key))
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file, header row required")
            if sorted(header) != sorted(types) or len(header) != len(set(header)):
                raise DataError(f"{path}: header {header} does not match columns {list(types)}")
            for record in reader:
                line = reader.line_num
                if not record:
                    continue
                if len(record) != len(header):
                    raise DataError(f"{path}:{line}: expected {len(header)} fields, found {len(record)}")
                row = {}
                for col, text in zip(header, record):
                    try:
                        row[col] = coerce_text(types[col], text)
                    except ValueError as exc:
                        raise DataError(f"{path}:{line}: column {col}: {exc}") from None
                key = tuple(row[c] for c in table.primary_key)
                if any(v is None for v in key):
                    raise DataError(f"{path}:{line}: primary key column is empty")
                if key in data.rows:
                    raise DataError(f"{path}: duplicate key {json_key(key)} on lines {data.lines[key]} and {line}")
                data.rows[key] = row
                data.lines[key] = line
        snap.tables[table.name] = data
    return snap


_EVENT_KEYS = {"seq", "ts", "table", "key", "kind", "attribute", "old", "new"}


def _parse_ts(ts: str) -> None:
    text = ts[:-1] + "+00:00" if ts.endswith("Z") else ts
    _dt.datetime.fromisoformat(text)


def load_changelog(file: str | Path, schema: DbSchema) -> ChangeLog:
    events: list[ChangeEvent] = []
    path = Path(file)
    last_seq = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue

            def fail(msg: str):
                raise DataError(f"{path}:{lineno}: {msg}")

            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                fail(f"malformed event ({exc.msg})")
            if not isinstance(raw, dict):
                fail("event must be a JSON object")
            unknown = set(raw) - _EVENT_KEYS
            if unknown:
                fail(f"unknown key(s) {sorted(unknown)}")
            for k in ("seq", "ts", "table", "key", "kind"):
                if k not in raw:
                    fail(f"missing {k!r}")
            seq = raw["seq"]
            if isinstance(seq, bool) or not isinstance(seq, int):
                fail("seq must be an integer")
            if last_seq is not None and seq <= last_seq:
                fail(f"seq {seq} does not increase (previous {last_seq})")
            last_seq = seq
            if not isinstance(raw["ts"], str):
                fail("ts must be an ISO-8601 string")
            try:
                _parse_ts(raw["ts"])
            except ValueError:
                fail(f"bad timestamp {raw['ts']!r}")
            table = schema.table(raw["table"]) if isinstance(raw["table"], str) else None
            if table is None:
                fail(f"unknown table {raw['table']!r}")
            types = {c.name: c.type for c in table.columns}
            rk = raw["key"]
            if not isinstance(rk, dict) or set(rk) != set(table.primary_key):
                fail(f"key must name exactly the primary key columns {list(table.primary_key)}")
            try:
                key = tuple(coerce_literal(types[c], rk[c]) for c in table.primary_key)
            except ValueError as exc:
                fail(f"key: {exc}")
            kind = raw["kind"]
            attribute = old = new = None
            if kind == "update":
                for k in ("attribute", "old", "new"):
                    if k not in raw:
                        fail(f"update event missing {k!r}")
                attribute = raw["attribute"]
                if attribute not in types:
                    fail(f"unknown attribute {attribute!r} of {table.name}")
                try:
                    old = coerce_literal(types[attribute], raw["old"])
                    new = coerce_literal(types[attribute], raw["new"])
                except ValueError as exc:
                    fail(str(exc))
            elif kind == "insert":
                image = raw.get("new")
                if image is not None:
                    if not isinstance(image, dict):
                        fail("insert 'new' must be a row object")
                    bad = set(image) - set(types)
                    if bad:
                        fail(f"unknown attribute(s) {sorted(bad)} of {table.name}")
                    try:
                        new = {c: coerce_literal(types[c], v) for c, v in image.items()}
                    except ValueError as exc:
                        fail(str(exc))
            elif kind != "delete":
                fail(f"unknown event kind {kind!r}")
            events.append(ChangeEvent(seq, raw["ts"], table.name, key, kind, attribute, old, new))
    return ChangeLog(tuple(events))


def event_to_dict(ev: ChangeEvent, schema: DbSchema) -> dict:
    table = schema.require(ev.table)
    out: dict = {
        "seq": ev.seq,
        "ts": ev.ts,
        "table": ev.table,
        "key": {c: to_json_value(v) for c, v in zip(table.primary_key, ev.key)},
        "kind": ev.kind,
    }
    if ev.kind == "update":
        out.update(attribute=ev.attribute, old=to_json_value(ev.old), new=to_json_value(ev.new))
    elif ev.kind == "insert" and ev.new is not None:
        out["new"] = {c: to_json_value(v) for c, v in ev.new.items()}
    return out


# --------------------------------------------------------------------------
# referential precheck


def find_dangling(snapshot: Snapshot) -> list[Dangling]:
    out = []
    for table in snapshot.schema.tables:
        data = snapshot.tables.get(table.name)
        if data is None:
            continue
        for key, row in data.rows.items():
            for fk in table.foreign_keys:
                value = tuple(row.get(c) for c in fk.columns)
                if any(v is None for v in value):
                    continue
                parent = snapshot.tables.get(fk.ref_table)
                if parent is None or value not in parent.rows:
                    out.append(Dangling(table.name, json_key(key), fk.ref_table, fk.columns, json_key(value)))
    return sorted(out, key=lambda d: (d.table, _sortable(d.key), d.columns))


def without_dangling(snapshot: Snapshot, dangling: list[Dangling]) -> Snapshot:
    if not dangling:
        return snapshot
    drop: dict[str, set] = {}
    for d in dangling:
        drop.setdefault(d.table, set()).add(d.key)
    out = Snapshot(snapshot.schema)
    for name, data in snapshot.tables.items():
        gone = drop.get(name, set())
        rows = {k: r for k, r in data.rows.items() if json_key(k) not in gone}
        lines = {k: data.lines[k] for k in rows}
        out.tables[name] = TableData(name, data.columns, data.key_columns, rows, lines)
    return out


# --------------------------------------------------------------------------
# evaluation


class _LinkIndex:
    """Identity keys reachable from some source row along a link path."""

    def __init__(self, snapshot: Snapshot):
        self.snapshot = snapshot
        self._cache: dict[tuple, dict] = {}

    def _table(self, name: str) -> TableData:
        data = self.snapshot.tables.get(name)
        if data is None:
            raise AnalysisError(f"rule references table {name!r}, which is absent from the snapshot")
        return data

    def _resolve(self, hops: tuple) -> dict:
        """Map each row key of ``hops[0].table`` to the identity key it reaches."""
        if hops in self._cache:
            return self._cache[hops]
        first = hops[0]
        source = self._table(first.table)
        if len(hops) == 1:
            parent = self._table(first.ref_table).rows
            lookup = {k: k for k in parent}
        else:
            lookup = self._resolve(hops[1:])
        out = {}
        for key, row in source.rows.items():
            value = tuple(row.get(c) for c in first.columns)
            if value in lookup:
                out[key] = lookup[value]
        self._cache[hops] = out
        return out

    def linked(self, path: LinkPath) -> set:
        return set(self._resolve(path.hops).values())

    def linked_all(self, paths: list[LinkPath]) -> set:
        sets = [self.linked(p) for p in paths]
        return set.intersection(*sets) if sets else set()


def _identity(snapshot: Snapshot, rule: IntegrityRule) -> TableData:
    data = snapshot.tables.get(rule.payload["table"])
    if data is None:
        raise AnalysisError(f"rule {rule.id} references table {rule.payload['table']!r}, absent from the snapshot")
    attr = rule.payload.get("attribute")
    if attr is not None and attr not in data.columns:
        raise AnalysisError(f"rule {rule.id} references unknown column {rule.payload['table']}.{attr}")
    return data


def _typed(snapshot: Snapshot, rule: IntegrityRule, values: list) -> list:
    table = snapshot.schema.require(rule.payload["table"])
    col = table.column(rule.payload["attribute"])
    return [coerce_literal(col.type, v) for v in values]


def _typed_one(snapshot: Snapshot, rule: IntegrityRule, value):
    return _typed(snapshot, rule, [value])[0]


def evaluate(
    rule: IntegrityRule,
    snapshot: Snapshot,
    changelog: ChangeLog | None = None,
    *,
    strict_null: bool = False,
    _index: _LinkIndex | None = None,
) -> list[Violation]:
    p = rule.payload
    identity = _identity(snapshot, rule)
    index = _index or _LinkIndex(snapshot)
    out: list[Violation] = []

    def add(key: Key, detail: dict, seq: int | None = None) -> None:
        out.append(Violation(rule.id, rule.template, identity.name, json_key(key), detail, seq))

    if rule.variant == "Domain":
        attr = p["attribute"]
        allowed = set(_typed(snapshot, rule, p["values"]))
        for key, row in identity.rows.items():
            v = row.get(attr)
            if (v is None and strict_null) or (v is not None and v not in allowed):
                add(key, {"attribute": attr, "found": to_json_value(v), "expected": p["values"]})

    elif rule.variant == "Transition":
        if changelog is None:
            return []
        attr = p["attribute"]
        olds = _typed(snapshot, rule, [x for x, _ in p["pairs"]])
        news = _typed(snapshot, rule, [y for _, y in p["pairs"]])
        pairs = set(zip(olds, news))
        initial = set(_typed(snapshot, rule, p["initial"]))
        for ev in changelog:
            if ev.table != identity.name:
                continue
            if ev.kind == "update" and ev.attribute == attr:
                old, new = ev.old, ev.new
                if old == new:
                    continue
                if new is None:
                    bad = strict_null
                elif old is None:
                    # no state yet: the first value must be an initial one
                    bad = strict_null or new not in initial
                else:
                    bad = (old, new) not in pairs
                if bad:
                    add(ev.key, {"attribute": attr, "old": to_json_value(old), "new": to_json_value(new)}, ev.seq)
            elif ev.kind == "insert":
                v = (ev.new or {}).get(attr)
                if (v is None and strict_null) or (v is not None and v not in initial):
                    add(ev.key, {"attribute": attr, "initial": to_json_value(v), "expected": p["initial"]}, ev.seq)

    elif rule.variant == "StatusLink":
        attr = p["attribute"]
        value = _typed_one(snapshot, rule, p["value"])
        domain = set(_typed(snapshot, rule, p["values"]))
        allowed = set(_typed(snapshot, rule, p["allowed"]))
        linked = index.linked_all(paths_from_payload(p["paths"]))
        for key, row in identity.rows.items():
            v = row.get(attr)
            has_link = key in linked
            if v == value and not has_link:
                add(key, {"direction": "forward", "attribute": attr, "found": to_json_value(v), "link": False})
            elif has_link and v in domain and v not in allowed:
                add(key, {"direction": "reverse", "attribute": attr, "found": to_json_value(v), "expected": p["allowed"]})

    elif rule.variant == "LinkOrder":
        earlier = index.linked_all(paths_from_payload(p["earlier"]))
        later = index.linked_all(paths_from_payload(p["later"]))
        for key in identity.rows:
            if key in later and key not in earlier:
                add(key, {"later_state": p["later_state"], "missing_state": p["earlier_state"]})

    elif rule.variant == "ExclusiveLink":
        a = index.linked_all(paths_from_payload(p["paths_a"]))
        b = index.linked_all(paths_from_payload(p["paths_b"]))
        for key in identity.rows:
            if key in a and key in b:
                add(key, {"states": p["states"]})
    else:
        raise AnalysisError(f"unknown rule variant {rule.variant!r}")

    return sorted(out, key=Violation.sort_key)


def not_evaluable(ruleset: RuleSet, changelog: ChangeLog | None) -> list[str]:
    if changelog is not None:
        return []
    return [r.id for r in ruleset.rules if r.variant == "Transition"]


@dataclass
class Analysis:
    violations: list[Violation]
    dangling: list[Dangling]
    not_evaluable: list[str]
    rows: dict[str, int]
    events: int


def evaluate_all(
    ruleset: RuleSet,
    snapshot: Snapshot,
    changelog: ChangeLog | None = None,
    *,
    strict_null: bool = False,
) -> list[Violation]:
    return analyze(ruleset, snapshot, changelog, strict_null=strict_null).violations


def analyze(
    ruleset: RuleSet,
    snapshot: Snapshot,
    changelog: ChangeLog | None = None,
    *,
    strict_null: bool = False,
) -> Analysis:
    """Referential precheck followed by every rule; dangling rows are set aside."""
    dangling = find_dangling(snapshot)
    clean = without_dangling(snapshot, dangling)
    index = _LinkIndex(clean)
    violations: list[Violation] = []
    for rule in ruleset.rules:
        violations += evaluate(rule, clean, changelog, strict_null=strict_null, _index=index)
    violations.sort(key=Violation.sort_key)
    return Analysis(
        violations,
        dangling,
        not_evaluable(ruleset, changelog),
        snapshot.sizes(),
        len(changelog) if changelog is not None else 0,
    )
