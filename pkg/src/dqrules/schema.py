"""Relational schemas: declarative JSON, a minimal SQL DDL subset, FK link paths."""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .errors import Diagnostic, ModelError, check_keys, expect_str, expect_str_list, load_json_document

TYPE_TAGS = ("string", "integer", "decimal", "date", "boolean")


@dataclass(frozen=True)
class Column:
    name: str
    type: str


@dataclass(frozen=True)
class ForeignKey:
    columns: tuple[str, ...]
    ref_table: str
    ref_columns: tuple[str, ...]


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]
    primary_key: tuple[str, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()

    def column(self, name: str) -> Column | None:
        for c in self.columns:
            if c.name == name:
                return c
        return None

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class DbSchema:
    tables: tuple[Table, ...] = ()

    def table(self, name: str) -> Table | None:
        for t in self.tables:
            if t.name == name:
                return t
        return None

    def require(self, name: str) -> Table:
        t = self.table(name)
        if t is None:
            raise KeyError(f"unknown table {name!r}")
        return t


@dataclass(frozen=True)
class Hop:
    """One FK step: rows of ``table`` whose ``columns`` equal ``ref_table``'s key."""

    table: str
    columns: tuple[str, ...]
    ref_table: str
    ref_columns: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"table": self.table, "fk": list(self.columns), "ref_table": self.ref_table, "ref": list(self.ref_columns)}

    @classmethod
    def from_dict(cls, d: dict) -> "Hop":
        return cls(d["table"], tuple(d["fk"]), d["ref_table"], tuple(d["ref"]))


@dataclass(frozen=True)
class LinkPath:
    hops: tuple[Hop, ...]

    @property
    def source_table(self) -> str:
        return self.hops[0].table

    @property
    def target_table(self) -> str:
        return self.hops[-1].ref_table

    def tables(self) -> list[str]:
        return [h.table for h in self.hops] + [self.target_table]

    def suffixes(self) -> list["LinkPath"]:
        """All non-empty suffixes, shortest first; the last one is the path itself."""
        return [LinkPath(self.hops[i:]) for i in range(len(self.hops) - 1, -1, -1)]

    def __str__(self) -> str:
        return " -> ".join(f"{h.table}.{','.join(h.columns)}" for h in self.hops) + f" -> {self.target_table}"


# --------------------------------------------------------------------------
# values


def coerce_text(tag: str, text: str):
    """Coerce a CSV field. Empty text is NULL."""
    if text == "":
        return None
    if tag == "string":
        return text
    if tag == "integer":
        if not re.fullmatch(r"[+-]?\d+", text.strip()):
            raise ValueError(f"not an integer: {text!r}")
        return int(text)
    if tag == "decimal":
        try:
            value = Decimal(text.strip())
        except InvalidOperation:
            raise ValueError(f"not a decimal: {text!r}") from None
        if not value.is_finite():
            raise ValueError(f"not a decimal: {text!r}")
        return value
    if tag == "date":
        try:
            return _dt.date.fromisoformat(text.strip())
        except ValueError:
            raise ValueError(f"not an ISO date: {text!r}") from None
    if tag == "boolean":
        low = text.strip().lower()
        if low in ("true", "t", "1", "yes"):
            return True
        if low in ("false", "f", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    raise ValueError(f"unknown type tag {tag!r}")


def coerce_literal(tag: str, value):
    """Coerce a JSON scalar to the typed representation used for comparisons."""
    if value is None:
        return None
    if tag == "string":
        if not isinstance(value, str):
            raise ValueError(f"expected a string, got {value!r}")
        return value
    if tag == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, str):
                return coerce_text(tag, value)
            raise ValueError(f"expected an integer, got {value!r}")
        return value
    if tag == "decimal":
        if isinstance(value, bool):
            raise ValueError(f"expected a decimal, got {value!r}")
        if isinstance(value, (int, float)):
            return Decimal(str(value))
        if isinstance(value, str):
            return coerce_text(tag, value)
        raise ValueError(f"expected a decimal, got {value!r}")
    if tag == "date":
        if not isinstance(value, str):
            raise ValueError(f"expected an ISO date string, got {value!r}")
        return coerce_text(tag, value)
    if tag == "boolean":
        if not isinstance(value, bool):
            raise ValueError(f"expected a boolean, got {value!r}")
        return value
    raise ValueError(f"unknown type tag {tag!r}")


def to_json_value(value):
    """Inverse of :func:`coerce_literal` for reporting and serialization."""
    if isinstance(value, Decimal):
        return str(value)
    if isinstance(value, _dt.date):
        return value.isoformat()
    return value


def to_text(value) -> str:
    if value is None:
        return ""
    if value is True:
        return "true"
    if value is False:
        return "false"
    return str(to_json_value(value))


# --------------------------------------------------------------------------
# declarative documents


def parse_schema(document: str, *, check: bool = True) -> DbSchema:
    """Parse a JSON schema document.

    With ``check`` (the default) any :func:`validate_schema` diagnostic is
    raised as a :class:`ModelError`; pass ``check=False`` to collect them.
    """
    raw = load_json_document(document, "schema document")
    schema = schema_from_dict(raw)
    if check:
        _raise_first(validate_schema(schema))
    return schema


def _raise_first(diags: list[Diagnostic]) -> None:
    if diags:
        d = diags[0]
        raise ModelError(d.message, path=d.element)


def schema_from_dict(raw: object) -> DbSchema:
    doc = check_keys(raw, "$", {"tables"})
    if not isinstance(doc["tables"], list):
        raise ModelError("expected a list", path="tables")
    tables = []
    for i, rt in enumerate(doc["tables"]):
        where = f"tables[{i}]"
        rt = check_keys(rt, where, {"name", "columns", "primary_key"}, {"foreign_keys"})
        name = expect_str(rt["name"], f"{where}.name")
        if not isinstance(rt["columns"], list):
            raise ModelError("expected a list", path=f"{where}.columns")
        cols = []
        for j, rc in enumerate(rt["columns"]):
            cw = f"{where}.columns[{j}]"
            rc = check_keys(rc, cw, {"name", "type"})
            ctype = expect_str(rc["type"], f"{cw}.type")
            if ctype not in TYPE_TAGS:
                raise ModelError(f"unknown column type {ctype!r}", path=f"{cw}.type")
            cols.append(Column(expect_str(rc["name"], f"{cw}.name"), ctype))
        pk = expect_str_list(rt["primary_key"], f"{where}.primary_key")
        fks = []
        raw_fks = rt.get("foreign_keys", [])
        if not isinstance(raw_fks, list):
            raise ModelError("expected a list", path=f"{where}.foreign_keys")
        for j, rf in enumerate(raw_fks):
            fw = f"{where}.foreign_keys[{j}]"
            rf = check_keys(rf, fw, {"columns", "ref_table", "ref_columns"})
            fks.append(
                ForeignKey(
                    tuple(expect_str_list(rf["columns"], f"{fw}.columns")),
                    expect_str(rf["ref_table"], f"{fw}.ref_table"),
                    tuple(expect_str_list(rf["ref_columns"], f"{fw}.ref_columns")),
                )
            )
        tables.append(Table(name, tuple(cols), tuple(pk), tuple(fks)))
    return DbSchema(tuple(tables))


def schema_to_dict(schema: DbSchema) -> dict:
    return {
        "tables": [
            {
                "name": t.name,
                "columns": [{"name": c.name, "type": c.type} for c in t.columns],
                "primary_key": list(t.primary_key),
                "foreign_keys": [
                    {"columns": list(fk.columns), "ref_table": fk.ref_table, "ref_columns": list(fk.ref_columns)}
                    for fk in t.foreign_keys
                ],
            }
            for t in schema.tables
        ]
    }


def serialize_schema(schema: DbSchema) -> str:
    return json.dumps(schema_to_dict(schema), indent=2, ensure_ascii=False) + "\n"


def validate_schema(schema: DbSchema) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    names = [t.name for t in schema.tables]
    for n in sorted({n for n in names if names.count(n) > 1}):
        diags.append(Diagnostic("duplicate-table", f"table {n!r} is declared more than once", n))
    for t in schema.tables:
        cols = t.column_names()
        for c in sorted({c for c in cols if cols.count(c) > 1}):
            diags.append(Diagnostic("duplicate-column", f"column {c!r} is declared more than once", t.name))
        if not t.primary_key:
            diags.append(Diagnostic("empty-primary-key", "primary key is empty", t.name))
        for c in t.primary_key:
            if c not in cols:
                diags.append(Diagnostic("unknown-column", f"primary key column {c!r} does not exist", t.name))
        for fk in t.foreign_keys:
            element = f"{t.name}({', '.join(fk.columns)})"
            for c in fk.columns:
                if c not in cols:
                    diags.append(Diagnostic("unknown-column", f"foreign key column {c!r} does not exist", element))
            ref = schema.table(fk.ref_table)
            if ref is None:
                diags.append(
                    Diagnostic("dangling-foreign-key", f"references unknown table {fk.ref_table!r}", element)
                )
                continue
            if len(fk.columns) != len(fk.ref_columns):
                diags.append(Diagnostic("arity-mismatch", "column count differs from referenced columns", element))
            elif tuple(fk.ref_columns) != tuple(ref.primary_key):
                diags.append(
                    Diagnostic(
                        "foreign-key-not-primary-key",
                        f"referenced columns must be the primary key of {ref.name!r}",
                        element,
                    )
                )
            else:
                for c, rc in zip(fk.columns, fk.ref_columns):
                    col, rcol = t.column(c), ref.column(rc)
                    if col and rcol and col.type != rcol.type:
                        diags.append(
                            Diagnostic("type-mismatch", f"{c!r} is {col.type} but {rc!r} is {rcol.type}", element)
                        )
    return diags


# --------------------------------------------------------------------------
# DDL subset

_SQL_TYPES = {
    "varchar": "string",
    "char": "string",
    "text": "string",
    "string": "string",
    "int": "integer",
    "integer": "integer",
    "bigint": "integer",
    "smallint": "integer",
    "decimal": "decimal",
    "numeric": "decimal",
    "real": "decimal",
    "float": "decimal",
    "double": "decimal",
    "date": "date",
    "boolean": "boolean",
    "bool": "boolean",
}
_DDL_TYPE_NAMES = {"string": "VARCHAR", "integer": "INTEGER", "decimal": "DECIMAL", "date": "DATE", "boolean": "BOOLEAN"}

_TOKEN = re.compile(r"\s+|--[^\n]*|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<num>\d+)|(?P<punct>[(),;])")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise ModelError(f"unsupported construct near {text[pos:pos + 10]!r}", line=line, column=col)
        if m.lastgroup:
            toks.append(_Tok(m.lastgroup, m.group(), line, col))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _DdlParser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, what: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        shown = tok.text or "end of input"
        raise ModelError(f"unsupported construct: expected {what}, found {shown!r}", line=tok.line, column=tok.column)

    def keyword(self, word: str) -> None:
        tok = self.peek()
        if tok.kind != "ident" or tok.text.lower() != word:
            self.fail(word.upper())
        self.i += 1

    def is_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.lower() == word

    def punct(self, p: str) -> None:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != p:
            self.fail(repr(p))
        self.i += 1

    def ident(self) -> str:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail("identifier")
        self.i += 1
        return tok.text

    def ident_list(self) -> list[str]:
        self.punct("(")
        names = [self.ident()]
        while self.peek().text == ",":
            self.i += 1
            names.append(self.ident())
        self.punct(")")
        return names

    def parse(self) -> DbSchema:
        tables = []
        while self.peek().kind != "eof":
            if self.peek().text == ";":
                self.i += 1
                continue
            tables.append(self.table())
            if self.peek().kind != "eof":
                self.punct(";")
        return DbSchema(tuple(tables))

    def table(self) -> Table:
        self.keyword("create")
        self.keyword("table")
        name = self.ident()
        self.punct("(")
        cols: list[Column] = []
        pk: list[str] | None = None
        fks: list[ForeignKey] = []
        while True:
            if self.is_keyword("primary"):
                tok = self.peek()
                self.i += 1
                self.keyword("key")
                if pk is not None:
                    self.fail("a single PRIMARY KEY clause", tok)
                pk = self.ident_list()
            elif self.is_keyword("foreign"):
                self.i += 1
                self.keyword("key")
                fcols = self.ident_list()
                self.keyword("references")
                ref = self.ident()
                fks.append(ForeignKey(tuple(fcols), ref, tuple(self.ident_list())))
            else:
                if pk is not None or fks:
                    self.fail("PRIMARY KEY or FOREIGN KEY clause")
                tok = self.peek()
                cname = self.ident()
                if cname.lower() in ("check", "constraint", "unique", "index", "key"):
                    self.fail("column definition", tok)
                cols.append(Column(cname, self.sql_type()))
            if self.peek().text == ",":
                self.i += 1
                continue
            break
        self.punct(")")
        if pk is None:
            self.fail("PRIMARY KEY clause")
        return Table(name, tuple(cols), tuple(pk), tuple(fks))

    def sql_type(self) -> str:
        tok = self.peek()
        if tok.kind != "ident" or tok.text.lower() not in _SQL_TYPES:
            self.fail("a supported column type")
        self.i += 1
        tag = _SQL_TYPES[tok.text.lower()]
        if self.peek().text == "(":
            self.i += 1
            if self.peek().kind != "num":
                self.fail("type length")
            self.i += 1
            if self.peek().text == ",":
                self.i += 1
                if self.peek().kind != "num":
                    self.fail("type scale")
                self.i += 1
            self.punct(")")
        return tag


def parse_ddl(text: str, *, check: bool = True) -> DbSchema:
    schema = _DdlParser(text).parse()
    if check:
        _raise_first(validate_schema(schema))
    return schema


def render_ddl(schema: DbSchema) -> str:
    out = []
    for t in schema.tables:
        items = [f"  {c.name} {_DDL_TYPE_NAMES[c.type]}" for c in t.columns]
        items.append(f"  PRIMARY KEY ({', '.join(t.primary_key)})")
        for fk in t.foreign_keys:
            items.append(
                f"  FOREIGN KEY ({', '.join(fk.columns)}) REFERENCES {fk.ref_table}({', '.join(fk.ref_columns)})"
            )
        out.append(f"CREATE TABLE {t.name} (\n" + ",\n".join(items) + "\n);\n")
    return "\n".join(out)


def load_schema_text(text: str, fmt: str, *, check: bool = True) -> DbSchema:
    if fmt == "sql":
        return parse_ddl(text, check=check)
    if fmt == "json":
        return parse_schema(text, check=check)
    raise ValueError(f"unknown schema format {fmt!r}")


# --------------------------------------------------------------------------
# link paths


def hop_for(schema: DbSchema, table: str, fk_columns: tuple[str, ...]) -> Hop:
    t = schema.require(table)
    for fk in t.foreign_keys:
        if tuple(fk.columns) == tuple(fk_columns):
            return Hop(t.name, fk.columns, fk.ref_table, fk.ref_columns)
    raise KeyError(f"table {table!r} has no foreign key on ({', '.join(fk_columns)})")


def find_link_paths(schema: DbSchema, from_table: str, to_table: str, max_hops: int = 3) -> list[LinkPath]:
    """All simple FK chains (child to parent) of at most ``max_hops`` hops."""
    schema.require(from_table)
    schema.require(to_table)
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    if from_table == to_table:
        return []
    found: list[LinkPath] = []

    def walk(table: str, hops: list[Hop], visited: set[str]) -> None:
        if len(hops) == max_hops:
            return
        t = schema.table(table)
        if t is None:
            return
        for fk in t.foreign_keys:
            if fk.ref_table in visited:
                continue
            hop = Hop(t.name, fk.columns, fk.ref_table, fk.ref_columns)
            if fk.ref_table == to_table:
                found.append(LinkPath(tuple(hops + [hop])))
            else:
                walk(fk.ref_table, hops + [hop], visited | {fk.ref_table})

    walk(from_table, [], {from_table})
    found.sort(key=lambda p: ([h.table for h in p.hops] + [p.target_table], [h.columns for h in p.hops]))
    return found
