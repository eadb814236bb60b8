"""Random model builders and brute-force oracles shared by the test modules."""

from __future__ import annotations

import json
import random
from pathlib import Path

from dqrules.correspondence import correspondence_from_dict, validate_correspondence
from dqrules.olc import OlcModel, olc_from_dict, transition_graph, validate_olc
from dqrules.schema import DbSchema, schema_from_dict

FIXTURE = Path(__file__).resolve().parents[1] / "src" / "dqrules" / "fixtures" / "ecommerce"


def fixture_paths() -> dict[str, Path]:
    return {
        "olc": FIXTURE / "olc.json",
        "schema": FIXTURE / "schema.json",
        "sql": FIXTURE / "schema.sql",
        "map": FIXTURE / "correspondence.json",
    }


# -- random life cycles -------------------------------------------------------


def random_olc_dict(rng: random.Random, max_states: int = 8, max_processes: int = 10) -> dict:
    n = rng.randint(1, max_states)
    states = [f"S{i}" for i in range(n)]
    processes = []
    for i in range(rng.randint(0, max_processes)):
        ins = rng.sample(states, rng.randint(1, min(2, n)))
        outs = rng.sample(states, rng.randint(1, min(2, n)))
        processes.append({"name": f"P{i}", "inputs": ins, "outputs": outs})
    edges = sorted({(s, t) for p in processes for s in p["inputs"] for t in p["outputs"]})
    loops = sorted({(t, s) for s, t in edges if t != s and rng.random() < 0.15})
    all_edges = sorted(set(edges) | set(loops))
    retained = sorted({(t, s) for s, t in all_edges if t != s and rng.random() < 0.15})
    doc: dict = {"object": "Obj", "states": states, "processes": processes}
    produced = {t for s, t in edges}
    if rng.random() < 0.5 or not set(states) - produced:
        doc["initial"] = sorted(rng.sample(states, rng.randint(1, min(2, n))))
    if loops:
        doc["loops"] = [list(p) for p in loops]
    if retained:
        doc["retained"] = [list(p) for p in retained]
    if n >= 2 and rng.random() < 0.3:
        doc["exclusive"] = [sorted(rng.sample(states, 2))]
    return doc


def random_olc(rng: random.Random, **kw) -> OlcModel:
    while True:
        model = olc_from_dict(random_olc_dict(rng, **kw))
        if not validate_olc(model):
            return model


# -- brute-force graph oracles ------------------------------------------------


def oracle_edges(doc: dict) -> set[tuple[str, str]]:
    out = set()
    for p in doc.get("processes", []):
        for s in p["inputs"]:
            for t in p["outputs"]:
                out.add((s, t))
    for sj, si in doc.get("loops", []):
        out.add((sj, si))
    return out


def oracle_successors(edges: set, s: str) -> list[str]:
    return sorted(t for (f, t) in edges if f == s)


def oracle_simple_paths(edges: set, starts: list[str], nodes: list[str]) -> list[list[str]]:
    """Every simple path (no repeated node) starting at any of ``starts``."""
    out = []

    def walk(path: list[str]) -> None:
        out.append(list(path))
        for t in oracle_successors(edges, path[-1]):
            if t not in path:
                path.append(t)
                walk(path)
                path.pop()

    for s in starts:
        walk([s])
    return out


def oracle_reachable(edges: set, s: str, nodes: list[str]) -> set[str]:
    # t is reachable via >= 1 edge iff some simple path from a successor of s reaches t
    out = set()
    for first in oracle_successors(edges, s):
        for p in oracle_simple_paths(edges, [first], nodes):
            out.add(p[-1])
    return out


def oracle_dominators(edges: set, initials: list[str], nodes: list[str]) -> dict[str, frozenset[str]]:
    """d dominates n iff d lies on every simple path from an initial to n."""
    paths = oracle_simple_paths(edges, sorted(initials), nodes)
    dom = {}
    for n in nodes:
        ending = [set(p) for p in paths if p[-1] == n]
        dom[n] = frozenset(set.intersection(*ending)) if ending else frozenset(nodes)
    return dom


# -- random schemas and correspondences ---------------------------------------


def random_schema_dict(rng: random.Random, n_links: int | None = None) -> tuple[dict, dict[str, str]]:
    """An identity table ``Obj`` plus link tables forming a forest under it.

    Returns the schema document and each link table's parent.
    """
    n_links = rng.randint(1, 6) if n_links is None else n_links
    tables = [
        {
            "name": "Obj",
            "columns": [
                {"name": "Id", "type": "integer"},
                {"name": "Status", "type": "string"},
                {"name": "Stage", "type": "integer"},
                {"name": "Note", "type": "string"},
            ],
            "primary_key": ["Id"],
        }
    ]
    parent: dict[str, str] = {}
    depth = {"Obj": 0}
    for i in range(n_links):
        name = f"L{i}"
        up = rng.choice(["Obj"] + [f"L{j}" for j in range(i) if depth[f"L{j}"] < 3])
        parent[name] = up
        depth[name] = depth[up] + 1
        ref_col = "Id" if up == "Obj" else f"{up}Id"
        fk_col = "ObjId" if up == "Obj" else f"{up}Ref"
        extra_type = rng.choice(["string", "integer", "decimal", "date", "boolean"])
        tables.append(
            {
                "name": name,
                "columns": [
                    {"name": f"{name}Id", "type": "integer"},
                    {"name": fk_col, "type": "integer"},
                    {"name": "Extra", "type": extra_type},
                ],
                "primary_key": [f"{name}Id"],
                "foreign_keys": [{"columns": [fk_col], "ref_table": up, "ref_columns": [ref_col]}],
            }
        )
    return {"tables": tables}, parent


def chain_to_obj(parent: dict[str, str], table: str) -> list[dict]:
    hops = []
    t = table
    while t != "Obj":
        up = parent[t]
        hops.append({"table": t, "fk": ["ObjId" if up == "Obj" else f"{up}Ref"]})
        t = up
    return hops


def random_correspondence_dict(rng: random.Random, olc: OlcModel, parent: dict[str, str]) -> dict:
    # a single-valued status attribute cannot describe states held at once
    use_status = not olc.retained and rng.random() < 0.7
    use_stage = use_status and rng.random() < 0.3
    links = sorted(parent)
    bindings = []
    for i, s in enumerate(olc.states):
        if use_status:
            bindings.append({"state": s, "kind": "attribute", "table": "Obj", "attribute": "Status", "value": s})
        if use_stage:
            bindings.append({"state": s, "kind": "attribute", "table": "Obj", "attribute": "Stage", "value": i})
        roll = rng.random()
        table = rng.choice(links)
        if roll < 0.3:
            bindings.append({"state": s, "kind": "link", "path": chain_to_obj(parent, table)})
        elif roll < 0.45:
            bindings.append({"state": s, "kind": "link", "path": {"from": table}})
        elif roll < 0.55 and parent[table] == "Obj":
            bindings.append({"state": s, "kind": "table", "table": table})
        elif roll < 0.65:
            parts: list = [{"path": chain_to_obj(parent, table)}]
            if use_status and rng.random() < 0.5:
                parts.insert(0, {"table": "Obj", "attribute": "Note", "value": f"n-{s}"})
            bindings.append({"state": s, "kind": "combined", "parts": parts})
    doc: dict = {"object": "Obj", "identity": {"table": "Obj", "key": ["Id"]}, "bindings": bindings}
    bound = {b["state"] for b in bindings}
    unbound = [s for s in olc.states if s not in bound]
    if unbound:
        doc["unbound"] = unbound
    return doc


def random_model(rng: random.Random, tries: int = 200) -> tuple[OlcModel, DbSchema, object, dict]:
    """A valid (life cycle, schema, correspondence) triple and its raw documents."""
    for _ in range(tries):
        olc_doc = random_olc_dict(rng)
        olc = olc_from_dict(olc_doc)
        if validate_olc(olc):
            continue
        schema_doc, parent = random_schema_dict(rng)
        schema = schema_from_dict(schema_doc)
        for _ in range(10):
            cmap_doc = random_correspondence_dict(rng, olc, parent)
            cmap = correspondence_from_dict(cmap_doc, schema, olc)
            if not validate_correspondence(cmap, olc, transition_graph(olc)):
                return olc, schema, cmap, {"olc": olc_doc, "schema": schema_doc, "map": cmap_doc}
    raise RuntimeError("could not sample a valid model")


def write_model(directory: Path, docs: dict) -> dict[str, Path]:
    out = {}
    for name, doc in docs.items():
        p = directory / f"{name}.json"
        p.write_text(json.dumps(doc, indent=2), encoding="utf-8")
        out[name] = p
    return out



TYPE_TAGS = ("string", "integer", "decimal", "date", "boolean")


def random_free_schema_dict(rng: random.Random, max_tables: int = 6) -> dict:
    """Arbitrary valid schemas: composite keys, cycles and parallel foreign keys allowed."""
    n = rng.randint(1, max_tables)
    tables = []
    for i in range(n):
        pk = [f"k{j}" for j in range(rng.randint(1, 2))]
        cols = [{"name": c, "type": rng.choice(("integer", "string", "date"))} for c in pk]
        cols += [{"name": f"c{j}", "type": rng.choice(TYPE_TAGS)} for j in range(rng.randint(0, 3))]
        tables.append({"name": f"T{i}", "columns": cols, "primary_key": pk})
    for j, t in enumerate(tables):
        fks = []
        for f in range(rng.randint(0, 2)):
            ref = rng.choice(tables)
            ref_types = {c["name"]: c["type"] for c in ref["columns"]}
            fk_cols = []
            for r in ref["primary_key"]:
                name = f"fk{f}_{r}"
                t["columns"].append({"name": name, "type": ref_types[r]})
                fk_cols.append(name)
            fks.append({"columns": fk_cols, "ref_table": ref["name"], "ref_columns": list(ref["primary_key"])})
        if fks:
            t["foreign_keys"] = fks
    return {"tables": tables}


def schema_as_ddl(doc: dict, rng: random.Random) -> str:
    """Hand-rolled DDL for ``doc`` with varied spelling, independent of render_ddl."""
    spell = {
        "string": ["VARCHAR(40)", "TEXT", "varchar(8)", "CHAR(3)"],
        "integer": ["INTEGER", "INT", "bigint", "SMALLINT"],
        "decimal": ["DECIMAL(10, 2)", "NUMERIC(8,3)", "decimal"],
        "date": ["DATE", "date"],
        "boolean": ["BOOLEAN", "bool"],
    }
    out = ["-- generated"]
    for t in doc["tables"]:
        items = [f"{c['name']} {rng.choice(spell[c['type']])}" for c in t["columns"]]
        items.append(f"PRIMARY KEY ({', '.join(t['primary_key'])})")
        for fk in t.get("foreign_keys", []):
            items.append(
                f"{rng.choice(['FOREIGN KEY', 'foreign key'])} ({','.join(fk['columns'])}) "
                f"REFERENCES {fk['ref_table']} ({', '.join(fk['ref_columns'])})"
            )
        kw = rng.choice(["CREATE TABLE", "create table", "Create Table"])
        out.append(f"{kw} {t['name']} (\n  " + ",\n  ".join(items) + "\n);")
    return "\n".join(out) + "\n"
