"""Node-Star object life cycles and the graph analyses the rule templates need.

A life cycle is a bipartite net of states and processes. Every process links
each of its input states to each of its output states; those links, plus the
back-transitions granted by ``loops``, form the :class:`TransitionGraph` that
all later analysis runs on.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .errors import (
    Diagnostic,
    ModelError,
    check_keys,
    expect_pair_list,
    expect_str,
    expect_str_list,
    load_json_document,
)

Pair = tuple[str, str]


@dataclass(frozen=True)
class ProcessDef:
    name: str
    inputs: frozenset[str]
    outputs: frozenset[str]
    precondition: str | None = None
    postcondition: str | None = None


@dataclass(frozen=True)
class OlcModel:
    """An object life cycle.

    ``loops`` holds pairs ``(s_j, s_i)`` where ``s_j`` is a looped state of
    its predecessor ``s_i``; each grants the back-transition ``s_j -> s_i``.
    ``retained`` holds pairs ``(s_j, s_i)`` for which entering ``s_j`` does
    *not* make the object leave ``s_i``. ``initial`` is the declared initial
    set and may be empty, in which case :meth:`initial_states` falls back to
    the states no process produces.
    """

    object_name: str
    states: tuple[str, ...]
    processes: tuple[ProcessDef, ...] = ()
    loops: frozenset[Pair] = frozenset()
    retained: frozenset[Pair] = frozenset()
    initial: frozenset[str] = frozenset()
    declared_exclusive: frozenset[frozenset[str]] = frozenset()

    def initial_states(self) -> frozenset[str]:
        if self.initial:
            return self.initial
        produced = {s for p in self.processes for s in p.outputs}
        return frozenset(s for s in self.states if s not in produced)

    def state_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    def ordered(self, states: Iterable[str]) -> list[str]:
        """Sort ``states`` by declaration order."""
        index = self.state_index()
        return sorted(states, key=lambda s: (index.get(s, len(index)), s))


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    kind: str  # "process" or "loop"
    leaving: bool


@dataclass(frozen=True)
class TransitionGraph:
    nodes: tuple[str, ...]
    edges: dict[Pair, Edge] = field(hash=False)

    def successors(self, s: str) -> set[str]:
        return {t for (f, t) in self.edges if f == s}

    def edge_set(self) -> set[Pair]:
        return set(self.edges)


# --------------------------------------------------------------------------
# parsing / serialization

_OLC_KEYS = {"object", "states"}
_OLC_OPTIONAL = {"initial", "processes", "loops", "retained", "exclusive"}
_PROCESS_KEYS = {"name", "inputs", "outputs"}
_PROCESS_OPTIONAL = {"pre", "post"}


def parse_olc(document: str) -> OlcModel:
    raw = load_json_document(document, "OLC document")
    return olc_from_dict(raw)


def olc_from_dict(raw: object) -> OlcModel:
    doc = check_keys(raw, "$", _OLC_KEYS, _OLC_OPTIONAL)
    obj = expect_str(doc["object"], "object")
    states = expect_str_list(doc["states"], "states")
    if not states:
        raise ModelError("empty state set", path="states")
    seen: set[str] = set()
    for i, s in enumerate(states):
        if s in seen:
            raise ModelError(f"duplicate state {s!r}", path=f"states[{i}]")
        seen.add(s)

    def known(name: str, path: str) -> str:
        if name not in seen:
            raise ModelError(f"unknown state {name!r}", path=path)
        return name

    initial = [known(s, f"initial[{i}]") for i, s in enumerate(expect_str_list(doc.get("initial", []), "initial"))]

    processes = []
    names: set[str] = set()
    raw_procs = doc.get("processes", [])
    if not isinstance(raw_procs, list):
        raise ModelError("expected a list", path="processes")
    for i, rp in enumerate(raw_procs):
        where = f"processes[{i}]"
        rp = check_keys(rp, where, _PROCESS_KEYS, _PROCESS_OPTIONAL)
        name = expect_str(rp["name"], f"{where}.name")
        if name in names:
            raise ModelError(f"duplicate process {name!r}", path=f"{where}.name")
        names.add(name)
        ins = [known(s, f"{where}.inputs[{j}]") for j, s in enumerate(expect_str_list(rp["inputs"], f"{where}.inputs"))]
        outs = [known(s, f"{where}.outputs[{j}]") for j, s in enumerate(expect_str_list(rp["outputs"], f"{where}.outputs"))]
        if not ins:
            raise ModelError("process has no input states", path=f"{where}.inputs")
        if not outs:
            raise ModelError("process has no output states", path=f"{where}.outputs")
        pre, post = rp.get("pre"), rp.get("post")
        for key, val in (("pre", pre), ("post", post)):
            if val is not None and not isinstance(val, str):
                raise ModelError("expected a string", path=f"{where}.{key}")
        processes.append(ProcessDef(name, frozenset(ins), frozenset(outs), pre, post))

    def pairs(key: str) -> list[Pair]:
        out = expect_pair_list(doc.get(key, []), key)
        for i, (a, b) in enumerate(out):
            known(a, f"{key}[{i}][0]")
            known(b, f"{key}[{i}][1]")
        return out

    return OlcModel(
        object_name=obj,
        states=tuple(states),
        processes=tuple(processes),
        loops=frozenset(pairs("loops")),
        retained=frozenset(pairs("retained")),
        initial=frozenset(initial),
        declared_exclusive=frozenset(frozenset(p) for p in pairs("exclusive")),
    )


def olc_to_dict(model: OlcModel) -> dict:
    index = model.state_index()

    def key(pair: Iterable[str]) -> tuple:
        return tuple(index.get(s, -1) for s in pair)

    doc: dict = {"object": model.object_name, "states": list(model.states)}
    if model.initial:
        doc["initial"] = model.ordered(model.initial)
    doc["processes"] = []
    for p in model.processes:
        rp: dict = {"name": p.name, "inputs": model.ordered(p.inputs), "outputs": model.ordered(p.outputs)}
        if p.precondition is not None:
            rp["pre"] = p.precondition
        if p.postcondition is not None:
            rp["post"] = p.postcondition
        doc["processes"].append(rp)
    if model.loops:
        doc["loops"] = [list(p) for p in sorted(model.loops, key=key)]
    if model.retained:
        doc["retained"] = [list(p) for p in sorted(model.retained, key=key)]
    if model.declared_exclusive:
        ex = [model.ordered(p) for p in model.declared_exclusive]
        doc["exclusive"] = sorted(ex, key=key)
    return doc


def serialize_olc(model: OlcModel) -> str:
    return json.dumps(olc_to_dict(model), indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------
# analysis


def _process_edges(model: OlcModel) -> set[Pair]:
    return {(s, t) for p in model.processes for s in p.inputs for t in p.outputs}


def validate_olc(model: OlcModel) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    states = set(model.states)
    if not model.states:
        diags.append(Diagnostic("empty-state-set", "the life cycle declares no states"))
    if len(states) != len(model.states):
        diags.append(Diagnostic("duplicate-state", "state names are not unique"))
    names = [p.name for p in model.processes]
    if len(set(names)) != len(names):
        diags.append(Diagnostic("duplicate-process", "process names are not unique"))
    for p in model.processes:
        if not p.inputs:
            diags.append(Diagnostic("empty-inputs", "process has no input states", p.name))
        if not p.outputs:
            diags.append(Diagnostic("empty-outputs", "process has no output states", p.name))
        for s in sorted((p.inputs | p.outputs) - states):
            diags.append(Diagnostic("unknown-state", f"process references unknown state {s!r}", p.name))
    for s in sorted(model.initial - states):
        diags.append(Diagnostic("unknown-state", f"initial state {s!r} is not declared", "initial"))

    process_edges = _process_edges(model)
    all_edges = process_edges | set(model.loops)

    def check_pairs(pairs: Iterable, code: str, label: str, edges: set[Pair]) -> None:
        for sj, si in sorted(pairs):
            element = f"{label} ({sj}, {si})"
            if sj not in states or si not in states:
                diags.append(Diagnostic("unknown-state", "pair references an unknown state", element))
            elif sj == si:
                diags.append(Diagnostic("self-pair", "pair members must be distinct", element))
            elif (si, sj) not in edges:
                diags.append(Diagnostic(code, f"{si!r} is not a predecessor of {sj!r}", element))

    check_pairs(model.loops, "loop-target-not-predecessor", "loop", process_edges)
    check_pairs(model.retained, "retained-not-predecessor", "retained", all_edges)
    for pair in sorted(model.declared_exclusive, key=sorted):
        members = sorted(pair)
        element = f"exclusive {tuple(members)}"
        if len(members) != 2:
            diags.append(Diagnostic("self-pair", "exclusive pair members must be distinct", element))
        elif not set(members) <= states:
            diags.append(Diagnostic("unknown-state", "pair references an unknown state", element))
    if states and not model.initial_states():
        diags.append(
            Diagnostic("no-initial-state", "no initial states declared and every state is produced by some process")
        )
    return diags


def transition_graph(model: OlcModel) -> TransitionGraph:
    edges: dict[Pair, Edge] = {}
    for pair in sorted(_process_edges(model)):
        edges[pair] = Edge(pair[0], pair[1], "process", (pair[1], pair[0]) not in model.retained)
    for sj, si in sorted(model.loops):
        if (sj, si) not in edges:
            edges[(sj, si)] = Edge(sj, si, "loop", (si, sj) not in model.retained)
    return TransitionGraph(model.states, edges)


def _require_node(graph: TransitionGraph, s: str) -> None:
    if s not in graph.nodes:
        raise KeyError(f"unknown state {s!r}")


def predecessors(graph: TransitionGraph, s: str) -> set[str]:
    _require_node(graph, s)
    return {f for (f, t) in graph.edges if t == s}


def reachable(graph: TransitionGraph, s: str) -> set[str]:
    """States reachable from ``s`` through at least one edge."""
    _require_node(graph, s)
    succ: dict[str, list[str]] = {n: [] for n in graph.nodes}
    for f, t in graph.edges:
        succ[f].append(t)
    seen: set[str] = set()
    queue = deque(succ[s])
    while queue:
        n = queue.popleft()
        if n in seen:
            continue
        seen.add(n)
        queue.extend(succ[n])
    return seen


def dominators(graph: TransitionGraph, initials: Iterable[str]) -> dict[str, frozenset[str]]:
    """Iterative dataflow dominators with a virtual entry feeding every initial.

    States unreachable from the initials map to the full node set.
    """
    initials = set(initials)
    if not initials:
        raise ValueError("empty initial set")
    for s in initials:
        _require_node(graph, s)
    nodes = list(graph.nodes)
    everything = frozenset(nodes)
    preds: dict[str, list[str]] = {n: [] for n in nodes}
    for f, t in graph.edges:
        preds[t].append(f)

    dom: dict[str, frozenset[str]] = {n: everything for n in nodes}
    for s in initials:
        dom[s] = frozenset({s})
    changed = True
    while changed:
        changed = False
        for n in nodes:
            if n in initials:
                continue
            incoming = [dom[p] for p in preds[n]]
            new = frozenset.intersection(*incoming) | {n} if incoming else everything
            if new != dom[n]:
                dom[n] = new
                changed = True
    # a node whose preds are all unreachable keeps "everything"; fix up to the convention
    live = set(initials)
    for s in initials:
        live |= reachable(graph, s)
    return {n: (dom[n] if n in live else everything) for n in nodes}


def exclusive_pairs(model: OlcModel, graph: TransitionGraph) -> set[frozenset[str]]:
    pairs = {p for p in model.declared_exclusive if len(p) == 2}
    reach = {n: reachable(graph, n) for n in graph.nodes}
    for s in graph.nodes:
        leaving = sorted(t for (f, t), e in graph.edges.items() if f == s and t != s and e.leaving)
        for i, a in enumerate(leaving):
            for b in leaving[i + 1 :]:
                if a not in reach[b] and b not in reach[a]:
                    pairs.add(frozenset((a, b)))
    return pairs


def coexisting_pairs(model: OlcModel, graph: TransitionGraph) -> set[frozenset[str]]:
    """Pairs of distinct states one object may hold at the same time.

    Residency only splits across a retained edge ``x -> y``: afterwards one
    token continues from ``x`` and another from ``y``. This over-approximates
    by pairing everything reachable from either side.
    """
    initials = model.initial_states()
    live: set[str] = set(initials)
    for s in initials:
        live |= reachable(graph, s)
    out: set[frozenset[str]] = set()
    for (x, y), edge in graph.edges.items():
        if edge.leaving or x not in live:
            continue
        left = reachable(graph, x) | {x}
        right = reachable(graph, y) | {y}
        out |= {frozenset((a, b)) for a in left for b in right if a != b}
    return out
