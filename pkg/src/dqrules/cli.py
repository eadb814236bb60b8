"""``dq`` command line: check-model, derive, validate, gen.

Exit codes: 0 clean, 1 findings (diagnostics or violations), 2 operational
failure (unreadable or unparseable input, I/O).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .analyzer import analyze, load_changelog, load_snapshot
from .correspondence import parse_correspondence, validate_correspondence
from .errors import DQError, ModelError
from .generator import GenerationError, generate, parse_inject_spec
from .olc import parse_olc, transition_graph, validate_olc
from .reporting import emit_json, emit_text, report_from_analysis
from .rules import DerivationError, derive_all, file_digest, load_rules, render_rule, save_rules, stale_inputs
from .schema import load_schema_text, validate_schema

EXIT_OK, EXIT_FINDINGS, EXIT_ERROR = 0, 1, 2


class UsageError(DQError):
    pass


@dataclass
class RunConfig:
    olc: Path | None = None
    schema: Path | None = None
    schema_format: str | None = None
    map: Path | None = None
    rules: Path | None = None
    data: Path | None = None
    log: Path | None = None
    manifest: Path | None = None
    format: str = "text"
    strict_null: bool = False
    allow_missing: set[str] = field(default_factory=set)
    max_hops: int = 3
    seed: int = 0
    count: int = 100
    inject: str | None = None

    def need(self, *names: str) -> None:
        missing = [f"--{n.replace('_', '-')}" for n in names if getattr(self, n) is None]
        if missing:
            raise UsageError(f"missing required option(s): {', '.join(missing)}")
        if not 1 <= self.max_hops <= 10:
            raise UsageError("--max-hops must be between 1 and 10")
        if self.count < 0:
            raise UsageError("--count must be >= 0")


def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _schema_format(cfg: RunConfig, path: Path) -> str:
    if cfg.schema_format:
        return cfg.schema_format
    return "sql" if Path(path).suffix.lower() in (".sql", ".ddl") else "json"


def _parse(path: Path, parse):
    try:
        return parse(_read(path))
    except ModelError as exc:
        if exc.source is None:
            exc.source = str(path)
        raise


def _load_schema(cfg: RunConfig, path: Path, *, check: bool = True):
    return _parse(path, lambda text: load_schema_text(text, _schema_format(cfg, path), check=check))


def _load_model(cfg: RunConfig, *, check_schema: bool = True):
    olc = _parse(cfg.olc, parse_olc)
    schema = _load_schema(cfg, cfg.schema, check=check_schema)
    cmap = _parse(cfg.map, lambda text: parse_correspondence(text, schema, olc, max_hops=cfg.max_hops))
    return olc, schema, cmap


def cmd_check_model(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    cfg.need("olc", "schema", "map")
    olc, schema, cmap = _load_model(cfg, check_schema=False)
    diags = [("olc", d) for d in validate_olc(olc)] + [("schema", d) for d in validate_schema(schema)]
    diags += [("correspondence", d) for d in validate_correspondence(cmap, olc, transition_graph(olc))]
    for where, d in diags:
        print(f"{where}: {d}", file=out)
    print(f"{len(diags)} diagnostics", file=out)
    return EXIT_FINDINGS if diags else EXIT_OK


def cmd_derive(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    cfg.need("olc", "schema", "map", "rules")
    olc, schema, cmap = _load_model(cfg)
    provenance = {
        "olc_digest": file_digest(cfg.olc),
        "schema_digest": file_digest(cfg.schema),
        "correspondence_digest": file_digest(cfg.map),
        "sources": {"olc": str(cfg.olc), "schema": str(cfg.schema), "correspondence": str(cfg.map)},
    }
    try:
        ruleset = derive_all(olc, schema, cmap, provenance=provenance)
    except DerivationError as exc:
        for d in exc.diagnostics:
            print(d, file=out)
        return EXIT_FINDINGS
    try:
        save_rules(ruleset, cfg.rules)
    except OSError as exc:
        raise UsageError(f"cannot write {cfg.rules}: {exc.strerror}") from None
    for rule in ruleset.rules:
        print(f"{rule.id}  T{rule.template} {rule.variant}: {render_rule(rule)}", file=out)
    print(f"{len(ruleset.rules)} rules written to {cfg.rules}", file=out)
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    cfg.need("rules", "data")
    ruleset = load_rules(cfg.rules)
    sources = ruleset.provenance.get("sources", {})
    given = {"olc": cfg.olc, "schema": cfg.schema, "correspondence": cfg.map}
    paths = {name: Path(given[name] or sources[name]) for name in given if given[name] or name in sources}
    if "schema" not in paths:
        raise UsageError("missing required option: --schema (not recorded in the rule repository)")
    current = {name: file_digest(p) for name, p in paths.items() if p.exists()}
    changed = stale_inputs(ruleset, current)
    if changed:
        print(f"warning: rule repository is stale; changed since derivation: {', '.join(changed)}", file=err)
    schema = _load_schema(cfg, paths["schema"])
    snapshot = load_snapshot(cfg.data, schema, cfg.allow_missing)
    changelog = load_changelog(cfg.log, schema) if cfg.log else None
    analysis = analyze(ruleset, snapshot, changelog, strict_null=cfg.strict_null)
    report = report_from_analysis(analysis)
    out.write(emit_json(report) if cfg.format == "json" else emit_text(report))
    return EXIT_FINDINGS if (report.violations or report.dangling) else EXIT_OK


def cmd_gen(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    cfg.need("olc", "schema", "map", "data")
    olc, schema, cmap = _load_model(cfg)
    try:
        inject = parse_inject_spec(cfg.inject)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        data = generate(olc, schema, cmap, seed=cfg.seed, count=cfg.count, inject=inject)
    except DerivationError as exc:
        for d in exc.diagnostics:
            print(d, file=out)
        return EXIT_FINDINGS
    try:
        data.write(cfg.data, cfg.log, cfg.manifest)
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc.strerror}") from None
    n = len(data.manifest["injected"])
    print(f"wrote {cfg.count} clean objects and {n} injected violations to {cfg.data}", file=out)
    return EXIT_OK


COMMANDS = {"check-model": cmd_check_model, "derive": cmd_derive, "validate": cmd_validate, "gen": cmd_gen}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dq", description="Derive and check dynamic integrity rules.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--olc", type=Path)
        p.add_argument("--schema", type=Path)
        p.add_argument("--schema-format", choices=["json", "sql"])
        p.add_argument("--map", type=Path)
        p.add_argument("--rules", type=Path)
        p.add_argument("--data", type=Path)
        p.add_argument("--log", type=Path)
        p.add_argument("--manifest", type=Path)
        p.add_argument("--format", choices=["text", "json"], default="text")
        p.add_argument("--strict-null", action="store_true")
        p.add_argument("--allow-missing", action="append", default=[], metavar="TABLE[,TABLE]")
        p.add_argument("--max-hops", type=int, default=3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--count", type=int, default=100)
        p.add_argument("--inject", metavar="SPEC")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    allow = {t.strip() for item in ns.allow_missing for t in item.split(",") if t.strip()}
    return RunConfig(
        olc=ns.olc,
        schema=ns.schema,
        schema_format=ns.schema_format,
        map=ns.map,
        rules=ns.rules,
        data=ns.data,
        log=ns.log,
        manifest=ns.manifest,
        format=ns.format,
        strict_null=ns.strict_null,
        allow_missing=allow,
        max_hops=ns.max_hops,
        seed=ns.seed,
        count=ns.count,
        inject=ns.inject,
    )


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        return COMMANDS[ns.command](cfg)
    except (DQError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
