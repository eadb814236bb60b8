"""Violation statistics and report rendering."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .analyzer import Analysis, Dangling, Violation

TEMPLATES = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[Violation, ...]
    by_rule: tuple[dict, ...]
    by_template: tuple[dict, ...]
    by_table: tuple[dict, ...]
    totals: dict = field(hash=False)
    dangling: tuple[Dangling, ...] = ()
    not_evaluable: tuple[str, ...] = ()


def aggregate(
    violations: list[Violation],
    snapshot_sizes: dict[str, int],
    event_count: int,
    *,
    dangling: list[Dangling] = (),
    not_evaluable: list[str] = (),
) -> ViolationReport:
    violations = tuple(sorted(violations, key=Violation.sort_key))
    per_rule = Counter((v.rule_id, v.template, v.table) for v in violations)
    by_rule = tuple(
        {"rule_id": rid, "template": tpl, "table": table, "count": n}
        for (rid, tpl, table), n in sorted(per_rule.items())
    )
    per_template = Counter(v.template for v in violations)
    by_template = tuple({"template": t, "count": per_template.get(t, 0)} for t in TEMPLATES)
    by_table = []
    for table in sorted(set(snapshot_sizes) | {v.table for v in violations}):
        rows = snapshot_sizes.get(table, 0)
        hits = [v for v in violations if v.table == table]
        keys = {v.key for v in hits}
        # distinct offending rows, so the rate stays a fraction of the table
        rate = round(min(1.0, len(keys) / rows), 4) if rows else 0.0
        by_table.append({"table": table, "rows": rows, "violations": len(hits), "violating_rows": len(keys), "rate": rate})
    totals = {
        "rows_scanned": sum(snapshot_sizes.values()),
        "events_scanned": event_count,
        "violations": len(violations),
        "dangling_rows": len(dangling),
        "not_evaluable_rules": len(not_evaluable),
    }
    return ViolationReport(
        violations, by_rule, by_template, tuple(by_table), totals, tuple(dangling), tuple(not_evaluable)
    )


def report_from_analysis(analysis: Analysis) -> ViolationReport:
    return aggregate(
        analysis.violations,
        analysis.rows,
        analysis.events,
        dangling=analysis.dangling,
        not_evaluable=analysis.not_evaluable,
    )


def report_to_dict(report: ViolationReport) -> dict:
    return {
        "totals": report.totals,
        "by_rule": list(report.by_rule),
        "by_template": list(report.by_template),
        "by_table": list(report.by_table),
        "violations": [
            {
                "rule_id": v.rule_id,
                "template": v.template,
                "table": v.table,
                "key": list(v.key),
                "event_seq": v.event_seq,
                "detail": v.detail,
            }
            for v in report.violations
        ],
        "dangling": [
            {"table": d.table, "key": list(d.key), "ref_table": d.ref_table, "columns": list(d.columns), "value": list(d.value)}
            for d in report.dangling
        ],
        "not_evaluable": list(report.not_evaluable),
    }


def emit_json(report: ViolationReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


def parse_report(text: str) -> ViolationReport:
    doc = json.loads(text)
    return ViolationReport(
        violations=tuple(
            Violation(v["rule_id"], v["template"], v["table"], tuple(v["key"]), v["detail"], v["event_seq"])
            for v in doc["violations"]
        ),
        by_rule=tuple(doc["by_rule"]),
        by_template=tuple(doc["by_template"]),
        by_table=tuple(doc["by_table"]),
        totals=doc["totals"],
        dangling=tuple(
            Dangling(d["table"], tuple(d["key"]), d["ref_table"], tuple(d["columns"]), tuple(d["value"]))
            for d in doc.get("dangling", [])
        ),
        not_evaluable=tuple(doc.get("not_evaluable", [])),
    )


def _fmt_key(key: tuple) -> str:
    return ",".join(str(k) for k in key)


def emit_text(report: ViolationReport) -> str:
    lines = []
    rid_w = max([len("rule id")] + [len(r["rule_id"]) for r in report.by_rule])
    tab_w = max([len("table")] + [len(r["table"]) for r in report.by_rule])
    lines.append(f"{'rule id':<{rid_w}}  {'template':>8}  {'table':<{tab_w}}  {'count':>7}")
    lines.append(f"{'-' * rid_w}  {'-' * 8}  {'-' * tab_w}  {'-' * 7}")
    for r in report.by_rule:
        lines.append(f"{r['rule_id']:<{rid_w}}  {r['template']:>8}  {r['table']:<{tab_w}}  {r['count']:>7}")
    lines.append("")
    lines.append("by template: " + "  ".join(f"T{t['template']}={t['count']}" for t in report.by_template))
    for t in report.by_table:
        lines.append(f"table {t['table']}: {t['rows']} rows, {t['violations']} violations, rate {t['rate']:.4f}")
    if report.violations:
        lines.append("")
    for v in report.violations:
        seq = f" event {v.event_seq}" if v.event_seq is not None else ""
        detail = json.dumps(v.detail, ensure_ascii=False, sort_keys=True)
        lines.append(f"{v.rule_id} T{v.template} {v.table}[{_fmt_key(v.key)}]{seq}: {detail}")
    for d in report.dangling:
        lines.append(
            f"dangling {d.table}[{_fmt_key(d.key)}] ({', '.join(d.columns)}) -> {d.ref_table}[{_fmt_key(d.value)}]"
        )
    for rid in report.not_evaluable:
        lines.append(f"not evaluable without a change log: {rid}")
    t = report.totals
    lines.append("")
    lines.append(
        f"{t['violations']} violations, {t['dangling_rows']} dangling rows "
        f"({t['rows_scanned']} rows, {t['events_scanned']} events scanned)"
    )
    return "\n".join(lines) + "\n"
