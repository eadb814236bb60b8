from dqrules.analyzer import Dangling, Violation
from dqrules.reporting import aggregate, emit_json, emit_text, parse_report, report_to_dict


def _sample():
    vs = [
        Violation("R3-b", 3, "Order", (2,), {"direction": "forward"}),
        Violation("R1-a", 1, "Order", (1,), {"found": "Lost"}),
        Violation("R3-c", 3, "Order", (1,), {"direction": "reverse"}),
        Violation("R2-a", 2, "Order", (1,), {"old": "Paid", "new": "Closed"}, event_seq=7),
    ]
    dangling = [Dangling("Receipt", (9,), "Order", ("OrderNo",), (99,))]
    return aggregate(vs, {"Order": 4, "Receipt": 3}, 12, dangling=dangling, not_evaluable=[])


def test_counts_and_rates():
    r = _sample()
    assert [t["count"] for t in r.by_template] == [1, 1, 2, 0, 0]
    order = next(t for t in r.by_table if t["table"] == "Order")
    assert order == {"table": "Order", "rows": 4, "violations": 4, "violating_rows": 2, "rate": 0.5}
    receipt = next(t for t in r.by_table if t["table"] == "Receipt")
    assert receipt["rate"] == 0.0
    assert r.totals == {
        "rows_scanned": 7,
        "events_scanned": 12,
        "violations": 4,
        "dangling_rows": 1,
        "not_evaluable_rules": 0,
    }
    assert [v.rule_id for v in r.violations] == ["R1-a", "R2-a", "R3-b", "R3-c"]


def test_rate_is_capped():
    vs = [Violation("R1-a", 1, "T", (i,), {}) for i in range(5)]
    (t,) = aggregate(vs, {}, 0).by_table
    assert t["rows"] == 0 and t["rate"] == 0.0
    (t,) = aggregate(vs, {"T": 2}, 0).by_table
    assert t["rate"] == 1.0


def test_empty_report():
    r = aggregate([], {"T": 3}, 0)
    text = emit_text(r)
    assert "by template: T1=0  T2=0  T3=0  T4=0  T5=0" in text
    assert text.rstrip().endswith("0 violations, 0 dangling rows (3 rows, 0 events scanned)")


def test_json_round_trip():
    r = _sample()
    text = emit_json(r)
    back = parse_report(text)
    assert report_to_dict(back) == report_to_dict(r)
    assert emit_json(back) == text


def test_text_lists_everything():
    text = emit_text(_sample())
    assert "R2-a T2 Order[1] event 7:" in text
    assert "dangling Receipt[9] (OrderNo) -> Order[99]" in text
    assert "table Order: 4 rows, 4 violations, rate 0.5000" in text
