from __future__ import annotations

import pytest

from cepfuse.events import GeoPoint, MicroEvent, MicroEventType
from cepfuse.lang import load_corpus

BASE = 1_400_000_000_000


def ev(id, ts_s=0.0, lat=43.7230, lon=10.3966, source="cam-01", etype=MicroEventType.ObjectRecognition, text="", **attrs):
    """Terse event factory: ``ts_s`` is seconds after a fixed base time."""
    return MicroEvent(
        id=id,
        event_type=etype,
        timestamp=BASE + int(round(ts_s * 1000)),
        position=GeoPoint(lat, lon),
        source_id=source,
        attributes=attrs,
        text=text,
    )


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def rules_by_id(corpus):
    return {r.rule_id: r for r in corpus}


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, whatever the verbosity."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", "") or rep.when != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", ()))
            rows.append((props.get("criterion", rep.nodeid), "PASS" if outcome == "passed" else "FAIL", props.get("detail", "")))
    if rows:
        terminalreporter.section("acceptance criteria")
        for name, status, detail in sorted(rows):
            terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
