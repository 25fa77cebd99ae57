"""Three-phase fusion: syntactic check and priority, merging, trust analysis.

:class:`FusionPipeline` composes the phases around a
:class:`~cepfuse.engine.CorrelationEngine`.  Every rejected input produces
exactly one :class:`RejectionRecord`.
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .engine import DEFAULT_LATENESS_MS, CorrelationEngine, InvariantError, Match
from .events import (
    DEFAULT_UNITS,
    ComplexEvent,
    GeoPoint,
    MicroEvent,
    MicroEventType,
    SecureEvent,
    Units,
    WireFormatError,
    centroid,
    encode_attrs,
    parse_record,
)
from .lang.ast import Rule, RuleSet
from .lang.corpus import group_rule_sets

CLOCK_SKEW_MS = 60_000

SYNTACTIC = "syntactic"
TRUST = "trust"


class Clock:
    """Wall-clock milliseconds derived from the monotonic counter.

    The epoch offset is sampled once, so wall readings never go backwards.
    """

    def __init__(self):
        self._epoch_ms = time.time_ns() // 1_000_000
        self._base_ns = time.perf_counter_ns()

    def mono_ns(self) -> int:
        return time.perf_counter_ns()

    def wall_ms(self) -> int:
        return self._epoch_ms + (time.perf_counter_ns() - self._base_ns) // 1_000_000


@dataclass(frozen=True)
class RejectionRecord:
    stage: str
    reason: str
    offending_id: str
    trust: float | None = None


class EventRejected(Exception):
    def __init__(self, record: RejectionRecord):
        self.record = record
        super().__init__(f"{record.stage}: {record.reason} ({record.offending_id})")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class PriorityConfig:
    keyword_priorities: dict[str, int] = field(default_factory=dict)
    default_priority: int = 0

    def __post_init__(self) -> None:
        normalized: dict[str, int] = {}
        for kw, p in self.keyword_priorities.items():
            kw = " ".join(kw.split()).lower()
            if not kw:
                raise ValueError("keywords must be non-empty")
            if isinstance(p, bool) or not isinstance(p, int) or p < 0:
                raise ValueError(f"priority for {kw!r} must be a non-negative integer")
            normalized[kw] = max(p, normalized.get(kw, 0))
        if self.default_priority < 0:
            raise ValueError("default priority must be non-negative")
        self.keyword_priorities = normalized
        ordered = sorted(normalized.items(), key=lambda kv: (-kv[1], kv[0]))
        self._patterns = [
            (re.compile(r"(?<!\w)" + re.escape(kw).replace(r"\ ", r"\s+") + r"(?!\w)", re.IGNORECASE), p)
            for kw, p in ordered
        ]

    def priority_of(self, texts: Iterable[str]) -> int:
        """Highest priority among configured keywords found as whole words."""
        texts = [t for t in texts if t]
        for pattern, p in self._patterns:
            if p <= self.default_priority:
                break
            if any(pattern.search(t) for t in texts):
                return p
        return self.default_priority

    @classmethod
    def loads(cls, text: str) -> "PriorityConfig":
        """Parse ``keyword priority`` lines; ``* N`` sets the default priority."""
        table: dict[str, int] = {}
        default = 0
        for no, line in _config_lines(text):
            kw, _, value = line.rpartition(" ")
            kw = kw.strip()
            try:
                p = int(value)
            except ValueError:
                raise ValueError(f"line {no}: priority must be an integer") from None
            if not kw:
                raise ValueError(f"line {no}: expected 'keyword priority'")
            if kw == "*":
                default = p
            else:
                table[kw] = p
        return cls(table, default)

    @classmethod
    def load(cls, path: str | Path) -> "PriorityConfig":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def mean_trust(weights: Sequence[float]) -> float:
    return math.fsum(weights) / len(weights)


def min_trust(weights: Sequence[float]) -> float:
    return min(weights)


def noisy_or_trust(weights: Sequence[float]) -> float:
    p = 1.0
    for w in weights:
        p *= 1.0 - w
    return 1.0 - p


@dataclass
class TrustRegistry:
    source_weights: dict[str, float] = field(default_factory=dict)
    default_weight: float = 0.5
    threshold: float = 0.5
    aggregate: Callable[[Sequence[float]], float] = mean_trust

    def __post_init__(self) -> None:
        for name, w in [*self.source_weights.items(), ("default weight", self.default_weight), ("threshold", self.threshold)]:
            if not (isinstance(w, (int, float)) and 0.0 <= w <= 1.0):
                raise ValueError(f"{name}: weight must lie in [0, 1]")

    def weight(self, source_id: str) -> float:
        return self.source_weights.get(source_id, self.default_weight)

    @classmethod
    def loads(cls, text: str, threshold: float = 0.5) -> "TrustRegistry":
        """Parse ``source_id weight`` lines; ``* w`` sets the default weight."""
        weights: dict[str, float] = {}
        default = 0.5
        for no, line in _config_lines(text):
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {no}: expected 'source_id weight'")
            try:
                w = float(parts[1])
            except ValueError:
                raise ValueError(f"line {no}: weight must be a number") from None
            if parts[0] == "*":
                default = w
            else:
                weights[parts[0]] = w
        return cls(weights, default, threshold)

    @classmethod
    def load(cls, path: str | Path, threshold: float = 0.5) -> "TrustRegistry":
        return cls.loads(Path(path).read_text(encoding="utf-8"), threshold)


def _config_lines(text: str):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


# --------------------------------------------------------------------------
# phases
# --------------------------------------------------------------------------

_REQUIRED = ("id", "type", "ts_ms", "lat", "lon", "source")


def _reject(reason: str, rid: object) -> EventRejected:
    return EventRejected(RejectionRecord(SYNTACTIC, reason, str(rid) if rid is not None else "?"))


def syntactic_check(
    raw: Mapping | MicroEvent,
    config: PriorityConfig,
    now_ms: int,
    skew_ms: int = CLOCK_SKEW_MS,
) -> MicroEvent:
    """Validate a raw record (or an event) and assign its priority.

    Raises :class:`EventRejected` with a field-specific reason.
    """
    if isinstance(raw, MicroEvent):
        ev = raw
        rid = ev.id
    else:
        rid = raw.get("id")
        for name in _REQUIRED:
            if raw.get(name) is None or raw.get(name) == "":
                raise _reject(f"missing field {name}", rid)
        ts = raw["ts_ms"]
        if isinstance(ts, bool) or not isinstance(ts, int):
            raise _reject("ts_ms must be an integer", rid)
        for name, limit in (("lat", 90.0), ("lon", 180.0)):
            v = raw[name]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise _reject(f"{name} must be a finite number", rid)
            if not -limit <= v <= limit:
                raise _reject(f"{name} out of range", rid)
        try:
            etype = MicroEventType(raw["type"])
        except (ValueError, TypeError):
            raise _reject(f"unknown event type {raw['type']!r}", rid) from None
        attrs = raw.get("attrs") or {}
        if not isinstance(attrs, Mapping) or any(
            isinstance(v, bool) or not isinstance(v, (str, int)) for v in attrs.values()
        ):
            raise _reject("attribute values must be strings or integers", rid)
        text = raw.get("text", "")
        if not isinstance(text, str):
            raise _reject("text must be a string", rid)
        try:
            ev = MicroEvent(
                id=str(rid),
                event_type=etype,
                timestamp=ts,
                position=GeoPoint(float(raw["lat"]), float(raw["lon"])),
                source_id=str(raw["source"]),
                attributes=dict(attrs),
                text=text,
            )
        except ValueError as exc:
            raise _reject(str(exc), rid) from None
    if ev.timestamp <= 0:
        raise _reject("timestamp before epoch", rid)
    if ev.timestamp > now_ms + skew_ms:
        raise _reject("timestamp in the future", rid)
    texts = [ev.text, *(v for v in ev.attributes.values() if isinstance(v, str))]
    priority = config.priority_of(texts)
    if priority == ev.priority:
        return ev
    return MicroEvent(ev.id, ev.event_type, ev.timestamp, ev.position, ev.source_id, ev.attributes, ev.text, priority)


def merge(match: Match, rule: Rule, detection_time: int) -> ComplexEvent:
    names = rule.binding_names
    constituents = tuple(match.assignment[n] for n in names)
    stamps = [e.timestamp for e in constituents]
    return ComplexEvent(
        complex_type=rule.complex_type,
        rule_id=rule.rule_id,
        bindings=names,
        constituents=constituents,
        detection_time=detection_time,
        event_time_span=(min(stamps), max(stamps)),
        centroid=centroid(constituents),
        priority=max(e.priority for e in constituents),
    )


def trust_analysis(ce: ComplexEvent, reg: TrustRegistry) -> SecureEvent:
    """Score a complex event by the weights of its distinct sources.

    Raises :class:`EventRejected` (stage ``trust``) below the threshold; the
    record carries the computed score.
    """
    sources = sorted({e.source_id for e in ce.constituents})
    trace = tuple((s, reg.weight(s)) for s in sources)
    trust = reg.aggregate([w for _, w in trace])
    if trust < reg.threshold:
        fp = ",".join(ce.fingerprint)
        raise EventRejected(RejectionRecord(TRUST, f"trust {trust:.6g} below threshold {reg.threshold:g}", f"{ce.rule_id}:{fp}", trust))
    return SecureEvent(ce, trust, trace)


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------


@dataclass
class Counters:
    received: int = 0
    accepted: int = 0
    rejected_syntactic: int = 0
    complex_events: int = 0
    secure_events: int = 0
    rejected_trust: int = 0


class FusionPipeline:
    """Syntactic check -> correlation/merge -> trust analysis, in that order.

    ``on_complex`` is called with every complex event as it is merged, before
    trust analysis; the latency harness hooks in there.
    """

    def __init__(
        self,
        priorities: PriorityConfig | None = None,
        trust: TrustRegistry | None = None,
        *,
        engine: CorrelationEngine | None = None,
        lateness_ms: int = DEFAULT_LATENESS_MS,
        units: Units = DEFAULT_UNITS,
        clock: Clock | None = None,
        skew_ms: int = CLOCK_SKEW_MS,
        on_complex: Callable[[ComplexEvent], None] | None = None,
    ):
        self.priorities = priorities or PriorityConfig()
        self.trust = trust or TrustRegistry()
        self.engine = engine or CorrelationEngine(lateness_ms=lateness_ms, units=units)
        self.clock = clock or Clock()
        self.skew_ms = skew_ms
        self.on_complex = on_complex
        self.counters = Counters()
        self.rejections: list[RejectionRecord] = []
        self._rules: dict[str, Rule] = {}

    # -- configuration -------------------------------------------------------
    def register_ruleset(self, rs: RuleSet) -> list[str]:
        ids = self.engine.register_ruleset(rs)
        for r in rs.rules:
            self._rules[r.rule_id] = r
        return ids

    def register_rules(self, rules: Iterable[Rule]) -> list[str]:
        ids: list[str] = []
        for rs in group_rule_sets(list(rules)):
            ids += self.register_ruleset(rs)
        return ids

    def deregister_ruleset(self, name: str) -> None:
        self.engine.deregister_ruleset(name)

    # -- processing ----------------------------------------------------------
    def process(self, raw: Mapping | MicroEvent) -> list[SecureEvent]:
        self.counters.received += 1
        try:
            ev = syntactic_check(raw, self.priorities, self.clock.wall_ms(), self.skew_ms)
        except EventRejected as exc:
            self.counters.rejected_syntactic += 1
            self.rejections.append(exc.record)
            return []
        self.counters.accepted += 1
        matches = self.engine.ingest(ev)
        if not matches:
            return []
        out: list[SecureEvent] = []
        for m in matches:
            ce = merge(m, self._rules[m.rule_id], self.clock.wall_ms())
            self.counters.complex_events += 1
            if self.on_complex is not None:
                self.on_complex(ce)
            try:
                se = trust_analysis(ce, self.trust)
            except EventRejected as exc:
                self.counters.rejected_trust += 1
                self.rejections.append(exc.record)
                continue
            self.counters.secure_events += 1
            out.append(se)
        return out

    def process_line(self, line: str) -> list[SecureEvent]:
        """Decode one wire line and process it; undecodable lines are syntactic rejections."""
        try:
            rec = parse_record(line)
        except WireFormatError as exc:
            self.counters.received += 1
            self.counters.rejected_syntactic += 1
            self.rejections.append(RejectionRecord(SYNTACTIC, str(exc), "?"))
            return []
        return self.process(rec)

    def audit(self) -> None:
        """Check the funnel identities; raises :class:`InvariantError`."""
        c = self.counters
        if c.received != c.accepted + c.rejected_syntactic:
            raise InvariantError(f"received {c.received} != accepted {c.accepted} + rejected {c.rejected_syntactic}")
        if c.accepted != self.engine.ingested:
            raise InvariantError(f"accepted {c.accepted} != engine ingested {self.engine.ingested}")
        if c.complex_events != c.secure_events + c.rejected_trust:
            raise InvariantError(
                f"complex {c.complex_events} != secure {c.secure_events} + trust rejections {c.rejected_trust}"
            )
        if len(self.rejections) != c.rejected_syntactic + c.rejected_trust:
            raise InvariantError("rejection records out of step with counters")


def secure_event_record(se: SecureEvent) -> dict:
    ce = se.inner
    attrs: dict = {}
    for e in ce.constituents:
        for k, v in e.attributes.items():
            attrs.setdefault(k, v)
    return {
        "id": f"{ce.rule_id}:{','.join(ce.fingerprint)}",
        "type": ce.complex_type,
        "ts_ms": ce.event_time_span[1],
        "lat": ce.centroid.lat,
        "lon": ce.centroid.lon,
        "source": "epm",
        "attrs": encode_attrs(attrs),
        "text": " | ".join(e.text for e in ce.constituents if e.text),
        "priority": ce.priority,
        "rule_id": ce.rule_id,
        "constituents": list(ce.constituent_ids),
        "span_ms": ce.span_ms,
        "detection_time": ce.detection_time,
        "trust": se.trust,
        "source_trace": [[s, w] for s, w in se.source_trace],
    }


def encode_secure_event(se: SecureEvent) -> str:
    return json.dumps(secure_event_record(se), ensure_ascii=False, separators=(",", ":"))


__all__ = [
    "Clock",
    "Counters",
    "EventRejected",
    "FusionPipeline",
    "PriorityConfig",
    "RejectionRecord",
    "TrustRegistry",
    "encode_secure_event",
    "mean_trust",
    "merge",
    "min_trust",
    "noisy_or_trust",
    "syntactic_check",
    "trust_analysis",
]
