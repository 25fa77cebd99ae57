"""Continuous correlation of micro-events against registered rules.

Each active rule gets a :class:`Listener` holding one time-ordered buffer per
event binding.  On every ingest the new event is joined against the other
bindings' buffers; assignments satisfying the window and the post-filter are
emitted once per distinct constituent set.

Matching is non-consuming: an event may take part in any number of matches.
The window is the maximum event-time span of an assignment.
"""

from __future__ import annotations

import itertools
import logging
import math
import operator
from array import array
from collections import Counter
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from . import kernels as _default_kernels
from .events import DEFAULT_UNITS, MicroEvent, Units, distance_gps, time_diff
from .lang.analysis import errors as _errors
from .lang.analysis import evaluate, validate_rule
from .lang.ast import And, DistanceLt, FnEq, NumCmp, Or, Predicate, Rule, RuleSet, TimeDiffLt

logger = logging.getLogger(__name__)

DEFAULT_LATENESS_MS = 10_000

Fingerprint = tuple[str, ...]


class DuplicateRuleError(ValueError):
    pass


class InvariantError(AssertionError):
    """An engine or pipeline invariant was violated at runtime."""


@dataclass(frozen=True)
class Match:
    rule_id: str
    assignment: Mapping[str, MicroEvent]
    fingerprint: Fingerprint

    @property
    def events(self) -> tuple[MicroEvent, ...]:
        return tuple(self.assignment.values())


def fingerprint_of(events: Iterable[MicroEvent]) -> Fingerprint:
    return tuple(sorted(e.id for e in events))


_OPS = {"<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge, "=": operator.eq}


def compile_predicate(p: Predicate) -> Callable[[Mapping], bool]:
    """Turn a predicate tree into a closure over an attribute mapping."""
    if isinstance(p, FnEq):
        name, lit = p.name, p.literal

        def fn_eq(attrs):
            return attrs.get(name) == lit

        return fn_eq
    if isinstance(p, NumCmp):
        name, value, op = p.name, p.value, _OPS[p.op]

        def num_cmp(attrs):
            v = attrs.get(name)
            return type(v) is int and op(v, value)

        return num_cmp
    left, right = compile_predicate(p.left), compile_predicate(p.right)
    if isinstance(p, And):
        return lambda attrs: left(attrs) and right(attrs)
    if isinstance(p, Or):
        return lambda attrs: left(attrs) or right(attrs)
    raise TypeError(f"not a predicate: {p!r}")


class _Buffer:
    """Events of one binding, kept sorted by event time in parallel arrays."""

    __slots__ = ("ts", "lat", "lon", "events")

    def __init__(self):
        self.ts = array("q")
        self.lat = array("d")
        self.lon = array("d")
        self.events: list[MicroEvent] = []

    def __len__(self) -> int:
        return len(self.events)

    def insert(self, e: MicroEvent) -> None:
        i = bisect_right(self.ts, e.timestamp)
        self.ts.insert(i, e.timestamp)
        self.lat.insert(i, e.position.lat)
        self.lon.insert(i, e.position.lon)
        self.events.insert(i, e)

    def evict_before(self, t: int) -> int:
        if not self.events or self.ts[0] >= t:
            return 0
        k = bisect_left(self.ts, t)
        del self.ts[:k]
        del self.lat[:k]
        del self.lon[:k]
        del self.events[:k]
        return k


class Listener:
    """Runtime state for one rule."""

    def __init__(self, rule: Rule, lateness_ms: int, units: Units, kernels=None):
        self.rule = rule
        self.lateness_ms = lateness_ms
        self.units = units
        self.kernels = kernels or _default_kernels
        self.window_ms = rule.window_ms
        self.names = rule.binding_names
        k = len(self.names)
        self.predicates = [compile_predicate(b.predicate) for b in rule.bindings]
        self.buffers = [_Buffer() for _ in range(k)]
        self.emitted: dict[Fingerprint, int] = {}
        self._prune_at = 1024
        self.dropped_late = 0
        self.active = True
        index = {n: i for i, n in enumerate(self.names)}
        inf = math.inf
        self.pair_dt = [[inf] * k for _ in range(k)]
        self.pair_km = [[inf] * k for _ in range(k)]
        for c in rule.post_filter:
            a, b = index[c.a], index[c.b]
            table = self.pair_dt if isinstance(c, TimeDiffLt) else self.pair_km
            table[a][b] = table[b][a] = min(table[a][b], c.threshold)

    @property
    def rule_id(self) -> str:
        return self.rule.rule_id

    def watermark(self, max_ts: int) -> int:
        return max_ts - self.window_ms - self.lateness_ms

    def buffered(self) -> int:
        return sum(len(b) for b in self.buffers)

    def evict(self, max_ts: int) -> None:
        wm = self.watermark(max_ts)
        for buf in self.buffers:
            buf.evict_before(wm)
        if len(self.emitted) >= self._prune_at:
            self.emitted = {fp: t for fp, t in self.emitted.items() if t >= wm}
            self._prune_at = max(1024, 2 * len(self.emitted))

    def ingest(self, e: MicroEvent, max_ts: int) -> list[Match]:
        """Join ``e`` against the buffers; ``max_ts`` is the latest event time seen before ``e``."""
        attrs = e.attributes
        slots = [i for i, p in enumerate(self.predicates) if p(attrs)]
        if not slots:
            return []
        if e.timestamp < self.watermark(max_ts):
            self.dropped_late += 1
            return []
        out: list[Match] = []
        for i in slots:
            assigned: list[MicroEvent | None] = [None] * len(self.names)
            assigned[i] = e
            rest = [j for j in range(len(self.names)) if j != i]
            self._extend(i, assigned, rest, e.timestamp, e.timestamp, out)
        for i in slots:
            self.buffers[i].insert(e)
        return out

    def _extend(self, anchor: int, assigned, rest, lo_ts, hi_ts, out) -> None:
        if not rest:
            self._emit(assigned, lo_ts, hi_ts, out)
            return
        j, rest = rest[0], rest[1:]
        buf = self.buffers[j]
        if not buf.events:
            return
        e = assigned[anchor]
        w = self.window_ms
        lo = bisect_left(buf.ts, hi_ts - w)
        hi = bisect_right(buf.ts, lo_ts + w)
        if lo >= hi:
            return
        units = self.units
        idxs = self.kernels.scan(
            buf.ts, buf.lat, buf.lon, lo, hi,
            e.timestamp, e.position.lat, e.position.lon,
            self.pair_dt[anchor][j], self.pair_km[anchor][j],
            units.ms_per_time_unit, units.km_per_distance_unit,
        )
        if not idxs:
            return
        others = [m for m in range(len(assigned)) if m != anchor and assigned[m] is not None]
        events = buf.events
        for idx in idxs:
            x = events[idx]
            if any(a is not None and a.id == x.id for a in assigned):
                continue
            if others and not self._pairs_ok(j, x, others, assigned):
                continue
            assigned[j] = x
            t = x.timestamp
            self._extend(anchor, assigned, rest, min(lo_ts, t), max(hi_ts, t), out)
            assigned[j] = None

    def _pairs_ok(self, j, x, others, assigned) -> bool:
        units = self.units
        hav = self.kernels.haversine_km
        for m in others:
            y = assigned[m]
            dt = self.pair_dt[j][m]
            if dt != math.inf and abs(x.timestamp - y.timestamp) / units.ms_per_time_unit >= dt:
                return False
            km = self.pair_km[j][m]
            if km != math.inf:
                d = hav(y.position.lat, y.position.lon, x.position.lat, x.position.lon)
                if d / units.km_per_distance_unit >= km:
                    return False
        return True

    def _emit(self, assigned, lo_ts, hi_ts, out) -> None:
        fp = tuple(sorted(a.id for a in assigned))
        if fp in self.emitted:
            return
        if hi_ts - lo_ts > self.window_ms:
            raise InvariantError(f"{self.rule_id}: match span {hi_ts - lo_ts} ms exceeds window")
        self.emitted[fp] = hi_ts
        out.append(Match(self.rule_id, dict(zip(self.names, assigned)), fp))


class CorrelationEngine:
    """Holds one listener per registered rule and routes every event to all of them.

    Single writer: callers must serialise :meth:`ingest` and registration.
    """

    def __init__(self, lateness_ms: int = DEFAULT_LATENESS_MS, units: Units = DEFAULT_UNITS, kernels=None):
        if lateness_ms < 0:
            raise ValueError("lateness must be non-negative")
        self.lateness_ms = lateness_ms
        self.units = units
        self.kernels = kernels or _default_kernels
        self._listeners: dict[str, Listener] = {}
        self._sets: dict[str, list[str]] = {}
        self.max_ts: int | None = None
        self.ingested = 0

    # -- registration --------------------------------------------------------
    def register_rule(self, rule: Rule) -> Listener:
        if rule.rule_id in self._listeners:
            raise DuplicateRuleError(f"rule id {rule.rule_id!r} already registered")
        errs = _errors(validate_rule(rule, self.units))
        if errs:
            raise ValueError(f"rule {rule.rule_id!r} has errors: " + "; ".join(str(d) for d in errs))
        listener = Listener(rule, self.lateness_ms, self.units, self.kernels)
        self._listeners[rule.rule_id] = listener
        return listener

    def register_ruleset(self, rs: RuleSet) -> list[str]:
        """Register every rule of ``rs``; returns the rule ids as handles."""
        ids = [r.rule_id for r in rs.rules]
        dupes = [i for i in ids if i in self._listeners] or [i for i, n in Counter(ids).items() if n > 1]
        if dupes:
            raise DuplicateRuleError(f"rule id {dupes[0]!r} already registered")
        if rs.name in self._sets:
            raise DuplicateRuleError(f"rule set {rs.name!r} already registered")
        done = []
        try:
            for r in rs.rules:
                self.register_rule(r).active = rs.active
                done.append(r.rule_id)
        except Exception:
            for rid in done:
                del self._listeners[rid]
            raise
        self._sets[rs.name] = ids
        return ids

    def deregister(self, rule_id: str) -> None:
        del self._listeners[rule_id]
        for ids in self._sets.values():
            if rule_id in ids:
                ids.remove(rule_id)

    def deregister_ruleset(self, name: str) -> None:
        for rid in self._sets.pop(name):
            self._listeners.pop(rid, None)

    def set_active(self, name: str, active: bool) -> None:
        for rid in self._sets[name]:
            self._listeners[rid].active = active

    @property
    def listeners(self) -> list[Listener]:
        return list(self._listeners.values())

    def active_rules(self) -> list[Rule]:
        return [l.rule for l in self._listeners.values() if l.active]

    # -- processing ----------------------------------------------------------
    def ingest(self, e: MicroEvent) -> list[Match]:
        self.ingested += 1
        max_ts = e.timestamp if self.max_ts is None else self.max_ts
        out: list[Match] = []
        for listener in self._listeners.values():
            if listener.active:
                out.extend(listener.ingest(e, max_ts))
        if e.timestamp > max_ts or self.max_ts is None:
            self.max_ts = max(max_ts, e.timestamp)
            for listener in self._listeners.values():
                listener.evict(self.max_ts)
        return out

    @property
    def dropped_late(self) -> int:
        return sum(l.dropped_late for l in self._listeners.values())


def brute_force_matches(trace: Sequence[MicroEvent], rule: Rule, units: Units = DEFAULT_UNITS) -> list[Match]:
    """Exhaustive ground truth: every distinct k-tuple satisfying the rule.

    Deliberately independent of :class:`Listener`: predicates go through the
    tree interpreter and constraints through :func:`time_diff` and
    :func:`distance_gps`.  Meant for small traces.
    """
    names = rule.binding_names
    window = rule.window_ms
    candidates = [[e for e in trace if evaluate(b.predicate, e.attributes)] for b in rule.bindings]
    found: dict[Fingerprint, Match] = {}
    for combo in itertools.product(*candidates):
        ids = {e.id for e in combo}
        if len(ids) != len(combo):
            continue
        stamps = [e.timestamp for e in combo]
        if max(stamps) - min(stamps) > window:
            continue
        assignment = dict(zip(names, combo))
        ok = True
        for c in rule.post_filter:
            a, b = assignment[c.a], assignment[c.b]
            if isinstance(c, TimeDiffLt):
                ok = time_diff(a, b, units) < c.threshold
            elif isinstance(c, DistanceLt):
                ok = distance_gps(a, b, units) < c.threshold
            if not ok:
                break
        if ok:
            fp = tuple(sorted(ids))
            found.setdefault(fp, Match(rule.rule_id, assignment, fp))
    return [found[fp] for fp in sorted(found)]
