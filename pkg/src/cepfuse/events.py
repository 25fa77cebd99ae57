"""Domain types for micro-events and the complex events built from them.

Also holds the two primitives every correlation rule relies on
(:func:`time_diff` and :func:`distance_gps`) and the line-oriented wire
format used for event streams.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union
from urllib.parse import quote, unquote

AttrValue = Union[str, int]

EARTH_RADIUS_KM = 6371.0088


class MicroEventType(str, enum.Enum):
    """Closed taxonomy of micro-event labels."""

    ObjectRecognition = "ObjectRecognition"
    PeopleRecognition = "PeopleRecognition"
    PeopleDetection = "PeopleDetection"
    PeopleWithObjectRecognition = "PeopleWithObjectRecognition"
    LogoRecognition = "LogoRecognition"
    TrendDetection = "TrendDetection"
    SuspiciousSpeechRecognition = "SuspiciousSpeechRecognition"
    AnomalyDetection = "AnomalyDetection"
    SuspiciousHumanBehaviour = "SuspiciousHumanBehaviour"
    SuspiciousCrowdBehaviour = "SuspiciousCrowdBehaviour"


@dataclass(frozen=True)
class Units:
    """Scale factors mapping rule thresholds onto event data.

    ``ms_per_time_unit`` converts a millisecond difference into the unit used
    by ``timeDiff`` thresholds (seconds by default); ``km_per_distance_unit``
    does the same for ``distanceGPS`` (kilometres by default).
    """

    ms_per_time_unit: float = 1000.0
    km_per_distance_unit: float = 1.0

    def __post_init__(self) -> None:
        if not (self.ms_per_time_unit > 0 and math.isfinite(self.ms_per_time_unit)):
            raise ValueError("ms_per_time_unit must be positive and finite")
        if not (self.km_per_distance_unit > 0 and math.isfinite(self.km_per_distance_unit)):
            raise ValueError("km_per_distance_unit must be positive and finite")


DEFAULT_UNITS = Units()


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (isinstance(self.lat, (int, float)) and math.isfinite(self.lat)):
            raise ValueError("lat must be a finite number")
        if not (isinstance(self.lon, (int, float)) and math.isfinite(self.lon)):
            raise ValueError("lon must be a finite number")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError("lat out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError("lon out of range")


@dataclass(frozen=True, slots=True, eq=True)
class MicroEvent:
    """One atomic observation produced by a micro-event producer.

    ``attributes`` must not be mutated after construction; events are shared
    freely between buffers, matches and complex events.
    """

    id: str
    event_type: MicroEventType
    timestamp: int
    position: GeoPoint
    source_id: str
    attributes: Mapping[str, AttrValue] = field(default_factory=dict)
    text: str = ""
    priority: int = 0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("id must be non-empty")
        if isinstance(self.timestamp, bool) or not isinstance(self.timestamp, int):
            raise ValueError("timestamp must be an integer number of milliseconds")
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")
        if isinstance(self.priority, bool) or not isinstance(self.priority, int) or self.priority < 0:
            raise ValueError("priority must be a non-negative integer")

    def __hash__(self) -> int:
        return hash(self.id)

    @property
    def lat(self) -> float:
        return self.position.lat

    @property
    def lon(self) -> float:
        return self.position.lon


@dataclass(frozen=True)
class ComplexEvent:
    complex_type: str
    rule_id: str
    bindings: tuple[str, ...]
    constituents: tuple[MicroEvent, ...]
    detection_time: int
    event_time_span: tuple[int, int]
    centroid: GeoPoint
    priority: int = 0

    def __post_init__(self) -> None:
        if len(self.constituents) < 2:
            raise ValueError("a complex event needs at least two constituents")
        if len(self.bindings) != len(self.constituents):
            raise ValueError("bindings and constituents differ in length")

    @property
    def constituent_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.constituents)

    @property
    def fingerprint(self) -> tuple[str, ...]:
        return tuple(sorted(self.constituent_ids))

    @property
    def span_ms(self) -> int:
        return self.event_time_span[1] - self.event_time_span[0]


@dataclass(frozen=True)
class SecureEvent:
    inner: ComplexEvent
    trust: float
    source_trace: tuple[tuple[str, float], ...]


def time_diff(a: MicroEvent, b: MicroEvent, units: Units = DEFAULT_UNITS) -> float:
    """Absolute event-time difference, in seconds unless ``units`` says otherwise."""
    return abs(a.timestamp - b.timestamp) / units.ms_per_time_unit


_DEG = math.pi / 180.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    # same operation order as the compiled kernel; results are bit-identical
    s1 = math.sin((lat2 - lat1) * _DEG * 0.5)
    s2 = math.sin((lon2 - lon1) * _DEG * 0.5)
    h = s1 * s1 + math.cos(lat1 * _DEG) * math.cos(lat2 * _DEG) * s2 * s2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def distance_gps(a: MicroEvent, b: MicroEvent, units: Units = DEFAULT_UNITS) -> float:
    """Great-circle distance between two events, in kilometres by default."""
    d = haversine_km(a.position.lat, a.position.lon, b.position.lat, b.position.lon)
    return d / units.km_per_distance_unit


def centroid(events: Sequence[MicroEvent]) -> GeoPoint:
    """Arithmetic mean position. No antimeridian handling."""
    if not events:
        raise ValueError("empty constituent set")
    n = len(events)
    return GeoPoint(
        math.fsum(e.position.lat for e in events) / n,
        math.fsum(e.position.lon for e in events) / n,
    )


# --------------------------------------------------------------------------
# wire format
# --------------------------------------------------------------------------

WIRE_FIELDS = ("id", "type", "ts_ms", "lat", "lon", "source", "attrs", "text")

_INT_RE = re.compile(r"-?(0|[1-9][0-9]*)\Z")
_ATTR_SAFE = " !$&'()*+,-./:<>?@[]^_`{|}~"


class WireFormatError(ValueError):
    pass


def encode_attrs(attrs: Mapping[str, AttrValue]) -> str:
    parts = []
    for key, value in attrs.items():
        k = quote(str(key), safe=_ATTR_SAFE)
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise WireFormatError(f"attribute {key!r}: value must be str or int")
        if isinstance(value, int):
            v = str(value)
        else:
            v = quote(value, safe=_ATTR_SAFE)
            if _INT_RE.match(v) or v == "":
                # keep digit-only strings from decoding as integers
                v = "%{:02X}".format(ord(value[0])) + v[1:] if value else '""'
        parts.append(f"{k}={v}")
    return ";".join(parts)


def decode_attrs(text: str) -> dict[str, AttrValue]:
    attrs: dict[str, AttrValue] = {}
    if text == "":
        return attrs
    for pair in text.split(";"):
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise WireFormatError(f"malformed attribute pair {pair!r}")
        if _INT_RE.match(raw):
            value: AttrValue = int(raw)
        elif raw == '""':
            value = ""
        else:
            value = unquote(raw)
        attrs[unquote(key)] = value
    return attrs


def event_to_record(e: MicroEvent) -> dict:
    return {
        "id": e.id,
        "type": e.event_type.value,
        "ts_ms": e.timestamp,
        "lat": e.position.lat,
        "lon": e.position.lon,
        "source": e.source_id,
        "attrs": encode_attrs(e.attributes),
        "text": e.text,
        "priority": e.priority,
    }


def encode_event(e: MicroEvent) -> str:
    """Serialize one event as a single JSON line (no trailing newline)."""
    return json.dumps(event_to_record(e), ensure_ascii=False, separators=(",", ":"))


def parse_record(line: str) -> dict:
    """Decode one wire line into a raw record, without validating values.

    The ``attrs`` field comes back decoded into a dict.  Anything that is not
    a JSON object with a well-formed attrs string raises
    :class:`WireFormatError`.
    """
    try:
        rec = json.loads(line)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise WireFormatError(f"not a JSON record: {exc}") from None
    if not isinstance(rec, dict):
        raise WireFormatError("record must be a JSON object")
    attrs = rec.get("attrs", "")
    if isinstance(attrs, str):
        rec["attrs"] = decode_attrs(attrs)
    elif not isinstance(attrs, dict):
        raise WireFormatError("attrs must be a k=v string")
    return rec


def record_to_event(rec: Mapping) -> MicroEvent:
    """Build a :class:`MicroEvent` from a raw record; raises ``ValueError``."""
    missing = [f for f in WIRE_FIELDS if f not in rec and f not in ("attrs", "text")]
    if missing:
        raise ValueError(f"missing field {missing[0]}")
    try:
        etype = MicroEventType(rec["type"])
    except ValueError:
        raise ValueError(f"unknown event type {rec['type']!r}") from None
    for name in ("lat", "lon"):
        v = rec[name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"{name} must be a number")
    return MicroEvent(
        id=str(rec["id"]),
        event_type=etype,
        timestamp=rec["ts_ms"],
        position=GeoPoint(float(rec["lat"]), float(rec["lon"])),
        source_id=str(rec["source"]),
        attributes=dict(rec.get("attrs") or {}),
        text=str(rec.get("text", "")),
        priority=rec.get("priority", 0),
    )


def decode_event(line: str) -> MicroEvent:
    return record_to_event(parse_record(line))


def read_events(lines: Iterable[str]) -> list[MicroEvent]:
    return [decode_event(line) for line in lines if line.strip()]


def write_events(events: Iterable[MicroEvent], fh) -> None:
    for e in events:
        fh.write(encode_event(e))
        fh.write("\n")
