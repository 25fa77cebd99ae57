"""Seeded micro-event generator: planted relevant groups mixed with noise.

The manifest of expected matches is computed by running
:func:`~cepfuse.engine.brute_force_matches` over the finished stream, so it is
ground truth even when planted groups happen to cross-match.
"""

from __future__ import annotations

import configparser
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .engine import Fingerprint, brute_force_matches, compile_predicate
from .events import (
    DEFAULT_UNITS,
    GeoPoint,
    MicroEvent,
    MicroEventType,
    Units,
    encode_event,
)
from .lang.analysis import DnfTooLarge, literals, witnesses
from .lang.ast import DistanceLt, FnEq, Rule, TimeDiffLt
from .lang.corpus import load_corpus, load_rules

MIRACLES_SQUARE = GeoPoint(43.7230, 10.3966)
DEFAULT_BOX = (43.7190, 10.3910, 43.7270, 10.4020)  # lat_min, lon_min, lat_max, lon_max
DEFAULT_BASE_TIME_MS = 1_400_000_000_000
KM_PER_DEG_LAT = math.pi * 6371.0088 / 180.0

NOISE_KEYS = ("object", "audio", "anomaly", "personBehaviour", "logo", "trend", "vehicle", "weather")
NOISE_VALUES = (
    "umbrella", "camera", "pigeon", "bicycle", "selfie stick", "guidebook", "ice cream",
    "map", "hat", "postcard", "sunglasses", "water bottle", "stroller", "dog", "souvenir",
    "calm", "walking", "queue", "laughter", "music", "rain", "sunny", "bus", "taxi",
)
NOISE_WORDS = ("tourists", "tower", "photo", "sunny", "square", "crowded", "guide", "lunch", "ticket", "cathedral")

_TYPE_BY_KEY = {
    "object": MicroEventType.ObjectRecognition,
    "audio": MicroEventType.SuspiciousSpeechRecognition,
    "anomaly": MicroEventType.AnomalyDetection,
    "personBehaviour": MicroEventType.SuspiciousHumanBehaviour,
    "people": MicroEventType.PeopleDetection,
    "logo": MicroEventType.LogoRecognition,
    "trend": MicroEventType.TrendDetection,
}
_SOURCE_BY_KEY = {"audio": "mic", "people": "crowd", "trend": "social"}

DISJOINT = "disjoint"
ADVERSARIAL = "adversarial"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    rate: float = 0.0
    vocabulary: str = DISJOINT
    box: tuple[float, float, float, float] = DEFAULT_BOX
    seed: int | None = None

    def __post_init__(self) -> None:
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ScenarioError("noise rate must be a finite non-negative number")
        if self.vocabulary not in (DISJOINT, ADVERSARIAL):
            raise ScenarioError(f"unknown noise vocabulary {self.vocabulary!r}")
        lat0, lon0, lat1, lon1 = self.box
        GeoPoint(lat0, lon0), GeoPoint(lat1, lon1)
        if lat0 > lat1 or lon0 > lon1:
            raise ScenarioError("noise box corners are inverted")


@dataclass(frozen=True)
class GroupSpec:
    """Request for one planted group; unset anchors are drawn from the seed."""

    rule_id: str
    anchor_time: float | None = None
    anchor_position: GeoPoint | None = None


@dataclass(frozen=True)
class PlantedGroup:
    target_rule_id: str
    events: tuple[MicroEvent, ...]
    anchor_time: float


@dataclass(frozen=True)
class ScenarioSpec:
    duration: float
    groups: tuple[GroupSpec, ...] = ()
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    base_time_ms: int = DEFAULT_BASE_TIME_MS

    def __post_init__(self) -> None:
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise ScenarioError("duration must be a finite non-negative number of seconds")

    def with_noise_rate(self, rate: float, seed: int | None = None) -> "ScenarioSpec":
        noise = NoiseModel(rate, self.noise.vocabulary, self.noise.box, self.noise.seed)
        return ScenarioSpec(self.duration, self.groups, noise, self.seed if seed is None else seed, self.base_time_ms)


@dataclass
class Scenario:
    events: list[MicroEvent]
    manifest: list[tuple[str, Fingerprint]]
    planted: list[PlantedGroup]
    noise_ids: frozenset[str]

    def stream_lines(self) -> list[str]:
        return [encode_event(e) for e in self.events]


def group_spread(rule: Rule, units: Units = DEFAULT_UNITS) -> tuple[float, float]:
    """(time spread in seconds, radius in km) that keep a group inside every constraint."""
    window_s = rule.window_ms / 1000.0
    dts = [c.threshold * units.ms_per_time_unit / 1000.0 for c in rule.post_filter if isinstance(c, TimeDiffLt)]
    kms = [c.threshold * units.km_per_distance_unit for c in rule.post_filter if isinstance(c, DistanceLt)]
    return 0.5 * min([window_s, *dts]), 0.5 * min(kms) if kms else 0.05


def _offset(origin: GeoPoint, km: float, bearing: float) -> GeoPoint:
    dlat = km * math.cos(bearing) / KM_PER_DEG_LAT
    dlon = km * math.sin(bearing) / (KM_PER_DEG_LAT * max(math.cos(math.radians(origin.lat)), 1e-9))
    lat = min(90.0, max(-90.0, origin.lat + dlat))
    lon = min(180.0, max(-180.0, origin.lon + dlon))
    return GeoPoint(lat, lon)


def _describe(attrs) -> str:
    return ", ".join(f"{k} {v}" for k, v in attrs.items())


def plant_group_for(
    rule: Rule,
    anchor_time_ms: int,
    anchor_position: GeoPoint,
    rng: random.Random,
    *,
    group_id: str = "g",
    pick: str = "first",
    units: Units = DEFAULT_UNITS,
    max_tries: int = 50,
) -> PlantedGroup:
    """Build one event per binding that together satisfy ``rule``.

    Attribute values come from the rule's own literals (one disjunct per
    binding: the first, or a random one with ``pick="random"``); times and
    positions stay within half the tightest constraint of the anchor.
    """
    choices = []
    for b in rule.bindings:
        try:
            ws = witnesses(b.predicate)
        except DnfTooLarge:
            raise ScenarioError(f"{rule.rule_id}: predicate of {b.name!r} too large to plant") from None
        if not ws:
            raise ScenarioError(f"{rule.rule_id}: predicate of {b.name!r} is unsatisfiable")
        choices.append(ws)
    spread_s, radius_km = group_spread(rule, units)
    spread_ms = spread_s * 1000.0
    for _ in range(max_tries):
        events = []
        for b, ws in zip(rule.bindings, choices):
            attrs = ws[0] if pick == "first" else rng.choice(ws)
            key = next(iter(attrs))
            etype = _TYPE_BY_KEY.get(key, MicroEventType.ObjectRecognition)
            if "personBehaviour" in attrs and "object" in attrs:
                etype = MicroEventType.PeopleWithObjectRecognition
            source = f"{_SOURCE_BY_KEY.get(key, 'cam')}-{rng.randint(1, 8):02d}"
            ts = anchor_time_ms + int(rng.random() * spread_ms)
            pos = _offset(anchor_position, radius_km * math.sqrt(rng.random()) * 0.98, rng.uniform(0, 2 * math.pi))
            events.append(
                MicroEvent(
                    id=f"{group_id}-{b.name}",
                    event_type=etype,
                    timestamp=ts,
                    position=pos,
                    source_id=source,
                    attributes=dict(attrs),
                    text=f"reported {_describe(attrs)}",
                )
            )
        if brute_force_matches(events, rule, units):
            return PlantedGroup(rule.rule_id, tuple(events), anchor_time_ms / 1000.0)
    raise ScenarioError(f"{rule.rule_id}: could not plant a satisfying group")


class NoiseSampler:
    """Draws noise attributes; the disjoint vocabulary never satisfies any binding."""

    def __init__(self, rules: Sequence[Rule], vocabulary: str, rng: random.Random):
        self.rng = rng
        self.vocabulary = vocabulary
        self.predicates = [compile_predicate(b.predicate) for r in rules for b in r.bindings]
        banned = {lit.literal for r in rules for b in r.bindings for lit in literals(b.predicate) if isinstance(lit, FnEq)}
        self.values = [v for v in NOISE_VALUES if v not in banned]
        self.adversarial = [w for r in rules for b in r.bindings for w in witnesses(b.predicate)]

    def pure(self, attrs) -> bool:
        return not any(p(attrs) for p in self.predicates)

    def disjoint(self) -> dict:
        rng = self.rng
        for _ in range(20):
            attrs: dict = {}
            for key in rng.sample(NOISE_KEYS, rng.randint(1, 2)):
                attrs[key] = rng.choice(self.values) if self.values else "none"
            if rng.random() < 0.3:
                attrs["people"] = rng.randint(0, 5)
            if self.pure(attrs):
                return attrs
        return {}

    def draw(self) -> dict:
        if self.vocabulary == ADVERSARIAL and self.adversarial and self.rng.random() < 0.5:
            return dict(self.rng.choice(self.adversarial))
        return self.disjoint()


def generate(spec: ScenarioSpec, rules: Sequence[Rule], units: Units = DEFAULT_UNITS) -> Scenario:
    """Deterministic stream + manifest for ``spec`` against ``rules``."""
    by_id = {r.rule_id: r for r in rules}
    for g in spec.groups:
        if g.rule_id not in by_id:
            raise ScenarioError(f"scenario references unknown rule {g.rule_id!r}")
    rng = random.Random(f"plant:{spec.seed}")
    noise_seed = spec.seed if spec.noise.seed is None else spec.noise.seed
    nrng = random.Random(f"noise:{noise_seed}")
    lat0, lon0, lat1, lon1 = spec.noise.box
    base = spec.base_time_ms

    planted: list[PlantedGroup] = []
    events: list[MicroEvent] = []
    for gi, g in enumerate(spec.groups):
        rule = by_id[g.rule_id]
        spread_s, _ = group_spread(rule, units)
        if g.anchor_time is None:
            anchor_s = rng.uniform(0.0, max(0.0, spec.duration - spread_s))
        else:
            anchor_s = g.anchor_time
        pos = g.anchor_position or GeoPoint(rng.uniform(lat0, lat1), rng.uniform(lon0, lon1))
        group = plant_group_for(rule, base + int(anchor_s * 1000), pos, rng, group_id=f"g{gi:04d}", pick="random", units=units)
        planted.append(group)
        events.extend(group.events)

    sampler = NoiseSampler(rules, spec.noise.vocabulary, nrng)
    noise_ids = []
    types = list(MicroEventType)
    rate = spec.noise.rate
    t = 0.0
    n = 0
    while rate > 0:
        t += nrng.expovariate(rate)
        if t >= spec.duration:
            break
        attrs = sampler.draw()
        nid = f"n{n:07d}"
        events.append(
            MicroEvent(
                id=nid,
                event_type=nrng.choice(types),
                timestamp=base + int(t * 1000),
                position=GeoPoint(nrng.uniform(lat0, lat1), nrng.uniform(lon0, lon1)),
                source_id=f"noise-{n:07d}",
                attributes=attrs,
                text=" ".join(nrng.sample(NOISE_WORDS, 3)),
            )
        )
        noise_ids.append(nid)
        n += 1

    events.sort(key=lambda e: (e.timestamp, e.id))
    manifest = manifest_for(events, rules, units)
    return Scenario(events, manifest, planted, frozenset(noise_ids))


def manifest_for(events: Sequence[MicroEvent], rules: Iterable[Rule], units: Units = DEFAULT_UNITS):
    out = []
    for rule in rules:
        out.extend((rule.rule_id, m.fingerprint) for m in brute_force_matches(events, rule, units))
    return sorted(out)


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------


def format_fingerprint(rule_id: str, fp: Fingerprint) -> str:
    return f"{rule_id}\t{','.join(fp)}"


def dumps_manifest(manifest: Iterable[tuple[str, Fingerprint]]) -> str:
    return "".join(format_fingerprint(r, fp) + "\n" for r, fp in sorted(manifest))


def loads_manifest(text: str) -> list[tuple[str, Fingerprint]]:
    out = []
    for no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        rule_id, sep, ids = line.partition("\t")
        if not sep or not ids:
            raise ScenarioError(f"manifest line {no}: expected 'rule_id<TAB>id,id,...'")
        out.append((rule_id, tuple(ids.split(","))))
    return sorted(out)


def load_spec(path: str | Path) -> tuple[ScenarioSpec, list[Rule]]:
    """Read an INI scenario file; returns the scenario settings and the rules they target."""
    path = Path(path)
    return loads_spec(path.read_text(encoding="utf-8"), base_dir=path.parent)


def loads_spec(text: str, base_dir: Path | None = None) -> tuple[ScenarioSpec, list[Rule]]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # rule ids and keys are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from None
    try:
        sc = cp["scenario"] if cp.has_section("scenario") else {}
        rules_ref = sc.get("rules", "corpus")
        if rules_ref == "corpus":
            rules = load_corpus()
        else:
            p = Path(rules_ref)
            rules = load_rules(p if p.is_absolute() or base_dir is None else base_dir / p)
        nz = cp["noise"] if cp.has_section("noise") else {}
        box = DEFAULT_BOX
        if "box" in nz:
            box = tuple(float(x) for x in nz["box"].split(","))
            if len(box) != 4:
                raise ScenarioError("noise box needs four numbers: lat_min, lon_min, lat_max, lon_max")
        noise = NoiseModel(
            rate=float(nz.get("rate", 0)),
            vocabulary=nz.get("vocabulary", DISJOINT),
            box=box,
            seed=int(nz["seed"]) if "seed" in nz else None,
        )
        groups: list[GroupSpec] = []
        if cp.has_section("groups"):
            ids = [r.rule_id for r in rules]
            for key, value in cp["groups"].items():
                count = int(value)
                if count < 0:
                    raise ScenarioError(f"group count for {key!r} is negative")
                targets = ids if key == "each" else [key]
                for rid in targets:
                    groups.extend(GroupSpec(rid) for _ in range(count))
        spec = ScenarioSpec(
            duration=float(sc.get("duration", 60)),
            groups=tuple(groups),
            noise=noise,
            seed=int(sc.get("seed", 0)),
            base_time_ms=int(sc.get("base_time_ms", DEFAULT_BASE_TIME_MS)),
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"bad scenario value: {exc}") from None
    return spec, rules


def balanced_groups(rules: Sequence[Rule], n: int) -> tuple[GroupSpec, ...]:
    """``n`` group requests cycling over ``rules``."""
    return tuple(GroupSpec(rules[i % len(rules)].rule_id) for i in range(n))


__all__ = [
    "ADVERSARIAL",
    "DISJOINT",
    "GroupSpec",
    "NoiseModel",
    "NoiseSampler",
    "PlantedGroup",
    "Scenario",
    "ScenarioError",
    "ScenarioSpec",
    "balanced_groups",
    "dumps_manifest",
    "generate",
    "load_spec",
    "loads_manifest",
    "loads_spec",
    "plant_group_for",
]
