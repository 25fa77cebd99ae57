"""Complex event processing and information fusion for crowd-sourced micro-events."""

from __future__ import annotations

from .engine import CorrelationEngine, DuplicateRuleError, InvariantError, Match, brute_force_matches
from .events import (
    ComplexEvent,
    GeoPoint,
    MicroEvent,
    MicroEventType,
    SecureEvent,
    Units,
    decode_event,
    distance_gps,
    encode_event,
    time_diff,
)
from .fusion import EventRejected, FusionPipeline, PriorityConfig, RejectionRecord, TrustRegistry
from .generator import GroupSpec, NoiseModel, Scenario, ScenarioSpec, generate
from .lang import Rule, RuleSet, load_corpus, parse_rule, pretty_print, validate_rule

__version__ = "0.1.0"

__all__ = [
    "ComplexEvent",
    "CorrelationEngine",
    "DuplicateRuleError",
    "EventRejected",
    "FusionPipeline",
    "GeoPoint",
    "GroupSpec",
    "InvariantError",
    "Match",
    "MicroEvent",
    "MicroEventType",
    "NoiseModel",
    "PriorityConfig",
    "RejectionRecord",
    "Rule",
    "RuleSet",
    "Scenario",
    "ScenarioSpec",
    "SecureEvent",
    "TrustRegistry",
    "Units",
    "brute_force_matches",
    "decode_event",
    "distance_gps",
    "encode_event",
    "generate",
    "load_corpus",
    "parse_rule",
    "pretty_print",
    "time_diff",
    "validate_rule",
]
