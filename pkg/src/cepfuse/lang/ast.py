"""AST for the pattern dialect."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class FnEq:
    """``name("literal")``: the attribute equals a string literal."""

    name: str
    literal: str


@dataclass(frozen=True)
class NumCmp:
    """``name OP value``: the attribute is an integer satisfying the comparison."""

    name: str
    op: str
    value: int


@dataclass(frozen=True)
class And:
    left: "Predicate"
    right: "Predicate"


@dataclass(frozen=True)
class Or:
    left: "Predicate"
    right: "Predicate"


Predicate = Union[FnEq, NumCmp, And, Or]

COMPARISON_OPS = ("<", ">", "<=", ">=", "=")


@dataclass(frozen=True)
class EventBinding:
    name: str
    predicate: Predicate


@dataclass(frozen=True)
class TimeDiffLt:
    a: str
    b: str
    threshold: float


@dataclass(frozen=True)
class DistanceLt:
    a: str
    b: str
    threshold: float


Constraint = Union[TimeDiffLt, DistanceLt]


@dataclass(frozen=True)
class Rule:
    """One compiled correlation rule; identifies exactly one complex-event type.

    ``post_filter`` is a conjunction.  ``source_text`` is carried for
    diagnostics only and does not take part in equality.
    """

    rule_id: str
    complex_type: str
    bindings: tuple[EventBinding, ...]
    window_minutes: int
    post_filter: tuple[Constraint, ...] = ()
    every: bool = True
    source_text: str = field(default="", compare=False)

    @property
    def window_ms(self) -> int:
        return self.window_minutes * 60_000

    @property
    def binding_names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.bindings)


@dataclass(frozen=True)
class RuleSet:
    name: str
    rules: tuple[Rule, ...]
    active: bool = True

    def __post_init__(self) -> None:
        types = {r.complex_type for r in self.rules}
        if len(types) > 1:
            raise ValueError(f"rule set {self.name!r} mixes complex-event types: {sorted(types)}")
