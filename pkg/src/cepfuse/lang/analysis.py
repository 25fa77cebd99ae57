"""Semantic checks, satisfiability and direct evaluation of predicates.

:func:`evaluate` is a plain tree-walking interpreter.  The engine compiles
predicates separately; the brute-force oracle uses this one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from ..events import DEFAULT_UNITS, Units
from .ast import And, DistanceLt, FnEq, NumCmp, Or, Predicate, Rule, TimeDiffLt

MAX_DNF_TERMS = 4096


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    pos: int | None = None

    def __str__(self) -> str:
        where = "" if self.pos is None else f" (at {self.pos})"
        return f"{self.severity}[{self.code}]: {self.message}{where}"


def evaluate(pred: Predicate, attrs: Mapping[str, object]) -> bool:
    if isinstance(pred, FnEq):
        v = attrs.get(pred.name)
        return isinstance(v, str) and v == pred.literal
    if isinstance(pred, NumCmp):
        v = attrs.get(pred.name)
        if isinstance(v, bool) or not isinstance(v, int):
            return False
        op = pred.op
        if op == "<":
            return v < pred.value
        if op == ">":
            return v > pred.value
        if op == "<=":
            return v <= pred.value
        if op == ">=":
            return v >= pred.value
        return v == pred.value
    if isinstance(pred, And):
        return evaluate(pred.left, attrs) and evaluate(pred.right, attrs)
    if isinstance(pred, Or):
        return evaluate(pred.left, attrs) or evaluate(pred.right, attrs)
    raise TypeError(f"not a predicate: {pred!r}")


def literals(pred: Predicate) -> list[FnEq | NumCmp]:
    """Leaves of the predicate, left to right."""
    if isinstance(pred, (FnEq, NumCmp)):
        return [pred]
    return literals(pred.left) + literals(pred.right)


class DnfTooLarge(Exception):
    pass


def dnf(pred: Predicate) -> list[list[FnEq | NumCmp]]:
    """Disjunctive normal form, disjuncts ordered left-first."""
    if isinstance(pred, (FnEq, NumCmp)):
        return [[pred]]
    if isinstance(pred, Or):
        terms = dnf(pred.left) + dnf(pred.right)
    else:
        left, right = dnf(pred.left), dnf(pred.right)
        if len(left) * len(right) > MAX_DNF_TERMS:
            raise DnfTooLarge
        terms = [a + b for a in left for b in right]
    if len(terms) > MAX_DNF_TERMS:
        raise DnfTooLarge
    return terms


def conjunct_witness(atoms: list[FnEq | NumCmp]) -> dict[str, str | int] | None:
    """Smallest attribute map satisfying every atom, or None if impossible.

    Integer bounds pick the value nearest the constraint (``people>80`` gives
    81).
    """
    strings: dict[str, str] = {}
    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    for a in atoms:
        if isinstance(a, FnEq):
            if strings.setdefault(a.name, a.literal) != a.literal:
                return None
        else:
            l, h = lo.get(a.name, -math.inf), hi.get(a.name, math.inf)
            if a.op == ">":
                l = max(l, a.value + 1)
            elif a.op == ">=":
                l = max(l, a.value)
            elif a.op == "<":
                h = min(h, a.value - 1)
            elif a.op == "<=":
                h = min(h, a.value)
            else:
                l, h = max(l, a.value), min(h, a.value)
            lo[a.name], hi[a.name] = l, h
    out: dict[str, str | int] = dict(strings)
    for name in lo:
        if name in strings:
            return None
        l, h = lo[name], hi[name]
        if l > h:
            return None
        out[name] = int(l) if l != -math.inf else int(h)
    return out


def witnesses(pred: Predicate) -> list[dict[str, str | int]]:
    """One witness per satisfiable disjunct, in order."""
    out = []
    for term in dnf(pred):
        w = conjunct_witness(term)
        if w is not None:
            out.append(w)
    return out


def is_satisfiable(pred: Predicate) -> bool | None:
    """True/False, or None when the formula is too large to decide cheaply."""
    try:
        return any(conjunct_witness(t) is not None for t in dnf(pred))
    except DnfTooLarge:
        return None


def structural_diagnostics(rule: Rule, positions: dict | None = None) -> list[Diagnostic]:
    positions = positions or {}
    bpos = positions.get("bindings") or [None] * len(rule.bindings)
    cpos = positions.get("constraints") or [(None, None, None)] * len(rule.post_filter)
    out: list[Diagnostic] = []
    if len(rule.bindings) < 2:
        out.append(Diagnostic("error", "arity", "a rule needs at least two event bindings", bpos[0] if bpos else None))
    seen: set[str] = set()
    for b, p in zip(rule.bindings, bpos):
        if b.name in seen:
            out.append(Diagnostic("error", "duplicate-binding", f"duplicate binding name {b.name!r}", p))
        seen.add(b.name)
    if not isinstance(rule.window_minutes, int) or rule.window_minutes <= 0:
        out.append(Diagnostic("error", "window", "timer:within window must be positive", positions.get("window")))
    for c, (pa, pb, pv) in zip(rule.post_filter, cpos):
        fn = "timeDiff" if isinstance(c, TimeDiffLt) else "distanceGPS"
        for name, p in ((c.a, pa), (c.b, pb)):
            if name not in seen:
                out.append(Diagnostic("error", "unknown-binding", f"{fn} refers to unknown binding {name!r}", p))
        if c.a == c.b:
            out.append(Diagnostic("error", "self-constraint", f"{fn} relates {c.a!r} to itself", pa))
        if not (math.isfinite(c.threshold) and c.threshold > 0):
            out.append(Diagnostic("error", "threshold", f"{fn} threshold must be positive and finite", pv))
    return out


def validate_rule(rule: Rule, units: Units = DEFAULT_UNITS) -> list[Diagnostic]:
    """All diagnostics for a rule; an empty list means it is sound."""
    out = structural_diagnostics(rule)
    names = {b.name for b in rule.bindings}
    constrained = {n for c in rule.post_filter for n in (c.a, c.b)}
    for b in rule.bindings:
        sat = is_satisfiable(b.predicate)
        if sat is False:
            where = " and referenced in the post-filter" if b.name in constrained else ""
            out.append(Diagnostic("error", "unsatisfiable", f"predicate of {b.name!r} can never match{where}"))
    if isinstance(rule.window_minutes, int) and rule.window_minutes > 0:
        for c in rule.post_filter:
            if isinstance(c, TimeDiffLt) and c.a in names and c.b in names:
                if c.threshold * units.ms_per_time_unit >= rule.window_ms:
                    out.append(
                        Diagnostic(
                            "warning",
                            "redundant-time",
                            f"{c.a}.timeDiff({c.b}) < {c.threshold} is implied by the "
                            f"{rule.window_minutes} min window",
                        )
                    )
    return out


def errors(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


__all__ = [
    "Diagnostic",
    "DistanceLt",
    "dnf",
    "errors",
    "evaluate",
    "is_satisfiable",
    "literals",
    "structural_diagnostics",
    "validate_rule",
    "witnesses",
]
