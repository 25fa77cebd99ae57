"""Canonical text form for rules.

Parentheses appear only where the left-associative parse needs them, so a
parsed rule prints back in a stable, single-spaced form.
"""

from __future__ import annotations

from .ast import And, DistanceLt, FnEq, NumCmp, Or, Predicate, Rule, TimeDiffLt


def format_number(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def format_predicate(p: Predicate) -> str:
    if isinstance(p, FnEq):
        return f'{p.name}("{p.literal}")'
    if isinstance(p, NumCmp):
        return f"{p.name}{p.op}{p.value}"
    if isinstance(p, Or):
        right = format_predicate(p.right)
        if isinstance(p.right, Or):
            right = f"({right})"
        return f"{format_predicate(p.left)} or {right}"
    if isinstance(p, And):
        left = format_predicate(p.left)
        right = format_predicate(p.right)
        if isinstance(p.left, Or):
            left = f"({left})"
        if isinstance(p.right, (Or, And)):
            right = f"({right})"
        return f"{left} and {right}"
    raise TypeError(f"not a predicate: {p!r}")


def format_constraint(c) -> str:
    fn = "timeDiff" if isinstance(c, TimeDiffLt) else "distanceGPS"
    assert isinstance(c, (TimeDiffLt, DistanceLt))
    return f"{c.a}.{fn}({c.b}) < {format_number(c.threshold)}"


def pretty_print(rule: Rule) -> str:
    bindings = " and ".join(f"{b.name}=Event({format_predicate(b.predicate)})" for b in rule.bindings)
    every = "every " if rule.every else ""
    text = f"select * from pattern [{every}({bindings}) where timer:within({rule.window_minutes} min)]"
    if rule.post_filter:
        text += " where (" + " and ".join(format_constraint(c) for c in rule.post_filter) + ")"
    return text
