"""Recursive-descent parser for correlation rules.

Accepted form::

    select * from pattern [ [every] GROUP ] [where FILTER]

    GROUP   := '(' BINDING (and BINDING)* [GUARD] ')' [GUARD]
             | BINDING (and BINDING)* GUARD
    BINDING := IDENT '=' Event '(' PRED ')'
    PRED    := TERM (or TERM)* ;  TERM := ATOM (and ATOM)*
    ATOM    := '(' PRED ')' | IDENT '(' STRING ')' | IDENT CMP INT
    GUARD   := where timer ':' within '(' INT min ')'
    FILTER  := '(' CONSTR (and CONSTR)* ')' | CONSTR (and CONSTR)*
    CONSTR  := IDENT '.' (timeDiff | distanceGPS) '(' IDENT ')' '<' NUMBER

Exactly one guard is required, either inside or after the parenthesised
group.  Keywords are case-sensitive.
"""

from __future__ import annotations

import re

from .ast import (
    And,
    Constraint,
    DistanceLt,
    EventBinding,
    FnEq,
    NumCmp,
    Or,
    Predicate,
    Rule,
    TimeDiffLt,
)
from .errors import RuleSemanticError, RuleSyntaxError
from .lexer import EOF, IDENT, INT, NUMBER, PUNCT, STRING, Token, tokenize

RESERVED = frozenset({"and", "or", "where"})
MAX_NESTING = 100

_CMP_OPS = ("<", ">", "<=", ">=", "=")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0
        self.depth = 0

    # -- token helpers -----------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in (IDENT, PUNCT) and t.text == text

    def fail(self, expected) -> RuleSyntaxError:
        expected = frozenset(expected)
        t = self.tok
        want = ", ".join(sorted(expected))
        return RuleSyntaxError(f"expected {want} but found {t.describe()}", t.pos, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail({repr(text)})
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def name(self, what: str) -> Token:
        t = self.tok
        if t.kind != IDENT or t.text in RESERVED:
            raise self.fail({what})
        self.i += 1
        return t

    # -- grammar -------------------------------------------------------------
    def rule(self, rule_id: str, complex_type: str) -> tuple[Rule, dict]:
        for kw in ("select", "*", "from", "pattern", "["):
            self.expect(kw)
        every = self.accept("every")
        positions: dict = {"bindings": [], "constraints": [], "window": None}
        guard = None
        if self.at("("):
            self.i += 1
            bindings = self.bindings(positions)
            if self.at("where"):
                guard = self.guard(positions)
            self.expect(")")
            if self.at("where"):
                if guard is not None:
                    raise RuleSyntaxError("duplicate timer:within guard", self.tok.pos, frozenset({"']'"}))
                guard = self.guard(positions)
        else:
            bindings = self.bindings(positions)
            if self.at("where"):
                guard = self.guard(positions)
        if guard is None:
            raise self.fail({"'where'"})
        self.expect("]")
        post: list[Constraint] = []
        if self.accept("where"):
            if self.accept("("):
                post = self.constraints(positions)
                self.expect(")")
            else:
                post = self.constraints(positions)
        if self.tok.kind != EOF:
            raise self.fail({"end of input"})
        rule = Rule(
            rule_id=rule_id,
            complex_type=complex_type,
            bindings=tuple(bindings),
            window_minutes=guard,
            post_filter=tuple(post),
            every=every,
            source_text=self.text,
        )
        return rule, positions

    def bindings(self, positions: dict) -> list[EventBinding]:
        out = [self.binding(positions)]
        while self.accept("and"):
            out.append(self.binding(positions))
        return out

    def binding(self, positions: dict) -> EventBinding:
        t = self.name("binding name")
        positions["bindings"].append(t.pos)
        self.expect("=")
        self.expect("Event")
        self.expect("(")
        pred = self.predicate()
        self.expect(")")
        return EventBinding(t.text, pred)

    def guard(self, positions: dict) -> int:
        self.expect("where")
        self.expect("timer")
        self.expect(":")
        self.expect("within")
        self.expect("(")
        t = self.tok
        if t.kind != INT:
            raise self.fail({"integer minutes"})
        self.i += 1
        self.expect("min")
        self.expect(")")
        positions["window"] = t.pos
        return t.value

    def predicate(self) -> Predicate:
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise RuleSyntaxError("predicate nesting too deep", self.tok.pos)
        node = self.term()
        while self.accept("or"):
            node = Or(node, self.term())
        self.depth -= 1
        return node

    def term(self) -> Predicate:
        node = self.atom()
        while self.at("and") and not self._binding_ahead():
            self.i += 1
            node = And(node, self.atom())
        return node

    def _binding_ahead(self) -> bool:
        # 'and' followed by `name = Event` starts the next binding, not a conjunct
        return self.peek(1).kind == IDENT and self.peek(2).text == "=" and self.peek(3).text == "Event"

    def atom(self) -> Predicate:
        if self.accept("("):
            node = self.predicate()
            self.expect(")")
            return node
        t = self.name("attribute name")
        if self.accept("("):
            s = self.tok
            if s.kind != STRING:
                raise self.fail({"string literal"})
            self.i += 1
            self.expect(")")
            return FnEq(t.text, s.value)
        op = self.tok
        if op.kind == PUNCT and op.text in _CMP_OPS:
            self.i += 1
            v = self.tok
            if v.kind != INT:
                raise self.fail({"integer"})
            self.i += 1
            return NumCmp(t.text, op.text, v.value)
        raise self.fail({"'('"} | {repr(o) for o in _CMP_OPS})

    def constraints(self, positions: dict) -> list[Constraint]:
        out = [self.constraint(positions)]
        while self.accept("and"):
            out.append(self.constraint(positions))
        return out

    def constraint(self, positions: dict) -> Constraint:
        a = self.name("binding name")
        self.expect(".")
        fn = self.tok
        if not (fn.kind == IDENT and fn.text in ("timeDiff", "distanceGPS")):
            raise self.fail({"'timeDiff'", "'distanceGPS'"})
        self.i += 1
        self.expect("(")
        b = self.name("binding name")
        self.expect(")")
        self.expect("<")
        v = self.tok
        if v.kind not in (INT, NUMBER):
            raise self.fail({"number"})
        self.i += 1
        cls = TimeDiffLt if fn.text == "timeDiff" else DistanceLt
        positions["constraints"].append((a.pos, b.pos, v.pos))
        return cls(a.text, b.text, float(v.value))


_SLUG_RE = re.compile(r"[^a-z0-9]+")


def slugify(text: str) -> str:
    return _SLUG_RE.sub("-", text.lower()).strip("-") or "rule"


def parse_rule(text: str, complex_type: str, rule_id: str | None = None) -> Rule:
    """Parse one rule statement.

    Raises :class:`RuleLexError`, :class:`RuleSyntaxError` or
    :class:`RuleSemanticError` (all :class:`RuleError`).  Semantic errors
    cover structural problems only; satisfiability and redundancy are left to
    :func:`validate_rule`.
    """
    from .analysis import structural_diagnostics

    if rule_id is None:
        rule_id = slugify(complex_type)
    rule, positions = _Parser(text).rule(rule_id, complex_type)
    errors = [d for d in structural_diagnostics(rule, positions) if d.severity == "error"]
    if errors:
        raise RuleSemanticError(errors)
    return rule
