from __future__ import annotations


class RuleError(Exception):
    """Base class for every diagnostic raised while reading rules.

    ``pos`` is a 0-based character offset into the rule text, or ``None`` when
    the problem is not tied to a location.
    """

    def __init__(self, message: str, pos: int | None = None):
        self.message = message
        self.pos = pos
        super().__init__(message if pos is None else f"at {pos}: {message}")


class RuleLexError(RuleError):
    pass


class RuleSyntaxError(RuleError):
    def __init__(self, message: str, pos: int | None = None, expected: frozenset[str] = frozenset()):
        self.expected = expected
        super().__init__(message, pos)


class RuleSemanticError(RuleError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0]
        super().__init__("; ".join(d.message for d in self.diagnostics), first.pos)
