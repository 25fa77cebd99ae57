from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import RuleLexError

IDENT = "IDENT"
INT = "INT"
NUMBER = "NUMBER"
STRING = "STRING"
PUNCT = "PUNCT"
EOF = "EOF"

_MAX_INT_DIGITS = 18

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<number>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct><=|>=|[*\[\]()=<>.:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    pos: int
    value: object = None

    def describe(self) -> str:
        if self.kind == EOF:
            return "end of input"
        return repr(self.text)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    n = len(text)
    match = _TOKEN_RE.match
    while pos < n:
        m = match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == '"':
                raise RuleLexError("unterminated string literal", pos)
            raise RuleLexError(f"unexpected character {ch!r}", pos)
        kind = m.lastgroup
        s = m.group()
        if kind == "number":
            if s.isdigit():
                if len(s) > _MAX_INT_DIGITS:
                    raise RuleLexError("integer literal too long", pos)
                tokens.append(Token(INT, s, pos, int(s)))
            else:
                tokens.append(Token(NUMBER, s, pos, float(s)))
        elif kind == "ident":
            tokens.append(Token(IDENT, s, pos))
        elif kind == "string":
            tokens.append(Token(STRING, s, pos, s[1:-1]))
        elif kind == "punct":
            tokens.append(Token(PUNCT, s, pos))
        pos = m.end()
    tokens.append(Token(EOF, "", n))
    return tokens
