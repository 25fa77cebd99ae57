"""Reading and writing rule files.

Format: ``#`` lines carry ``key: value`` metadata for the next statement
(``type`` is required, ``id`` optional, anything else is kept verbatim);
a statement may span several lines and ends at a blank line or end of file.
``#`` lines before the first metadata key are free comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .ast import Rule, RuleSet
from .errors import RuleError
from .parser import parse_rule, slugify
from .printer import pretty_print


class RuleFileError(Exception):
    def __init__(self, message: str, line: int | None = None, cause: RuleError | None = None):
        self.line = line
        self.cause = cause
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass
class RuleEntry:
    meta: dict[str, list[str]]
    text: str
    line: int
    rule: Rule | None = None
    notes: list[str] = field(default_factory=list)


def _entries(text: str) -> list[RuleEntry]:
    entries: list[RuleEntry] = []
    meta: dict[str, list[str]] = {}
    body: list[str] = []
    start = 0

    def flush():
        nonlocal meta, body
        if body:
            entries.append(RuleEntry(meta, " ".join(s.strip() for s in body), start))
        elif meta:
            raise RuleFileError("metadata without a rule statement", start)
        meta, body = {}, []

    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            flush()
            continue
        if line.startswith("#"):
            if body:
                flush()
            key, sep, value = line[1:].partition(":")
            key = key.strip()
            if sep and key and " " not in key:
                if not meta:
                    start = no
                meta.setdefault(key.lower(), []).append(value.strip())
            continue
        if not body and not meta:
            start = no
        body.append(line)
    flush()
    return entries


def loads_rules(text: str) -> list[Rule]:
    rules: list[Rule] = []
    ids: set[str] = set()
    for entry in _entries(text):
        types = entry.meta.get("type")
        if not types or not types[-1]:
            raise RuleFileError("rule has no '# type:' line", entry.line)
        ctype = types[-1]
        rid = (entry.meta.get("id") or [slugify(ctype)])[-1]
        if rid in ids:
            raise RuleFileError(f"duplicate rule id {rid!r}", entry.line)
        ids.add(rid)
        try:
            rules.append(parse_rule(entry.text, ctype, rid))
        except RuleError as exc:
            raise RuleFileError(f"rule {rid!r}: {exc}", entry.line, exc) from None
    return rules


def load_rules(path: str | Path) -> list[Rule]:
    return loads_rules(Path(path).read_text(encoding="utf-8"))


def dumps_rules(rules: list[Rule]) -> str:
    chunks = [f"# type: {r.complex_type}\n# id: {r.rule_id}\n{pretty_print(r)}\n" for r in rules]
    return "\n".join(chunks)


def group_rule_sets(rules: list[Rule]) -> list[RuleSet]:
    """One rule set per complex-event type, in first-seen order."""
    by_type: dict[str, list[Rule]] = {}
    for r in rules:
        by_type.setdefault(r.complex_type, []).append(r)
    return [RuleSet(name=t, rules=tuple(rs)) for t, rs in by_type.items()]


def corpus_text() -> str:
    return resources.files("cepfuse").joinpath("data/table2.rules").read_text(encoding="utf-8")


def corpus_path() -> Path:
    return Path(str(resources.files("cepfuse").joinpath("data/table2.rules")))


def load_corpus() -> list[Rule]:
    return loads_rules(corpus_text())
