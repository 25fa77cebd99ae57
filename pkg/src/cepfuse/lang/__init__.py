"""The rule dialect: lexer, parser, printer and semantic checks."""

from .analysis import Diagnostic, evaluate, is_satisfiable, validate_rule, witnesses
from .ast import And, DistanceLt, EventBinding, FnEq, NumCmp, Or, Rule, RuleSet, TimeDiffLt
from .corpus import RuleFileError, group_rule_sets, load_corpus, load_rules, loads_rules
from .errors import RuleError, RuleLexError, RuleSemanticError, RuleSyntaxError
from .parser import parse_rule
from .printer import pretty_print

__all__ = [
    "And",
    "Diagnostic",
    "DistanceLt",
    "EventBinding",
    "FnEq",
    "NumCmp",
    "Or",
    "Rule",
    "RuleError",
    "RuleFileError",
    "RuleLexError",
    "RuleSemanticError",
    "RuleSet",
    "RuleSyntaxError",
    "TimeDiffLt",
    "evaluate",
    "group_rule_sets",
    "is_satisfiable",
    "load_corpus",
    "load_rules",
    "loads_rules",
    "parse_rule",
    "pretty_print",
    "validate_rule",
    "witnesses",
]
