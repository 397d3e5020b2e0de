"""Guard expressions for ECC transitions.

The language is intentionally small: literals (integers, reals, ``true``,
``false``, double-quoted strings), variable reads, the comparisons
``< > <= >= == !=`` and the boolean connectives ``AND``, ``OR``, ``NOT``
with parentheses.  Guards are stored in their canonical rendering so two
guards that parse to the same tree compare equal as strings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Mapping, Union

__all__ = [
    "GuardError",
    "Lit",
    "Var",
    "Not",
    "BinOp",
    "parse_guard",
    "render_guard",
    "canonical_guard",
    "guard_names",
    "evaluate_guard",
]


class GuardError(ValueError):
    """Raised for malformed guard text.  ``offset`` is a 0-based column."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class Lit:
    value: Any


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Not:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Lit, Var, Not, BinOp]

_COMPARISONS = ("<=", ">=", "==", "!=", "<", ">")
_PRECEDENCE = {"OR": 1, "AND": 2}
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>-?\d+\.\d*(?:[eE][-+]?\d+)?|-?\d+[eE][-+]?\d+|-?\d+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<op><=|>=|==|!=|<|>|\(|\))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise GuardError(f"unexpected character {text[pos]!r} in guard", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise GuardError("unexpected end of guard", len(self.text))
        self.i += 1
        return tok

    def parse(self) -> Node:
        if not self.tokens:
            raise GuardError("empty guard", 0)
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise GuardError(f"unexpected token {tok[1]!r} in guard", tok[2])
        return node

    def expr(self) -> Node:
        node = self.conj()
        while (tok := self.peek()) and tok[0] == "ident" and tok[1] == "OR":
            self.take()
            node = BinOp("OR", node, self.conj())
        return node

    def conj(self) -> Node:
        node = self.neg()
        while (tok := self.peek()) and tok[0] == "ident" and tok[1] == "AND":
            self.take()
            node = BinOp("AND", node, self.neg())
        return node

    def neg(self) -> Node:
        tok = self.peek()
        if tok and tok[0] == "ident" and tok[1] == "NOT":
            self.take()
            return Not(self.neg())
        return self.comparison()

    def comparison(self) -> Node:
        left = self.atom()
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] in _COMPARISONS:
            self.take()
            return BinOp(tok[1], left, self.atom())
        return left

    def atom(self) -> Node:
        kind, text, pos = self.take()
        if kind == "num":
            if re.fullmatch(r"-?\d+", text):
                return Lit(int(text))
            return Lit(float(text))
        if kind == "str":
            return Lit(bytes(text[1:-1], "utf-8").decode("unicode_escape"))
        if kind == "ident":
            if text in ("AND", "OR", "NOT"):
                raise GuardError(f"unexpected keyword {text}", pos)
            if text == "true":
                return Lit(True)
            if text == "false":
                return Lit(False)
            return Var(text)
        if text == "(":
            node = self.expr()
            close = self.take()
            if close[1] != ")":
                raise GuardError("expected ')'", close[2])
            return node
        raise GuardError(f"unexpected token {text!r} in guard", pos)


@lru_cache(maxsize=1024)
def parse_guard(text: str) -> Node:
    """Parse guard text into an expression tree."""
    return _Parser(text).parse()


def _render_lit(value: Any) -> str:
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(value)


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PRECEDENCE.get(node.op, 4)
    if isinstance(node, Not):
        return 3
    return 5


def render_guard(node: Node) -> str:
    """Render with the minimal parentheses needed to preserve the tree."""
    if isinstance(node, Lit):
        return _render_lit(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Not):
        inner = render_guard(node.operand)
        if _prec(node.operand) < 3:
            inner = f"({inner})"
        return f"NOT {inner}"
    mine = _prec(node)
    left = render_guard(node.left)
    right = render_guard(node.right)
    if _prec(node.left) < mine or (mine == 4 and _prec(node.left) == 4):
        left = f"({left})"
    # connectives are left-associative; a same-level right operand needs parens
    if _prec(node.right) <= mine and not (mine == 4 and _prec(node.right) > 4):
        right = f"({right})"
    return f"{left} {node.op} {right}"


def canonical_guard(text: str) -> str:
    return render_guard(parse_guard(text))


def guard_names(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Not):
        return guard_names(node.operand)
    if isinstance(node, BinOp):
        return guard_names(node.left) | guard_names(node.right)
    return set()


def evaluate_guard(node: Node, env: Mapping[str, Any]) -> Any:
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Not):
        return not evaluate_guard(node.operand, env)
    if node.op == "AND":
        return bool(evaluate_guard(node.left, env)) and bool(evaluate_guard(node.right, env))
    if node.op == "OR":
        return bool(evaluate_guard(node.left, env)) or bool(evaluate_guard(node.right, env))
    left = evaluate_guard(node.left, env)
    right = evaluate_guard(node.right, env)
    if node.op == "<":
        return left < right
    if node.op == ">":
        return left > right
    if node.op == "<=":
        return left <= right
    if node.op == ">=":
        return left >= right
    if node.op == "==":
        return left == right
    return left != right
