"""The nested model-checking problem language.

Grammar (concrete syntax)::

    expr    ::= 'let' binding (',' binding)* 'in' expr | sum
    sum     ::= product (('+' | '-') product)*
    product ::= atom (('*' | '/') atom)*
    atom    ::= INT | IDENT | '(' expr ')' | 'let' ... | mc
    mc      ::= 'mc' '(' model ',' STRING ')'
    model   ::= IDENT | IDENT '(' [binding (',' binding)*] ')'
    binding ::= IDENT '=' expr

``#`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import NamedTuple, Union

from .checker import parse_property
from .errors import ParseError, PropertyError, StaticCheckError

KEYWORDS = {"let", "in", "mc"}


class Token(NamedTuple):
    kind: str  # INT IDENT KW STR OP ( ) , = EOF
    value: str
    line: int
    col: int


_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"\#[^\n]*"),
    ("INT", r"[0-9]+"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("STR", r'"[^"\n]*"'),
    ("OP", r"[-+*/]"),
    ("PUNCT", r"[(),=]"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))


def tokenize(text: str) -> list[Token]:
    """Split problem text into tokens, ending with an ``EOF`` token."""
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == '"':
                raise ParseError("unterminated string", line, pos - line_start + 1)
            raise ParseError(f"illegal character {ch!r}", line, pos - line_start + 1)
        kind, value = m.lastgroup, m.group()
        col = pos - line_start + 1
        if kind == "IDENT" and value in KEYWORDS:
            tokens.append(Token("KW", value, line, col))
        elif kind == "STR":
            tokens.append(Token("STR", value[1:-1], line, col))
        elif kind == "PUNCT":
            tokens.append(Token(value, value, line, col))
        elif kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


# -- AST ---------------------------------------------------------------------

Pos = Union[tuple, None]


@dataclass(frozen=True)
class Lit:
    value: int
    pos: Pos = field(default=None, compare=False)


@dataclass(frozen=True)
class Const:
    name: str
    pos: Pos = field(default=None, compare=False)


@dataclass(frozen=True)
class Op:
    left: "Expr"
    op: str
    right: "Expr"
    pos: Pos = field(default=None, compare=False)


@dataclass(frozen=True)
class StdRef:
    name: str
    pos: Pos = field(default=None, compare=False)


@dataclass(frozen=True)
class MetaInst:
    name: str
    args: tuple[tuple[str, "Expr"], ...]
    pos: Pos = field(default=None, compare=False)


ModelRef = Union[StdRef, MetaInst]


@dataclass(frozen=True)
class Mc:
    model: ModelRef
    prop: str
    pos: Pos = field(default=None, compare=False)


@dataclass(frozen=True)
class Let:
    bindings: tuple[tuple[str, "Expr"], ...]
    body: "Expr"
    pos: Pos = field(default=None, compare=False)


Expr = Union[Lit, Const, Op, Mc, Let]


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def expect(self, kind, value=None):
        tok = self.tok
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value or kind
            got = "end of input" if tok.kind == "EOF" else repr(tok.value)
            raise self.error(f"expected {want!r}, got {got}")
        self.i += 1
        return tok

    def at(self, kind, value=None):
        tok = self.tok
        return tok.kind == kind and (value is None or tok.value == value)

    def parse(self):
        e = self.expr()
        if not self.at("EOF"):
            raise self.error(f"unexpected {self.tok.value!r}")
        return e

    def expr(self):
        if self.at("KW", "let"):
            return self.let()
        return self.sum()

    def let(self):
        start = self.expect("KW", "let")
        bindings = self.bindings("let")
        self.expect("KW", "in")
        body = self.expr()
        return Let(bindings, body, (start.line, start.col))

    def bindings(self, what):
        out = [self.binding()]
        while self.at(","):
            self.i += 1
            out.append(self.binding())
        seen = set()
        for (name, _), tok in out:
            if name in seen:
                raise StaticCheckError(f"duplicate binding {name!r} in {what}", tok.line, tok.col)
            seen.add(name)
        return tuple(b for b, _ in out)

    def binding(self):
        tok = self.expect("IDENT")
        self.expect("=")
        return (tok.value, self.expr()), tok

    def sum(self):
        left = self.product()
        while self.at("OP") and self.tok.value in "+-":
            tok = self.tok
            self.i += 1
            left = Op(left, tok.value, self.product(), (tok.line, tok.col))
        return left

    def product(self):
        left = self.atom()
        while self.at("OP") and self.tok.value in "*/":
            tok = self.tok
            self.i += 1
            left = Op(left, tok.value, self.atom(), (tok.line, tok.col))
        return left

    def atom(self):
        tok = self.tok
        if tok.kind == "INT":
            self.i += 1
            return Lit(int(tok.value), (tok.line, tok.col))
        if tok.kind == "IDENT":
            self.i += 1
            return Const(tok.value, (tok.line, tok.col))
        if tok.kind == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "KW" and tok.value == "let":
            return self.let()
        if tok.kind == "KW" and tok.value == "mc":
            return self.mc()
        got = "end of input" if tok.kind == "EOF" else repr(tok.value)
        raise self.error(f"expected an expression, got {got}")

    def mc(self):
        start = self.expect("KW", "mc")
        self.expect("(")
        name = self.expect("IDENT")
        if self.at("("):
            self.i += 1
            args = ()
            if not self.at(")"):
                args = self.bindings(f"arguments of {name.value}")
            self.expect(")")
            model = MetaInst(name.value, args, (name.line, name.col))
        else:
            model = StdRef(name.value, (name.line, name.col))
        self.expect(",")
        ptok = self.expect("STR")
        try:
            prop = str(parse_property(ptok.value))
        except PropertyError as exc:
            raise ParseError(str(exc), ptok.line, ptok.col) from None
        self.expect(")")
        return Mc(model, prop, (start.line, start.col))


def parse_expr(text: str) -> Expr:
    """Parse without static checks."""
    return _Parser(text).parse()


def parse_problem(text: str) -> Expr:
    """Parse a problem and run the static checks.

    Raises :class:`ParseError` on syntax errors and
    :class:`StaticCheckError` on duplicate ids, sibling-binding references
    and unbound constants.
    """
    e = parse_expr(text)
    check_static(e)
    return e


# -- static checks -----------------------------------------------------------


def _children(e):
    if isinstance(e, Op):
        return [e.left, e.right]
    if isinstance(e, Let):
        return [x for _, x in e.bindings] + [e.body]
    if isinstance(e, Mc) and isinstance(e.model, MetaInst):
        return [x for _, x in e.model.args]
    return []


def _free(e, bound, out):
    if isinstance(e, Const):
        if e.name not in bound:
            out.setdefault(e.name, e)
    elif isinstance(e, Let):
        for _, b in e.bindings:
            _free(b, bound, out)
        _free(e.body, bound | {n for n, _ in e.bindings}, out)
    else:
        for c in _children(e):
            _free(c, bound, out)
    return out


def free_constants(e: Expr) -> set[str]:
    return set(_free(e, frozenset(), {}))


def check_static(e: Expr) -> None:
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Let):
            names = {n for n, _ in node.bindings}
            for n, b in node.bindings:
                refs = _free(b, frozenset(), {})
                for other in sorted(names & refs.keys() - {n}) + ([n] if n in refs else []):
                    line, col = refs[other].pos or (None, None)
                    kind = "itself" if other == n else f"sibling binding {other!r}"
                    raise StaticCheckError(
                        f"binding {n!r} refers to {kind}; bindings of one let must be independent",
                        line, col)
        stack.extend(_children(node))
    # after the sibling check, whose message is more specific
    free = _free(e, frozenset(), {})
    if free:
        name, node = sorted(free.items(), key=lambda kv: kv[1].pos or (0, 0))[0]
        line, col = node.pos or (None, None)
        raise StaticCheckError(f"unbound constant {name!r}", line, col)


# -- pretty printing ---------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(e: Expr) -> str:
    """Render an expression in concrete syntax; re-parses to an equal AST."""
    if isinstance(e, Lit):
        return str(e.value)
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Op):
        p = _PREC[e.op]
        left = format_expr(e.left)
        if isinstance(e.left, Let) or (isinstance(e.left, Op) and _PREC[e.left.op] < p):
            left = f"({left})"
        right = format_expr(e.right)
        if isinstance(e.right, Let) or (isinstance(e.right, Op) and _PREC[e.right.op] <= p):
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Mc):
        return f'mc({format_model(e.model)}, "{e.prop}")'
    if isinstance(e, Let):
        bs = ", ".join(f"{n} = {_wrap_let(x)}" for n, x in e.bindings)
        return f"let {bs} in {format_expr(e.body)}"
    raise TypeError(f"not an expression: {e!r}")


def _wrap_let(e):
    s = format_expr(e)
    return f"({s})" if isinstance(e, Let) else s


def format_model(m: ModelRef, *, sort_args: bool = False) -> str:
    if isinstance(m, StdRef):
        return m.name
    args = sorted(m.args) if sort_args else m.args
    inner = ", ".join(f"{n} = {_wrap_let(x)}" for n, x in args)
    return f"{m.name}({inner})"


# -- task DAG ----------------------------------------------------------------


class TaskNode(NamedTuple):
    model: str
    property: str

    def __str__(self):
        return f'mc({self.model}, "{self.property}")'


@dataclass(frozen=True)
class TaskDag:
    nodes: tuple[TaskNode, ...]
    edges: frozenset[tuple[TaskNode, TaskNode]]

    def predecessors(self, node: TaskNode) -> set[TaskNode]:
        return {a for a, b in self.edges if b == node}

    def topological_order(self) -> list[TaskNode]:
        """Raises ``graphlib.CycleError`` if the graph has a cycle."""
        ts = TopologicalSorter({n: self.predecessors(n) for n in self.nodes})
        return list(ts.static_order())

    def is_acyclic(self) -> bool:
        try:
            self.topological_order()
        except CycleError:
            return False
        return True


def inline(e: Expr, env=None) -> Expr:
    """Substitute let-bound constants symbolically, removing every ``Let``."""
    env = env or {}
    if isinstance(e, Const):
        return env.get(e.name, e)
    if isinstance(e, Lit):
        return e
    if isinstance(e, Op):
        return Op(inline(e.left, env), e.op, inline(e.right, env), e.pos)
    if isinstance(e, Let):
        inner = dict(env)
        inner.update({n: inline(x, env) for n, x in e.bindings})
        return inline(e.body, inner)
    if isinstance(e, Mc):
        m = e.model
        if isinstance(m, MetaInst):
            m = MetaInst(m.name, tuple((n, inline(x, env)) for n, x in m.args), m.pos)
        return Mc(m, e.prop, e.pos)
    raise TypeError(f"not an expression: {e!r}")


def _maximal_mcs(e, out):
    if isinstance(e, Mc):
        out.append(e)
    else:
        for c in _children(e):
            _maximal_mcs(c, out)
    return out


def task_dag(e: Expr) -> TaskDag:
    """Extract verification tasks and their dependencies without evaluating.

    Meta-model arguments are keyed by their symbolic (let-inlined)
    expressions, so structurally identical tasks are merged.
    """
    nodes: dict[TaskNode, None] = {}
    edges: set[tuple[TaskNode, TaskNode]] = set()

    def visit(mc_closed: Mc) -> TaskNode:
        key = TaskNode(format_model(mc_closed.model, sort_args=True), mc_closed.prop)
        if key in nodes:
            return key
        deps = []
        if isinstance(mc_closed.model, MetaInst):
            for _, arg in mc_closed.model.args:
                deps.extend(_maximal_mcs(arg, []))
        for d in deps:
            edges.add((visit(d), key))
        nodes[key] = None
        return key

    def walk(x, env):
        if isinstance(x, Op):
            walk(x.left, env)
            walk(x.right, env)
        elif isinstance(x, Let):
            inner = dict(env)
            for n, b in x.bindings:
                walk(b, env)
                inner[n] = inline(b, env)
            walk(x.body, inner)
        elif isinstance(x, Mc):
            visit(inline(x, env))

    walk(e, {})
    return TaskDag(tuple(nodes), frozenset(edges))
