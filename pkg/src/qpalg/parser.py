"""Recursive-descent parser for ``.qpalg`` sources.

Concrete syntax, loosest to tightest::

    P || Q          parallel (left-assoc)
    P ; Q           sequence (left-assoc)
    a . P           prefix
    X \\ {g, h}     restriction of a primary term

Primaries are ``nil``, ``end``, ``( P )``, declaration blocks
``[ x:Qubit, k:Nat . P ]``, conditional blocks ``[ c1 -> P1, c2 -> P2 ]``,
runtime scopes ``{ P }`` and invocations ``Name[a,b]``.
A program is a list of ``Name := P`` definitions; the entry point
``main`` may declare interface variables: ``main(b:Qubit) := P``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import errors
from .quantum import OBSERVABLES, UNITARIES
from .syntax import (
    Cond,
    Decl,
    End,
    Eq,
    FalseCond,
    Invoke,
    Measure,
    Neq,
    Nil,
    Par,
    Prefix,
    Process,
    Recv,
    Restrict,
    Scope,
    Seq,
    SendMeasure,
    SendQubit,
    SendValue,
    TrueCond,
    Unitary,
    VarType,
    unparse,
)

KEYWORDS = {"nil", "end", "true", "false", "Nat", "Qubit"}
RESERVED = KEYWORDS | set(UNITARIES) | set(OBSERVABLES)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>[0-9]+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>:=|->|!=|\|\||[.;\\{}\[\](),:!?=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'num' | 'name' | 'sym' | 'eof'
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise errors.SyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "<end of input>", line, pos - line_start + 1))
    return tokens


@dataclass(frozen=True)
class Definition:
    name: str
    body: Process
    formals: tuple  # leading declared variables that invocation arguments replace


@dataclass
class Program:
    definitions: dict = field(default_factory=dict)
    main: Process | None = None
    interface: tuple = ()  # bindings of main's header

    def unparse(self) -> str:
        lines = [f"{d.name} := {unparse(d.body)}" for d in self.definitions.values()]
        if self.main is not None:
            header = ""
            if self.interface:
                header = "(" + ", ".join(f"{n}:{t}" for n, t in self.interface) + ")"
            lines.append(f"main{header} := {unparse(self.main)}")
        return "\n".join(lines) + "\n"


def formal_bindings(body: Process) -> tuple:
    """Bindings of the chain of directly nested declarations heading ``body``."""
    out = []
    while isinstance(body, Decl):
        out.extend(body.bindings)
        body = body.body
    return tuple(out)


MAX_NESTING = 100  # groups plus prefix links; keeps every recursive pass within Python's stack


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0
        self.depth = 0
        self.positions = {}  # id(node) -> (line, col) for later diagnostics

    # -- token plumbing ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("sym", "name") and self.tok.text == text

    def fail(self, expected):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise errors.SyntaxError(f"unexpected {found}", t.line, t.col, expected)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail([repr(text)])
        t = self.tok
        self.i += 1
        return t

    def name(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "name" or t.text in KEYWORDS:
            self.fail([what])
        self.i += 1
        return t

    def mark(self, node, tok: Token):
        self.positions.setdefault(id(node), (tok.line, tok.col))
        return node

    # -- grammar -------------------------------------------------------------

    def program(self) -> tuple:
        defs = []
        while self.tok.kind != "eof":
            start = self.name("definition name")
            header = ()
            if start.text == "main" and self.at("("):
                self.i += 1
                header = tuple(self.bindings(")"))
                self.expect(")")
            self.expect(":=")
            body = self.process()
            defs.append((start, header, body))
        return defs

    def nest(self):
        self.depth += 1
        if self.depth > MAX_NESTING:
            t = self.tok
            raise errors.SyntaxError(f"term nested deeper than {MAX_NESTING} levels", t.line, t.col)

    def process(self) -> Process:
        self.nest()
        base = self.depth
        left = self.seq()
        while self.at("||"):
            t = self.expect("||")
            self.nest()  # left-nested chains deepen the tree too
            left = self.mark(Par(left, self.seq()), t)
        self.depth = base - 1
        return left

    def seq(self) -> Process:
        base = self.depth
        left = self.prefix()
        while self.at(";"):
            t = self.expect(";")
            self.nest()
            left = self.mark(Seq(left, self.prefix()), t)
        self.depth = base
        return left

    def prefix(self) -> Process:
        t = self.tok
        if t.kind == "name" and t.text not in KEYWORDS:
            nxt = self.peek()
            is_action = nxt.kind == "sym" and nxt.text in ("!", "?")
            if not is_action and nxt.kind == "sym" and nxt.text == "[":
                if t.text in UNITARIES or t.text in OBSERVABLES:
                    is_action = True
                elif self._bracket_then_dot():
                    raise errors.UnknownGateOrOperator(t.text, t.line, t.col)
            if is_action:
                action = self.action()
                self.expect(".")
                self.nest()
                rest = self.prefix()
                self.depth -= 1
                return self.mark(Prefix(action, rest), t)
        return self.postfix()

    def _bracket_then_dot(self) -> bool:
        depth, j = 0, self.i + 1
        while j < len(self.tokens):
            tk = self.tokens[j]
            if tk.kind == "eof":
                return False
            if tk.text == "[":
                depth += 1
            elif tk.text == "]":
                depth -= 1
                if depth == 0:
                    nxt = self.tokens[j + 1]
                    return nxt.kind == "sym" and nxt.text == "."
            j += 1
        return False

    def action(self):
        t = self.name("gate or operator")
        if self.at("!"):
            self.i += 1
            v = self.tok
            if v.kind == "num":
                self.i += 1
                return SendValue(t.text, int(v.text))
            var = self.name("value, variable or observable")
            if var.text in OBSERVABLES:
                return SendMeasure(t.text, var.text, self.var_list(var))
            if var.text in RESERVED:
                raise errors.SyntaxError(f"cannot send {var.text!r}", var.line, var.col)
            return SendValue(t.text, var.text)
        if self.at("?"):
            self.i += 1
            return Recv(t.text, self.var_name().text)
        if t.text in UNITARIES:
            return Unitary(t.text, self.var_list(t))
        if t.text in OBSERVABLES:
            return Measure(t.text, self.var_list(t))
        raise errors.UnknownGateOrOperator(t.text, t.line, t.col)

    def var_name(self) -> Token:
        t = self.name("variable")
        if t.text in RESERVED:
            raise errors.SyntaxError(f"{t.text!r} is reserved", t.line, t.col)
        return t

    def var_list(self, owner: Token) -> tuple:
        self.expect("[")
        names = [self.var_name().text]
        while self.at(","):
            self.i += 1
            names.append(self.var_name().text)
        self.expect("]")
        if len(set(names)) != len(names):
            raise errors.SyntaxError(
                f"{owner.text} targets must be pairwise distinct", owner.line, owner.col
            )
        return tuple(names)

    def postfix(self) -> Process:
        base = self.depth
        body = self.primary()
        while self.at("\\"):
            t = self.expect("\\")
            self.nest()
            self.expect("{")
            gates = [self.name("gate").text]
            while self.at(","):
                self.i += 1
                gates.append(self.name("gate").text)
            self.expect("}")
            body = self.mark(Restrict(body, frozenset(gates)), t)
        self.depth = base
        return body

    def primary(self) -> Process:
        t = self.tok
        if self.at("nil"):
            self.i += 1
            return Nil()
        if self.at("end"):
            self.i += 1
            return End()
        if self.at("("):
            self.i += 1
            p = self.process()
            self.expect(")")
            return p
        if self.at("{"):
            self.i += 1
            p = self.process()
            self.expect("}")
            return self.mark(Scope(p), t)
        if self.at("["):
            nxt, colon = self.peek(), self.peek(2)
            if nxt.kind == "name" and colon.kind == "sym" and colon.text == ":":
                return self.declaration()
            return self.conditional()
        if t.kind == "name" and t.text not in RESERVED:
            self.i += 1
            args = []
            while self.at("["):
                self.i += 1
                args.append(self.var_name().text)
                while self.at(","):
                    self.i += 1
                    args.append(self.var_name().text)
                self.expect("]")
            return self.mark(Invoke(t.text, tuple(args)), t)
        self.fail(["process"])

    def bindings(self, closer: str) -> list:
        out = []
        seen = set()
        while True:
            n = self.var_name()
            self.expect(":")
            ty = self.tok
            if ty.text == "Qubit":
                vt = VarType.QUBIT
            elif ty.text == "Nat":
                vt = VarType.NAT
            else:
                self.fail(["'Qubit'", "'Nat'"])
            self.i += 1
            if n.text in seen:
                raise errors.ScopeError(
                    n.text, f"variable {n.text!r} declared twice in one block", n.line, n.col
                )
            seen.add(n.text)
            out.append((n.text, vt))
            if not self.at(","):
                return out
            self.i += 1
            if self.at(closer):
                self.fail(["variable"])

    def declaration(self) -> Process:
        t = self.expect("[")
        bindings = self.bindings(".")
        self.expect(".")
        body = self.process()
        self.expect("]")
        return self.mark(Decl(tuple(bindings), body), t)

    def conditional(self) -> Process:
        t = self.expect("[")
        branches = [self.branch()]
        while self.at(","):
            self.i += 1
            branches.append(self.branch())
        self.expect("]")
        return self.mark(Cond(tuple(branches)), t)

    def branch(self):
        c = self.condition()
        self.expect("->")
        return (c, self.process())

    def condition(self):
        t = self.tok
        if self.at("true"):
            self.i += 1
            return TrueCond()
        if self.at("false"):
            self.i += 1
            return FalseCond()
        var = self.var_name()
        if self.at("="):
            ctor = Eq
        elif self.at("!="):
            ctor = Neq
        else:
            self.fail(["'='", "'!='"])
        self.i += 1
        o = self.tok
        if o.kind == "num":
            self.i += 1
            other = int(o.text)
        else:
            other = self.var_name().text
        return self.mark(ctor(var.text, other), t)


# -- scope checking and resolution --------------------------------------------


class _Checker:
    """Resolves ``g!x`` sends by the type of ``x`` and checks every use is declared."""

    def __init__(self, positions, formals=None, strict=True):
        self.positions = positions
        self.formals = formals or {}
        self.strict = strict

    def where(self, node):
        return self.positions.get(id(node), (0, 0))

    def lookup(self, env, var, node, want=None):
        vt = env.get(var)
        if vt is None:
            if self.strict:
                raise errors.ScopeError(var, "", *self.where(node))
            return None
        if want is not None and vt is not want:
            raise errors.ScopeError(
                var, f"variable {var!r} must be of type {want}", *self.where(node)
            )
        return vt

    def check(self, p: Process, env: dict) -> Process:
        if isinstance(p, (Nil, End)):
            return p
        if isinstance(p, Prefix):
            return Prefix(self.action(p.action, env, p), self.check(p.rest, env))
        if isinstance(p, Seq):
            return Seq(self.check(p.left, env), self.check(p.right, env))
        if isinstance(p, Par):
            return Par(self.check(p.left, env), self.check(p.right, env))
        if isinstance(p, Restrict):
            return Restrict(self.check(p.body, env), p.gates)
        if isinstance(p, Scope):
            return Scope(self.check(p.body, env))
        if isinstance(p, Cond):
            out = []
            for c, b in p.branches:
                for v in _cond_vars(c):
                    self.lookup(env, v, c, VarType.NAT)
                out.append((c, self.check(b, env)))
            return Cond(tuple(out))
        if isinstance(p, Decl):
            inner = dict(env)
            inner.update(p.bindings)
            return Decl(p.bindings, self.check(p.body, inner))
        if isinstance(p, Invoke):
            self.invoke(p, env)
            return p
        raise TypeError(p)

    def action(self, a, env, node):
        if isinstance(a, SendValue):
            if isinstance(a.expr, str):
                vt = self.lookup(env, a.expr, node)
                if vt is VarType.QUBIT:
                    return SendQubit(a.gate, a.expr)
            return a
        if isinstance(a, SendQubit):
            self.lookup(env, a.var, node, VarType.QUBIT)
            return a
        if isinstance(a, Recv):
            self.lookup(env, a.var, node)
            return a
        for v in a.vars:
            self.lookup(env, v, node, VarType.QUBIT)
        return a

    def invoke(self, p: Invoke, env):
        line, col = self.where(p)
        if p.name not in self.formals:
            raise errors.UnknownDefinition(p.name, line, col)
        formals = self.formals[p.name]
        if len(p.args) > len(formals):
            raise errors.ScopeError(
                p.name,
                f"{p.name} takes at most {len(formals)} argument(s), got {len(p.args)}",
                line,
                col,
            )
        if len(set(p.args)) != len(p.args):
            raise errors.ScopeError(p.name, f"duplicate argument to {p.name}", line, col)
        for arg, (_, want) in zip(p.args, formals):
            self.lookup(env, arg, p, want)


def _cond_vars(c):
    if isinstance(c, (Eq, Neq)):
        return [c.var] + ([c.other] if isinstance(c.other, str) else [])
    return []


def parse_program(text: str) -> Program:
    """Parse and scope-check a whole ``.qpalg`` source."""
    parser = _Parser(text)
    raw = parser.program()
    seen = {}
    for tok, header, body in raw:
        if tok.text in seen:
            raise errors.DuplicateDefinition(tok.text, tok.line, tok.col)
        if tok.text in RESERVED:
            raise errors.SyntaxError(f"{tok.text!r} is reserved", tok.line, tok.col)
        seen[tok.text] = (tok, header, body)
    formals = {
        name: formal_bindings(body) for name, (_, _, body) in seen.items() if name != "main"
    }
    checker = _Checker(parser.positions, formals)
    program = Program()
    for name, (tok, header, body) in seen.items():
        if name == "main":
            program.interface = header
            program.main = checker.check(body, dict(header))
        else:
            resolved = checker.check(body, {})
            program.definitions[name] = Definition(name, resolved, formal_bindings(resolved))
    return program


def parse_process(text: str, definitions=None, env=None, strict=True) -> Process:
    """Parse a single process term.

    ``env`` maps free variable names to their types. With ``strict=False``
    unknown variables are accepted (``g!x`` then stays a value send).
    """
    parser = _Parser(text)
    p = parser.process()
    if parser.tok.kind != "eof":
        parser.fail(["end of input"])
    formals = {}
    if definitions:
        formals = {
            name: d.formals if isinstance(d, Definition) else formal_bindings(d)
            for name, d in definitions.items()
        }
    checker = _Checker(parser.positions, formals, strict=strict)
    if not strict and not definitions:
        checker.invoke = lambda p, env: None
    return checker.check(p, dict(env or {}))
