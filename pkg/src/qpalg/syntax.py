"""Abstract syntax of QPAlg process terms and the pretty printer.

Terms are immutable, hashable dataclasses; structural equality is plain ``==``.
Variables are plain strings and literals are ints, so an expression
``literal-or-var`` is typed ``int | str``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterator, Union


class VarType(enum.Enum):
    NAT = "Nat"
    QUBIT = "Qubit"

    def __str__(self) -> str:
        return self.value


Expr = Union[int, str]
Binding = tuple  # (name, VarType)


# -- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class SendValue:
    gate: str
    expr: Expr


@dataclass(frozen=True)
class SendQubit:
    gate: str
    var: str


@dataclass(frozen=True)
class SendMeasure:
    gate: str
    observable: str
    vars: tuple


@dataclass(frozen=True)
class Recv:
    gate: str
    var: str


@dataclass(frozen=True)
class Unitary:
    name: str
    vars: tuple


@dataclass(frozen=True)
class Measure:
    observable: str
    vars: tuple


Action = Union[SendValue, SendQubit, SendMeasure, Recv, Unitary, Measure]


# -- conditions --------------------------------------------------------------


@dataclass(frozen=True)
class TrueCond:
    pass


@dataclass(frozen=True)
class FalseCond:
    pass


@dataclass(frozen=True)
class Eq:
    var: str
    other: Expr


@dataclass(frozen=True)
class Neq:
    var: str
    other: Expr


Condition = Union[TrueCond, FalseCond, Eq, Neq]


# -- processes ---------------------------------------------------------------


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class Prefix:
    action: Action
    rest: "Process"


@dataclass(frozen=True)
class Seq:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class Restrict:
    body: "Process"
    gates: frozenset

    def __post_init__(self):
        if not self.gates:
            raise ValueError("restriction needs at least one gate")


@dataclass(frozen=True)
class Cond:
    branches: tuple  # of (Condition, Process)

    def __post_init__(self):
        if not self.branches:
            raise ValueError("conditional choice needs at least one branch")


@dataclass(frozen=True)
class Decl:
    bindings: tuple  # of (name, VarType)
    body: "Process"

    def __post_init__(self):
        names = [n for n, _ in self.bindings]
        if not names:
            raise ValueError("declaration needs at least one variable")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate names in declaration: {names}")


@dataclass(frozen=True)
class Scope:
    """A declaration block whose variables already sit on the environment stack."""

    body: "Process"


@dataclass(frozen=True)
class Invoke:
    name: str
    args: tuple = ()


Process = Union[Nil, End, Prefix, Seq, Par, Restrict, Cond, Decl, Scope, Invoke]

NIL = Nil()
END = End()


# -- traversal helpers -------------------------------------------------------


def action_vars(action: Action) -> tuple:
    if isinstance(action, SendValue):
        return (action.expr,) if isinstance(action.expr, str) else ()
    if isinstance(action, (SendQubit, Recv)):
        return (action.var,)
    return tuple(action.vars)


def condition_vars(cond: Condition) -> tuple:
    if isinstance(cond, (Eq, Neq)):
        return (cond.var,) + ((cond.other,) if isinstance(cond.other, str) else ())
    return ()


def subterms(p: Process) -> Iterator[Process]:
    """Pre-order walk over ``p`` and all nested processes."""
    stack = [p]
    while stack:
        t = stack.pop()
        yield t
        if isinstance(t, Prefix):
            stack.append(t.rest)
        elif isinstance(t, (Seq, Par)):
            stack.extend((t.right, t.left))
        elif isinstance(t, (Restrict, Decl, Scope)):
            stack.append(t.body)
        elif isinstance(t, Cond):
            stack.extend(b for _, b in reversed(t.branches))


def all_names(p: Process) -> set:
    """Every variable name occurring in ``p``, bound or free."""
    cached = p.__dict__.get("_names")
    if cached is None:
        cached = frozenset(_all_names(p))
        object.__setattr__(p, "_names", cached)
    return set(cached)


def _all_names(p: Process) -> set:
    names = set()
    if isinstance(p, Prefix):
        names.update(action_vars(p.action))
        names |= all_names(p.rest)
    elif isinstance(p, (Seq, Par)):
        names = all_names(p.left) | all_names(p.right)
    elif isinstance(p, (Restrict, Scope)):
        names = all_names(p.body)
    elif isinstance(p, Decl):
        names = {n for n, _ in p.bindings} | all_names(p.body)
    elif isinstance(p, Cond):
        for c, b in p.branches:
            names.update(condition_vars(c))
            names |= all_names(b)
    elif isinstance(p, Invoke):
        names.update(p.args)
    return names


def free_vars(p: Process) -> set:
    if isinstance(p, (Nil, End)):
        return set()
    if isinstance(p, Prefix):
        return set(action_vars(p.action)) | free_vars(p.rest)
    if isinstance(p, (Seq, Par)):
        return free_vars(p.left) | free_vars(p.right)
    if isinstance(p, (Restrict, Scope)):
        return free_vars(p.body)
    if isinstance(p, Cond):
        out = set()
        for c, b in p.branches:
            out |= set(condition_vars(c)) | free_vars(b)
        return out
    if isinstance(p, Decl):
        return free_vars(p.body) - {n for n, _ in p.bindings}
    if isinstance(p, Invoke):
        return set(p.args)
    raise TypeError(p)


# -- renaming ----------------------------------------------------------------


def fresh_name(base: str, taken) -> str:
    stem = base.rsplit("_", 1)[0] if base.rsplit("_", 1)[-1].isdigit() else base
    i = 1
    while f"{stem}_{i}" in taken:
        i += 1
    return f"{stem}_{i}"


def _ren(x, m: dict):
    return m.get(x, x) if isinstance(x, str) else x


def _rename_action(a: Action, m: dict) -> Action:
    if isinstance(a, SendValue):
        return SendValue(a.gate, _ren(a.expr, m))
    if isinstance(a, SendQubit):
        return SendQubit(a.gate, _ren(a.var, m))
    if isinstance(a, Recv):
        return Recv(a.gate, _ren(a.var, m))
    if isinstance(a, SendMeasure):
        return SendMeasure(a.gate, a.observable, tuple(_ren(v, m) for v in a.vars))
    if isinstance(a, Unitary):
        return Unitary(a.name, tuple(_ren(v, m) for v in a.vars))
    return Measure(a.observable, tuple(_ren(v, m) for v in a.vars))


def _rename_cond(c: Condition, m: dict) -> Condition:
    if isinstance(c, Eq):
        return Eq(_ren(c.var, m), _ren(c.other, m))
    if isinstance(c, Neq):
        return Neq(_ren(c.var, m), _ren(c.other, m))
    return c


def substitute(p: Process, mapping: dict, avoid=frozenset()) -> Process:
    """Simultaneous capture-avoiding renaming of free variables.

    Inner binders that collide with a substituted-in name (or with ``avoid``)
    are renamed to fresh names first.
    """
    mapping = {k: v for k, v in mapping.items() if k != v}
    if not mapping:
        return p
    incoming = set(mapping.values()) | set(avoid)
    return _subst(p, mapping, incoming)


def _subst(p: Process, m: dict, incoming: set) -> Process:
    if not m or isinstance(p, (Nil, End)):
        return p
    if isinstance(p, Prefix):
        return Prefix(_rename_action(p.action, m), _subst(p.rest, m, incoming))
    if isinstance(p, Seq):
        return Seq(_subst(p.left, m, incoming), _subst(p.right, m, incoming))
    if isinstance(p, Par):
        return Par(_subst(p.left, m, incoming), _subst(p.right, m, incoming))
    if isinstance(p, Restrict):
        return Restrict(_subst(p.body, m, incoming), p.gates)
    if isinstance(p, Scope):
        return Scope(_subst(p.body, m, incoming))
    if isinstance(p, Cond):
        return Cond(tuple((_rename_cond(c, m), _subst(b, m, incoming)) for c, b in p.branches))
    if isinstance(p, Invoke):
        return Invoke(p.name, tuple(_ren(a, m) for a in p.args))
    if isinstance(p, Decl):
        inner = {k: v for k, v in m.items() if k not in {n for n, _ in p.bindings}}
        if not inner:
            return p
        taken = incoming | all_names(p.body) | set(inner)
        bindings = []
        for n, t in p.bindings:
            if n in incoming:
                new = fresh_name(n, taken)
                taken.add(new)
                inner[n] = new
                n = new
            bindings.append((n, t))
        return Decl(tuple(bindings), _subst(p.body, inner, incoming | set(inner.values())))
    raise TypeError(p)


# -- printing ----------------------------------------------------------------

_PAR, _SEQ, _PREFIX, _PRIMARY = range(4)

# Variable occurrences are wrapped in these markers inside the cached text so
# that renamings can be applied to the rendered string without re-printing.
VAR_OPEN, VAR_CLOSE = "\x02", "\x03"
VAR_RE = re.compile("\x02([^\x03]*)\x03")


def _v(name) -> str:
    return f"{VAR_OPEN}{name}{VAR_CLOSE}" if isinstance(name, str) else str(name)


def _vars(names) -> str:
    return ",".join(_v(n) for n in names)


def _marked_action(a: Action) -> str:
    if isinstance(a, SendValue):
        return f"{a.gate}!{_v(a.expr)}"
    if isinstance(a, SendQubit):
        return f"{a.gate}!{_v(a.var)}"
    if isinstance(a, SendMeasure):
        return f"{a.gate}!{a.observable}[{_vars(a.vars)}]"
    if isinstance(a, Recv):
        return f"{a.gate}?{_v(a.var)}"
    if isinstance(a, Unitary):
        return f"{a.name}[{_vars(a.vars)}]"
    return f"{a.observable}[{_vars(a.vars)}]"


def _marked_condition(c: Condition) -> str:
    if isinstance(c, TrueCond):
        return "true"
    if isinstance(c, FalseCond):
        return "false"
    op = "=" if isinstance(c, Eq) else "!="
    return f"{_v(c.var)} {op} {_v(c.other)}"


def _strip(text: str) -> str:
    return VAR_RE.sub(r"\1", text)


def unparse_action(a: Action) -> str:
    return _strip(_marked_action(a))


def unparse_condition(c: Condition) -> str:
    return _strip(_marked_condition(c))


def _level(p: Process) -> int:
    if isinstance(p, Par):
        return _PAR
    if isinstance(p, Seq):
        return _SEQ
    if isinstance(p, Prefix):
        return _PREFIX
    return _PRIMARY


def _wrap(p: Process, need: int) -> str:
    text = marked_text(p)
    return f"({text})" if _level(p) < need else text


def _render(p: Process) -> str:
    if isinstance(p, Nil):
        return "nil"
    if isinstance(p, End):
        return "end"
    if isinstance(p, Prefix):
        return f"{_marked_action(p.action)} . {_wrap(p.rest, _PREFIX)}"
    if isinstance(p, Seq):
        return f"{_wrap(p.left, _SEQ)} ; {_wrap(p.right, _PREFIX)}"
    if isinstance(p, Par):
        return f"{_wrap(p.left, _PAR)} || {_wrap(p.right, _SEQ)}"
    if isinstance(p, Restrict):
        return f"{_wrap(p.body, _PRIMARY)} \\ {{{', '.join(sorted(p.gates))}}}"
    if isinstance(p, Cond):
        inner = ", ".join(f"{_marked_condition(c)} -> {marked_text(b)}" for c, b in p.branches)
        return f"[ {inner} ]"
    if isinstance(p, Decl):
        decls = ", ".join(f"{_v(n)}:{t}" for n, t in p.bindings)
        return f"[ {decls} . {marked_text(p.body)} ]"
    if isinstance(p, Scope):
        return f"{{ {marked_text(p.body)} }}"
    if isinstance(p, Invoke):
        return f"{p.name}[{_vars(p.args)}]" if p.args else p.name
    raise TypeError(p)


def marked_text(p: Process) -> str:
    """Concrete syntax of ``p`` with variable occurrences wrapped in markers (cached)."""
    cached = p.__dict__.get("_marked")
    if cached is None:
        cached = _render(p)
        object.__setattr__(p, "_marked", cached)
    return cached


def unparse(p: Process) -> str:
    """Render ``p`` in concrete syntax; ``parse_process`` inverts it."""
    return _strip(marked_text(p))
