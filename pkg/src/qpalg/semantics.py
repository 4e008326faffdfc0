"""Small-step transition relation over process states.

Terms are walked recursively against a *view* of the environment: the part
of the cactus stack visible to the subterm. Parallel composition splits the
view into the shared base and each side's private sub-stack and grafts the
moving side's result back under a :class:`~qpalg.context.ParNode`.

Sends and receives are returned by the walk as *offers* whose effect on the
context is deferred: a parallel composition may pair two offers into a
silent communication, a restriction may hide them, and offers that reach
the top level become visible actions when the policy allows open actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import context as ctxmod
from . import errors, quantum
from .context import Mixed, ParNode, StableContext
from .parser import Program, formal_bindings
from .syntax import (
    Decl,
    End,
    Eq,
    FalseCond,
    Measure,
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
    all_names,
    fresh_name,
    substitute,
)

# -- labels ------------------------------------------------------------------


@dataclass(frozen=True)
class Tau:
    # diagnostics only: the gate of a communication and the value it carried
    via: str | None = field(default=None, compare=False)
    value: int | None = field(default=None, compare=False)
    unfolds: str | None = field(default=None, compare=False)  # definition invoked

    def __str__(self):
        return "tau"


@dataclass(frozen=True)
class Delta:
    def __str__(self):
        return "delta"


@dataclass(frozen=True)
class Prob:
    p: float

    def __post_init__(self):
        if not 0 < self.p <= 1 + quantum.EPS_PROB:
            raise ValueError(f"probability {self.p} outside (0, 1]")

    def __str__(self):
        return f"p={self.p:.4f}"


@dataclass(frozen=True)
class ValueOut:
    gate: str
    value: int

    def __str__(self):
        return f"{self.gate}!{self.value}"


@dataclass(frozen=True)
class ValueIn:
    gate: str
    value: int

    def __str__(self):
        return f"{self.gate}?{self.value}"


@dataclass(frozen=True)
class QubitOut:
    gate: str
    var: str
    state: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __str__(self):
        return f"{self.gate}!{self.var}"


@dataclass(frozen=True)
class QubitIn:
    gate: str
    var: str
    state: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __str__(self):
        return f"{self.gate}?{self.var}"


SILENT = (Tau, Prob)


def label_to_json(label) -> dict:
    if isinstance(label, Tau):
        return {"kind": "tau"}
    if isinstance(label, Delta):
        return {"kind": "delta"}
    if isinstance(label, Prob):
        return {"kind": "prob", "p": label.p}
    if isinstance(label, ValueOut):
        return {"kind": "send", "gate": label.gate, "value": label.value}
    if isinstance(label, ValueIn):
        return {"kind": "recv", "gate": label.gate, "value": label.value}
    kind = "send_qubit" if isinstance(label, QubitOut) else "recv_qubit"
    out = {"kind": kind, "gate": label.gate, "var": label.var}
    if label.state is not None:
        out["state"] = ctxmod.matrix_to_json(label.state)
    return out


def label_from_json(data):
    kind = data["kind"]
    if kind == "tau":
        return Tau()
    if kind == "delta":
        return Delta()
    if kind == "prob":
        return Prob(data["p"])
    if kind == "send":
        return ValueOut(data["gate"], data["value"])
    if kind == "recv":
        return ValueIn(data["gate"], data["value"])
    state = ctxmod.matrix_from_json(data["state"]) if "state" in data else None
    cls = QubitOut if kind == "send_qubit" else QubitIn
    return cls(data["gate"], data["var"], state)


# -- states and policy -------------------------------------------------------


def _ket0():
    return quantum.basis_state("0")


@dataclass(frozen=True, eq=False)
class EnvPolicy:
    """How the outside world answers sends and receives left open at top level."""

    input_domain: tuple = (0, 1)
    fresh_qubit_state: np.ndarray = field(default_factory=_ket0)
    allow_open_actions: bool = False

    def __post_init__(self):
        object.__setattr__(self, "input_domain", tuple(int(v) for v in self.input_domain))
        if self.allow_open_actions and not self.input_domain:
            raise ValueError("input_domain must be nonempty when open actions are allowed")
        nu = np.asarray(self.fresh_qubit_state, dtype=complex)
        if nu.shape != (2, 2) or quantum.validate_density(nu):
            raise ValueError("fresh_qubit_state must be a valid 2x2 density matrix")


@dataclass(frozen=True, eq=False)
class ProcessState:
    term: Process
    ctx: object  # StableContext | Mixed
    program: Program | None = field(default=None, compare=False, repr=False)

    def __eq__(self, other):
        if not isinstance(other, ProcessState):
            return NotImplemented
        return self.term == other.term and self.ctx == other.ctx

    __hash__ = None


def initial_state(program: Program, strict: bool = True) -> ProcessState:
    """``main`` in a context whose only frame holds main's interface variables."""
    if program.main is None:
        raise errors.SemanticError("missing main")
    ctx = ctxmod.empty_context(strict)
    if program.interface:
        ctx = ctxmod.declare(ctx, program.interface)
    return ProcessState(program.main, ctx, program)


# -- conditions and invocation -----------------------------------------------


def eval_condition(c, f: dict) -> bool:
    if isinstance(c, TrueCond):
        return True
    if isinstance(c, FalseCond):
        return False

    def value(e):
        if isinstance(e, int):
            return e
        if f.get(e) is None:
            raise errors.UndefinedVariable(e)
        return f[e]

    left, right = value(c.var), value(c.other)
    return left == right if isinstance(c, Eq) else left != right


def instantiate(program: Program, name: str, args, arg_types=None) -> Process:
    """Body of definition ``name`` with its leading declared variables replaced by ``args``.

    ``arg_types`` (optional) maps each argument to its type in the caller's scope.
    """
    if name not in program.definitions:
        raise errors.InvocationError(f"process {name!r} is not defined")
    body = program.definitions[name].body
    formals = formal_bindings(body)
    args = tuple(args)
    if len(args) > len(formals):
        raise errors.ArityMismatch(f"{name} takes at most {len(formals)} argument(s), got {len(args)}")
    if len(set(args)) != len(args):
        raise errors.DuplicateArgument(f"duplicate argument to {name}: {list(args)}")
    if arg_types is not None:
        for arg, (formal, want) in zip(args, formals):
            got = arg_types.get(arg)
            if got is None:
                raise errors.IllScoped(arg)
            if got is not want:
                raise errors.TypeMismatch(f"{name}: {formal} is {want} but {arg} is {got}")
    groups = []
    core = body
    while isinstance(core, Decl):
        groups.append(core.bindings)
        core = core.body
    replaced = {n for n, _ in formals[: len(args)]}
    mapping = dict(zip((n for n, _ in formals), args))
    for bindings in reversed(groups):
        kept = tuple(b for b in bindings if b[0] not in replaced)
        if kept:
            core = Decl(kept, core)
    return substitute(core, mapping)


# -- the walk ----------------------------------------------------------------


@dataclass(frozen=True)
class _Offer:
    """A send or receive waiting for a partner or for the environment."""

    kind: str  # 'send' | 'send_qubit' | 'recv' | 'recv_qubit'
    gate: str
    value: int | None = None
    var: str | None = None


def _strip_restrict_nil(term):
    return Nil() if isinstance(term, Restrict) and isinstance(term.body, Nil) else term


class _Walker:
    def __init__(self, program, policy, taken, bound=frozenset()):
        self.program = program
        self.policy = policy
        self.taken = taken
        # names declared anywhere in the context, including sibling parallel
        # branches the current step cannot see
        self.bound = bound

    # Each step returns a list of (label, term, ctx) where label is a label
    # object or an _Offer; an offer's ctx is the unchanged input context.

    def step(self, p: Process, c: StableContext) -> list:
        method = getattr(self, "_" + type(p).__name__)
        return method(p, c)

    def _Nil(self, p, c):
        return []

    def _End(self, p, c):
        return [(Delta(), Nil(), c)]

    def _lookup(self, c, x):
        t = ctxmod.visible_type(c.stack, x)
        if t is None:
            raise errors.IllScoped(x)
        return t

    def _attached(self, c, xs):
        for x in xs:
            self._lookup(c, x)
            if x not in c.qubits:
                raise errors.QubitNotInRegister(x)

    def _Prefix(self, p, c):
        a, rest = p.action, p.rest
        if isinstance(a, SendValue):
            if isinstance(a.expr, int):
                return [(_Offer("send", a.gate, value=a.expr), rest, c)]
            if self._lookup(c, a.expr) is VarType.QUBIT:
                return self._Prefix(Prefix(SendQubit(a.gate, a.expr), rest), c)
            v = c.f.get(a.expr)
            return [] if v is None else [(_Offer("send", a.gate, value=v), rest, c)]
        if isinstance(a, SendQubit):
            self._attached(c, [a.var])
            return [(_Offer("send_qubit", a.gate, var=a.var), rest, c)]
        if isinstance(a, Recv):
            if self._lookup(c, a.var) is VarType.NAT:
                return [(_Offer("recv", a.gate, var=a.var), rest, c)]
            if a.var in c.qubits:
                return []
            return [(_Offer("recv_qubit", a.gate, var=a.var), rest, c)]
        if isinstance(a, Unitary):
            entry = quantum.get_unitary(a.name)
            if len(a.vars) != entry.arity:
                raise errors.UnitaryArityMismatch(a.name, entry.arity, len(a.vars))
            self._attached(c, a.vars)
            rho = quantum.apply_superop(entry.matrix, c.rho, c.qubits, a.vars)
            return [(Tau(), rest, c.replace(rho=rho))]
        if isinstance(a, Measure):
            obs = quantum.get_observable(a.observable)
            if len(a.vars) != obs.arity:
                raise errors.UnitaryArityMismatch(a.observable, obs.arity, len(a.vars))
            self._attached(c, a.vars)
            rho = quantum.collapse_mixture(c.rho, c.qubits, obs, a.vars)
            return [(Tau(), rest, c.replace(rho=rho))]
        if isinstance(a, SendMeasure):
            return [self.measure_and_send(c, a.gate, a.observable, a.vars, rest)]
        raise TypeError(a)

    def measure_and_send(self, c, gate, observable, targets, rest):
        obs = quantum.get_observable(observable)
        if len(targets) != obs.arity:
            raise errors.UnitaryArityMismatch(observable, obs.arity, len(targets))
        self._attached(c, targets)
        y = fresh_name("y", self.taken)
        self.taken.add(y)
        branches = []
        for value, p, rho in quantum.measurement_branches(c.rho, c.qubits, obs, targets):
            ci = ctxmod.declare(c, [(y, VarType.NAT)])
            ci = ctxmod.set_classical(ci, y, value).replace(rho=rho)
            branches.append((p, ci))
        term = Seq(Scope(Prefix(SendValue(gate, y), End())), rest)
        return (Tau(), term, ctxmod.mix(branches))

    def _Seq(self, p, c):
        out = []
        for label, term, c2 in self.step(p.left, c):
            if isinstance(label, Delta):
                out.append((Tau(), p.right, c2))
            else:
                out.append((label, Seq(term, p.right), c2))
        return out

    def _Scope(self, p, c):
        out = []
        for label, term, c2 in self.step(p.body, c):
            if isinstance(label, Delta):
                out.append((Delta(), Nil(), ctxmod.exit_scope(c2)))
            else:
                out.append((label, Scope(term), c2))
        return out

    def _Restrict(self, p, c):
        out = []
        for label, term, c2 in self.step(p.body, c):
            if isinstance(label, _Offer) and label.gate in p.gates:
                continue
            out.append((label, _strip_restrict_nil(Restrict(term, p.gates)), c2))
        return out

    def _Cond(self, p, c):
        f = c.f
        return [(Tau(), body, c) for cond, body in p.branches if eval_condition(cond, f)]

    def _Decl(self, p, c):
        declared = {n for n, _ in ctxmod.iter_bindings(c.stack)}
        clash = declared | self.bound | set(c.qubits) | set(c.f)
        mapping = {}
        bindings = []
        for n, t in p.bindings:
            if n in clash:
                new = fresh_name(n, self.taken | clash)
                self.taken.add(new)
                mapping[n] = new
                n = new
            bindings.append((n, t))
        body = substitute(p.body, mapping)
        return [(Tau(), Scope(body), ctxmod.declare(c, bindings))]

    def _Invoke(self, p, c):
        if self.program is None:
            raise errors.InvocationError(f"no program to resolve {p.name!r}")
        types = {a: ctxmod.visible_type(c.stack, a) for a in p.args}
        return [(Tau(unfolds=p.name), instantiate(self.program, p.name, p.args, types), c)]

    # -- parallel composition ------------------------------------------------

    def _Par(self, p, c):
        view = c.stack
        if view and isinstance(view[-1], ParNode):
            base, s_left, s_right = view[:-1], view[-1].left, view[-1].right
        else:
            base, s_left, s_right = view, (), ()
        n = len(base)

        def graft(result, left_side: bool):
            def one(ci):
                side = ci.stack[n:]
                new_base = ci.stack[:n]
                pair = (side, s_right) if left_side else (s_left, side)
                stack = new_base + ((ParNode(*pair),) if pair[0] or pair[1] else ())
                return ci.replace(stack=stack)

            if isinstance(result, Mixed):
                return Mixed(tuple((pr, one(ci)) for pr, ci in result.branches))
            return one(result)

        left = self.step(p.left, c.replace(stack=base + s_left))
        right = self.step(p.right, c.replace(stack=base + s_right))
        out = []
        for label, term, c2 in left:
            if isinstance(label, _Offer):
                out.append((label, Par(term, p.right), c))
            elif not isinstance(label, Delta):
                out.append((label, Par(term, p.right), graft(c2, True)))
        for label, term, c2 in right:
            if isinstance(label, _Offer):
                out.append((label, Par(p.left, term), c))
            elif not isinstance(label, Delta):
                out.append((label, Par(p.left, term), graft(c2, False)))
        offers_l = [(lab, t) for lab, t, _ in left if isinstance(lab, _Offer)]
        offers_r = [(lab, t) for lab, t, _ in right if isinstance(lab, _Offer)]
        for senders, receivers, left_sends in ((offers_l, offers_r, True), (offers_r, offers_l, False)):
            for snd, ts in senders:
                if not snd.kind.startswith("send"):
                    continue
                for rcv, tr in receivers:
                    if not rcv.kind.startswith("recv") or rcv.gate != snd.gate:
                        continue
                    c2 = self.communicate(snd, rcv, c)
                    if c2 is None:
                        continue
                    term = Par(ts, tr) if left_sends else Par(tr, ts)
                    out.append((Tau(via=snd.gate, value=snd.value), term, c2))
        if any(isinstance(lab, Delta) for lab, _, _ in left) and any(
            isinstance(lab, Delta) for lab, _, _ in right
        ):
            gone = {name for name, _ in ctxmod.iter_bindings(s_left + s_right)}
            out.append((Delta(), Nil(), ctxmod.forget_names(c.replace(stack=base), gone)))
        return out

    def communicate(self, snd: _Offer, rcv: _Offer, c: StableContext):
        if snd.kind == "send":
            if rcv.kind == "recv":
                return ctxmod.set_classical(c, rcv.var, snd.value)
            if snd.value not in (0, 1):
                raise errors.InvalidQubitInit(snd.value)
            return ctxmod.attach_qubit(c, rcv.var, quantum.basis_state(str(snd.value)))
        if rcv.kind == "recv_qubit":
            return ctxmod.rename_qubit(c, snd.var, rcv.var)
        return None


# -- public entry points -----------------------------------------------------


def _taken_names(term, ctx) -> set:
    contexts = [b for _, b in ctx.branches] if isinstance(ctx, Mixed) else [ctx]
    names = set(all_names(term))
    for c in contexts:
        names.update(n for n, _ in ctxmod.iter_bindings(c.stack))
        names.update(c.qubits)
        names.update(c.f)
    return names


def _resolve_open(offer: _Offer, term, c: StableContext, policy: EnvPolicy) -> list:
    if offer.kind == "send":
        return [(ValueOut(offer.gate, offer.value), term, c)]
    if offer.kind == "send_qubit":
        state = ctxmod.qubit_reduced_state(c, offer.var)
        return [(QubitOut(offer.gate, offer.var, state), term, ctxmod.detach_qubit(c, offer.var))]
    if offer.kind == "recv":
        return [
            (ValueIn(offer.gate, v), term, ctxmod.set_classical(c, offer.var, v))
            for v in policy.input_domain
        ]
    c2 = ctxmod.attach_qubit(c, offer.var, policy.fresh_qubit_state)
    return [(QubitIn(offer.gate, offer.var, ctxmod.qubit_reduced_state(c2, offer.var)), term, c2)]


def transitions(state: ProcessState, policy: EnvPolicy | None = None) -> list:
    """Every transition of ``state`` as ``(label, ProcessState)``, in a fixed order."""
    policy = policy or EnvPolicy()
    ctx = state.ctx
    if isinstance(ctx, Mixed):
        return [(Prob(p), ProcessState(state.term, ci, state.program)) for p, ci in ctx.branches]
    bound = frozenset(n for n, _ in ctxmod.iter_bindings(ctx.stack))
    walker = _Walker(state.program, policy, _taken_names(state.term, ctx), bound)
    out = []
    for label, term, c2 in walker.step(state.term, ctx):
        if isinstance(label, _Offer):
            if policy.allow_open_actions:
                out.extend(
                    (lab, ProcessState(t, ci, state.program))
                    for lab, t, ci in _resolve_open(label, term, c2, policy)
                )
        else:
            out.append((label, ProcessState(term, c2, state.program)))
    return out


def measure_and_send_expand(state: ProcessState, gate: str, observable: str, targets, rest=None):
    """The single silent step of measuring ``targets`` and sending the outcome on ``gate``."""
    rest = End() if rest is None else rest
    walker = _Walker(state.program, EnvPolicy(), _taken_names(state.term, state.ctx))
    label, term, ctx = walker.measure_and_send(state.ctx, gate, observable, tuple(targets), rest)
    return [(label, ProcessState(term, ctx, state.program))]
