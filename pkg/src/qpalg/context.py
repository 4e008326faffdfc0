"""Execution contexts: environment stack, qubit register, density matrix and store.

The environment is a cactus stack stored as a tuple, bottom first. Its
elements are :class:`Frame` (one declaration block) or, on top only,
:class:`ParNode` holding the private sub-stacks of the two sides of a
parallel composition. Contexts are immutable; every operation returns a
new one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import errors, quantum
from .quantum import EPS_MAT, EPS_PROB
from .syntax import VarType

UNDEFINED = None


@dataclass(frozen=True)
class Frame:
    bindings: tuple  # of (name, VarType)

    def names(self) -> list:
        return [n for n, _ in self.bindings]


@dataclass(frozen=True)
class ParNode:
    left: tuple
    right: tuple


# -- stack helpers -----------------------------------------------------------


def iter_bindings(stack):
    """All ``(name, type)`` pairs of a stack tree, bottom first, left before right."""
    for element in stack:
        if isinstance(element, Frame):
            yield from element.bindings
        else:
            yield from iter_bindings(element.left)
            yield from iter_bindings(element.right)


def declared_type(stack, name):
    for n, t in iter_bindings(stack):
        if n == name:
            return t
    return None


def visible_type(stack, name):
    """Type of ``name`` as seen from the top of ``stack`` (innermost frame wins)."""
    for element in reversed(stack):
        if isinstance(element, Frame):
            for n, t in element.bindings:
                if n == name:
                    return t
    return None


def _remove_names(stack, names) -> tuple:
    out = []
    for element in stack:
        if isinstance(element, Frame):
            out.append(Frame(tuple((n, t) for n, t in element.bindings if n not in names)))
        else:
            out.append(ParNode(_remove_names(element.left, names), _remove_names(element.right, names)))
    return tuple(out)


def _frames_json(stack) -> list:
    out = []
    for element in stack:
        if isinstance(element, Frame):
            out.append({"bindings": [[n, t.value] for n, t in element.bindings]})
        else:
            out.append({"par": [_frames_json(element.left), _frames_json(element.right)]})
    return out


def _frames_from_json(data) -> tuple:
    out = []
    for element in data:
        if "bindings" in element:
            out.append(Frame(tuple((n, VarType(t)) for n, t in element["bindings"])))
        else:
            left, right = element["par"]
            out.append(ParNode(_frames_from_json(left), _frames_from_json(right)))
    return tuple(out)


def matrix_to_json(m) -> list:
    m = np.asarray(m)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    a = np.array(data, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


# -- contexts ----------------------------------------------------------------

_SCALAR = np.ones((1, 1), dtype=complex)


@dataclass(frozen=True, eq=False)
class StableContext:
    stack: tuple = ()
    qubits: tuple = ()
    rho: np.ndarray = field(default_factory=lambda: _SCALAR.copy())
    store: tuple = ()  # sorted (name, value) pairs
    strict: bool = True

    def __post_init__(self):
        rho = self.rho
        if not (isinstance(rho, np.ndarray) and rho.dtype == complex and not rho.flags.writeable):
            rho = np.array(rho, dtype=complex)
            rho.setflags(write=False)
        if rho.shape != (2 ** len(self.qubits),) * 2:
            raise ValueError(f"rho of shape {rho.shape} does not match {len(self.qubits)} qubit(s)")
        object.__setattr__(self, "rho", rho)
        if isinstance(self.store, dict) or list(self.store) != sorted(self.store):
            object.__setattr__(self, "store", tuple(sorted(dict(self.store).items())))

    @property
    def f(self) -> dict:
        return dict(self.store)

    def replace(self, **changes) -> "StableContext":
        fields = dict(stack=self.stack, qubits=self.qubits, rho=self.rho, store=self.store, strict=self.strict)
        fields.update(changes)
        return StableContext(**fields)

    def __eq__(self, other):
        if not isinstance(other, StableContext):
            return NotImplemented
        return (
            self.stack == other.stack
            and self.qubits == other.qubits
            and self.store == other.store
            and np.array_equal(self.rho, other.rho)
        )

    __hash__ = None

    def to_json(self) -> dict:
        return {
            "frames": _frames_json(self.stack),
            "qubits": list(self.qubits),
            "rho": matrix_to_json(self.rho),
            "classical": {n: v for n, v in self.store},
        }

    @classmethod
    def from_json(cls, data) -> "StableContext":
        return cls(
            _frames_from_json(data["frames"]),
            tuple(data["qubits"]),
            matrix_from_json(data["rho"]),
            tuple(data["classical"].items()),
        )


@dataclass(frozen=True, eq=False)
class Mixed:
    branches: tuple  # of (p, StableContext)

    def __eq__(self, other):
        if not isinstance(other, Mixed):
            return NotImplemented
        return len(self.branches) == len(other.branches) and all(
            p == q and a == b for (p, a), (q, b) in zip(self.branches, other.branches)
        )

    __hash__ = None

    def to_json(self) -> dict:
        return {"mixture": [{"p": p, "context": c.to_json()} for p, c in self.branches]}


def context_from_json(data):
    if "mixture" in data:
        return Mixed(tuple((b["p"], StableContext.from_json(b["context"])) for b in data["mixture"]))
    return StableContext.from_json(data)


def empty_context(strict: bool = True) -> StableContext:
    return StableContext(strict=strict)


# -- operations --------------------------------------------------------------


def declare(c: StableContext, bindings) -> StableContext:
    """Push a frame holding ``bindings``; variables start without values."""
    bindings = tuple((n, VarType(t)) for n, t in bindings)
    names = [n for n, _ in bindings]
    seen = set()
    for n in names:
        if n in seen:
            raise errors.DuplicateBinding(n)
        seen.add(n)
    if c.strict:
        for n, _ in iter_bindings(c.stack):
            if n in seen:
                raise errors.DuplicateBinding(n)
    return c.replace(stack=c.stack + (Frame(bindings),))


def exit_scope(c: StableContext) -> StableContext:
    """Pop the top frame, tracing out its qubits and forgetting its classical values."""
    if not c.stack or not isinstance(c.stack[-1], Frame):
        raise errors.EmptyStack()
    gone = set(c.stack[-1].names())
    return _forget(c.replace(stack=c.stack[:-1]), gone)


def _forget(c: StableContext, names) -> StableContext:
    drop = [x for x in c.qubits if x in names]
    rho = quantum.partial_trace(c.rho, c.qubits, drop) if drop else c.rho
    return c.replace(
        qubits=tuple(x for x in c.qubits if x not in names),
        rho=rho,
        store=tuple((n, v) for n, v in c.store if n not in names),
    )


def forget_names(c: StableContext, names) -> StableContext:
    """Drop ``names`` from the register (tracing them out) and from the store."""
    return _forget(c, set(names))


def _require(c: StableContext, x: str, want: VarType):
    t = declared_type(c.stack, x)
    if t is None:
        raise errors.NotDeclared(x)
    if t is not want:
        raise errors.WrongType(x, want)


def attach_qubit(c: StableContext, x: str, nu) -> StableContext:
    """Add ``x`` in state ``nu`` at the head of the register."""
    _require(c, x, VarType.QUBIT)
    if x in c.qubits:
        raise errors.AlreadyAttached(x)
    nu = np.asarray(nu, dtype=complex)
    if nu.shape != (2, 2):
        raise ValueError("a single qubit state must be 2x2")
    return c.replace(qubits=(x,) + c.qubits, rho=quantum.kron(nu, c.rho))


def detach_qubit(c: StableContext, x: str) -> StableContext:
    """Remove ``x`` from the register and the stack (the qubit leaves the process)."""
    if x not in c.qubits:
        raise errors.UnknownQubit(x)
    c = c.replace(stack=_remove_names(c.stack, {x}))
    return _forget(c, {x})


def rename_qubit(c: StableContext, x: str, y: str) -> StableContext:
    """Hand the register slot of ``x`` over to ``y``; ``x`` disappears from the stack."""
    if x not in c.qubits:
        raise errors.UnknownQubit(x)
    if y in c.qubits:
        raise errors.AlreadyAttached(y)
    _require(c, y, VarType.QUBIT)
    qubits = tuple(y if n == x else n for n in c.qubits)
    return c.replace(stack=_remove_names(c.stack, {x}), qubits=qubits)


def set_classical(c: StableContext, x: str, v: int) -> StableContext:
    _require(c, x, VarType.NAT)
    f = c.f
    f[x] = int(v)
    return c.replace(store=tuple(f.items()))


def get_classical(c: StableContext, x: str):
    """Value of ``x``, or ``UNDEFINED`` when it was never set."""
    _require(c, x, VarType.NAT)
    return c.f.get(x, UNDEFINED)


def mix(branches):
    """Build a probabilistic context; a single branch collapses to itself."""
    branches = tuple((float(p), c) for p, c in branches)
    if not branches:
        raise errors.BadDistribution("a mixture needs at least one branch")
    if any(p <= 0 for p, _ in branches):
        raise errors.BadDistribution("mixture weights must be positive")
    total = sum(p for p, _ in branches)
    if abs(total - 1) > EPS_PROB * max(1, len(branches)):
        raise errors.BadDistribution(f"mixture weights sum to {total}")
    if len(branches) == 1:
        return branches[0][1]
    return Mixed(branches)


def is_stable(c) -> bool:
    return isinstance(c, StableContext)


def qubit_reduced_state(c: StableContext, x: str) -> np.ndarray:
    """State of qubit ``x`` alone (everything else traced out)."""
    if x not in c.qubits:
        raise errors.UnknownQubit(x)
    return quantum.reduced_state(c.rho, c.qubits, [x])


def validate_context(c: StableContext, tol: float = EPS_MAT) -> list:
    """Invariant violations of a stable context (empty when well formed)."""
    problems = []
    names = [n for n, _ in iter_bindings(c.stack)]
    types = dict(iter_bindings(c.stack))
    if len(set(names)) != len(names):
        problems.append("duplicate declared names")
    if len(set(c.qubits)) != len(c.qubits):
        problems.append("duplicate qubit in register")
    for x in c.qubits:
        if types.get(x) is not VarType.QUBIT:
            problems.append(f"register qubit {x!r} not declared as Qubit")
    for n, _ in c.store:
        if types.get(n) is not VarType.NAT:
            problems.append(f"stored value for undeclared classical {n!r}")
    problems.extend(f"rho {p}" for p in quantum.validate_density(c.rho, tol))
    return problems


# -- equivalence -------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    renaming: dict  # names of the first context -> names of the second
    permutation: tuple  # i -> position in the second register of the i-th qubit of the first


def _pair_frames(a, b, out) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if isinstance(x, Frame) and isinstance(y, Frame):
            out.append((x, y))
        elif isinstance(x, ParNode) and isinstance(y, ParNode):
            if not (_pair_frames(x.left, y.left, out) and _pair_frames(x.right, y.right, out)):
                return False
        else:
            return False
    return True


def contexts_equivalent(c1: StableContext, c2: StableContext, tol: float = EPS_MAT):
    """A renaming and register permutation carrying ``c1`` onto ``c2``, or None."""
    pairs = []
    if not _pair_frames(c1.stack, c2.stack, pairs):
        return None
    if len(c1.qubits) != len(c2.qubits) or len(c1.store) != len(c2.store):
        return None
    f1, f2 = c1.f, c2.f
    q1, q2 = set(c1.qubits), set(c2.qubits)
    fixed = {}
    choices = []  # per frame: (attached names of c1, candidate orderings in c2)
    for fa, fb in pairs:
        nat_a = [n for n, t in fa.bindings if t is VarType.NAT]
        nat_b = [n for n, t in fb.bindings if t is VarType.NAT]
        if len(nat_a) != len(nat_b):
            return None

        def by_value(names, f):
            return sorted(names, key=lambda n: (n in f, f.get(n, -1)))

        sa, sb = by_value(nat_a, f1), by_value(nat_b, f2)
        if [f1.get(n) for n in sa] != [f2.get(n) for n in sb]:
            return None
        fixed.update(zip(sa, sb))
        qa = [n for n, t in fa.bindings if t is VarType.QUBIT]
        qb = [n for n, t in fb.bindings if t is VarType.QUBIT]
        if len(qa) != len(qb):
            return None
        att_a = [n for n in qa if n in q1]
        att_b = [n for n in qb if n in q2]
        if len(att_a) != len(att_b):
            return None
        fixed.update(zip([n for n in qa if n not in q1], [n for n in qb if n not in q2]))
        if att_a:
            choices.append((att_a, list(itertools.permutations(att_b))))
    for combo in itertools.product(*(cands for _, cands in choices)):
        sigma = dict(fixed)
        for (att_a, _), image in zip(choices, combo):
            sigma.update(zip(att_a, image))
        mapped = [sigma[x] for x in c1.qubits]
        if set(mapped) != q2:
            continue
        moved = quantum.permute_register(c1.rho, mapped, c2.qubits)
        if np.allclose(moved, c2.rho, atol=tol, rtol=0):
            pos = {n: i for i, n in enumerate(c2.qubits)}
            return Witness(sigma, tuple(pos[n] for n in mapped))
    return None
