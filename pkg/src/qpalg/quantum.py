"""Dense density-matrix operations over named qubit registers.

A register is a sequence of qubit names ``q``; ``q[0]`` is the leftmost
(most significant) tensor factor of the matching density matrix.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import errors

EPS_MAT = 1e-9
EPS_PROB = 1e-12
DEFAULT_MAX_QUBITS = 10


def max_qubits() -> int:
    return int(os.environ.get("QPALG_MAX_QUBITS", DEFAULT_MAX_QUBITS))


# -- registries --------------------------------------------------------------


@dataclass(frozen=True)
class UnitaryEntry:
    name: str
    arity: int
    matrix: np.ndarray


@dataclass(frozen=True)
class ObservableEntry:
    name: str
    arity: int
    spectrum: tuple  # of (eigenvalue, projector)


def _frozen(m) -> np.ndarray:
    a = np.array(m, dtype=complex)
    a.setflags(write=False)
    return a


_S = 1 / np.sqrt(2)

UNITARIES = {
    "H": UnitaryEntry("H", 1, _frozen([[_S, _S], [_S, -_S]])),
    "I": UnitaryEntry("I", 1, _frozen(np.eye(2))),
    "X": UnitaryEntry("X", 1, _frozen([[0, 1], [1, 0]])),
    "Y": UnitaryEntry("Y", 1, _frozen([[0, -1j], [1j, 0]])),
    "Z": UnitaryEntry("Z", 1, _frozen([[1, 0], [0, -1]])),
    "CNot": UnitaryEntry(
        "CNot", 2, _frozen([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    ),
}


def _basis_projector(index: int, dim: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[index, index] = 1
    return _frozen(p)


def _std_observable(n: int) -> ObservableEntry:
    dim = 2**n
    return ObservableEntry(
        f"MStd{n}", n, tuple((b, _basis_projector(b, dim)) for b in range(dim))
    )


_PLUS = np.array([_S, _S])
_MINUS = np.array([_S, -_S])

OBSERVABLES = {
    "MStd1": _std_observable(1),
    "MStd2": _std_observable(2),
    # eigenvalue 0 for |+>, 1 for |->, so results are bits in either basis
    "MPlusMinus": ObservableEntry(
        "MPlusMinus",
        1,
        ((0, _frozen(np.outer(_PLUS, _PLUS))), (1, _frozen(np.outer(_MINUS, _MINUS)))),
    ),
}


def get_unitary(name: str) -> UnitaryEntry:
    try:
        return UNITARIES[name]
    except KeyError:
        raise errors.UnknownGateOrOperator(name) from None


def get_observable(name: str) -> ObservableEntry:
    try:
        return OBSERVABLES[name]
    except KeyError:
        raise errors.UnknownGateOrOperator(name) from None


# -- elementary states -------------------------------------------------------


def ket_bra(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex)
    return np.outer(v, v.conj())


def basis_state(bits: str) -> np.ndarray:
    """``|bits><bits|``, e.g. ``basis_state("01")``."""
    rho = np.zeros((2 ** len(bits),) * 2, dtype=complex)
    i = int(bits, 2) if bits else 0
    rho[i, i] = 1
    return rho


def kron(a, b) -> np.ndarray:
    return np.kron(a, b)


# -- register plumbing -------------------------------------------------------


def _positions(q, targets) -> list:
    pos = {name: i for i, name in enumerate(q)}
    out, seen = [], set()
    for t in targets:
        if t in seen:
            raise errors.DuplicateTarget(t)
        if t not in pos:
            raise errors.UnknownQubit(t)
        seen.add(t)
        out.append(pos[t])
    return out


def head_permutation(q, targets) -> np.ndarray:
    """Permutation matrix reordering the register so ``targets`` come first.

    ``Pi @ |b_q0 b_q1 ...>`` is the basis vector of the reordered register
    ``targets + (rest of q in order)``.
    """
    heads = _positions(q, targets)
    order = heads + [i for i in range(len(q)) if i not in heads]
    n = len(q)
    dim = 2**n
    pi = np.zeros((dim, dim))
    for src in range(dim):
        bits = format(src, f"0{n}b") if n else ""
        dst = int("".join(bits[i] for i in order), 2) if n else 0
        pi[dst, src] = 1
    return pi


def _as_tensor(rho, n):
    return np.asarray(rho).reshape((2,) * (2 * n))


def apply_superop(a, rho, q, targets) -> np.ndarray:
    """Conjugate ``rho`` by ``a`` acting on the named ``targets`` of register ``q``."""
    a = np.asarray(a, dtype=complex)
    heads = _positions(q, targets)
    n, m = len(q), len(heads)
    if a.shape != (2**m, 2**m):
        raise ValueError(f"operator of shape {a.shape} does not act on {m} qubit(s)")
    if n == 0:
        return np.array(rho, dtype=complex)
    order = heads + [i for i in range(n) if i not in heads]
    t = _as_tensor(rho, n).transpose(order + [n + i for i in order])
    t = t.reshape(2**m, 2 ** (n - m), 2**m, 2 ** (n - m))
    t = np.einsum("ab,bjck->ajck", a, t)
    t = np.einsum("ajck,dc->ajdk", t, a.conj())
    inverse = np.argsort(order).tolist()
    t = t.reshape((2,) * (2 * n)).transpose(inverse + [n + i for i in inverse])
    return np.ascontiguousarray(t.reshape(2**n, 2**n))


def partial_trace(rho, q, drop) -> np.ndarray:
    """Reduced state over ``q`` minus ``drop``, keeping the order of ``q``."""
    drop = set(drop)
    for name in drop:
        if name not in q:
            raise errors.UnknownQubit(name)
    n = len(q)
    if not drop:
        return np.array(rho, dtype=complex)
    keep = [i for i, name in enumerate(q) if name not in drop]
    gone = [i for i, name in enumerate(q) if name in drop]
    k, d = len(keep), len(gone)
    t = _as_tensor(rho, n).transpose(keep + gone + [n + i for i in keep] + [n + i for i in gone])
    t = t.reshape(2**k, 2**d, 2**k, 2**d)
    return np.ascontiguousarray(np.einsum("ajbj->ab", t))


def reduced_state(rho, q, keep) -> np.ndarray:
    """State of the qubits in ``keep`` (in register order)."""
    keep = set(keep)
    for name in keep:
        if name not in q:
            raise errors.UnknownQubit(name)
    return partial_trace(rho, q, [x for x in q if x not in keep])


def permute_register(rho, q, new_order) -> np.ndarray:
    """Re-express ``rho`` over the register ordered as ``new_order``."""
    if list(new_order) == list(q):
        return np.array(rho, dtype=complex)
    pi = head_permutation(q, new_order)
    return pi @ np.asarray(rho) @ pi.T


# -- measurement -------------------------------------------------------------


def measurement_branches(rho, q, observable: ObservableEntry, targets) -> list:
    """Outcomes of a projective measurement as ``(eigenvalue, p, post_state)``.

    Outcomes with probability below ``EPS_PROB`` are dropped and the rest
    renormalized by their sum.
    """
    if len(targets) != observable.arity:
        raise errors.UnitaryArityMismatch(observable.name, observable.arity, len(targets))
    raw = []
    for value, proj in observable.spectrum:
        projected = apply_superop(proj, rho, q, targets)
        p = float(np.trace(projected).real)
        if p >= EPS_PROB:
            raw.append((value, p, projected / p))
    total = sum(p for _, p, _ in raw)
    return [(value, p / total, post) for value, p, post in raw]


def collapse_mixture(rho, q, observable: ObservableEntry, targets) -> np.ndarray:
    """Post-measurement state when the outcome is discarded."""
    if len(targets) != observable.arity:
        raise errors.UnitaryArityMismatch(observable.name, observable.arity, len(targets))
    out = np.zeros_like(np.asarray(rho, dtype=complex))
    for _, proj in observable.spectrum:
        out = out + apply_superop(proj, rho, q, targets)
    return out


def validate_density(rho, tol: float = EPS_MAT) -> list:
    """Names of the density-matrix invariants ``rho`` violates (empty if valid)."""
    rho = np.asarray(rho)
    problems = []
    dim = rho.shape[0]
    if rho.ndim != 2 or rho.shape[1] != dim or dim & (dim - 1):
        return ["shape"]
    if not np.allclose(rho, rho.conj().T, atol=tol, rtol=0):
        problems.append("hermitian")
    if abs(np.trace(rho) - 1) > tol:
        problems.append("trace")
    herm = (rho + rho.conj().T) / 2
    if np.linalg.eigvalsh(herm).min() < -tol:
        problems.append("positive")
    return problems
