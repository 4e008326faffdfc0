"""Direct matrix computations of the bundled protocols.

Nothing here uses the process semantics or the library's quantum module,
so agreement with the engine checks two independent computations.
"""

from __future__ import annotations

from itertools import product

import numpy as np

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.diag([1, -1]).astype(complex)
_P0 = np.diag([1, 0]).astype(complex)
_P1 = np.diag([0, 1]).astype(complex)
_PLUS = np.full((2, 2), 0.5, dtype=complex)
_MINUS = np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex)


def _op(*factors) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for f in factors:
        out = np.kron(out, f)
    return out


def _cnot(n: int, control: int, target: int) -> np.ndarray:
    """CNot on an ``n``-qubit register, qubit 0 most significant."""
    dim = 2**n
    m = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        bits = [(i >> (n - 1 - k)) & 1 for k in range(n)]
        if bits[control]:
            bits[target] ^= 1
        j = sum(b << (n - 1 - k) for k, b in enumerate(bits))
        m[j, i] = 1
    return m


def _conj(u, rho):
    return u @ rho @ u.conj().T


def _trace_out_first_two(rho) -> np.ndarray:
    return rho.reshape(4, 2, 4, 2).trace(axis1=0, axis2=2)


def oracle_build_epr() -> np.ndarray:
    """Bell pair density matrix from ``CNot (H x I) |00>``."""
    ket = _cnot(2, 0, 1) @ _op(_H, _I) @ np.array([1, 0, 0, 0], dtype=complex)
    return np.outer(ket, ket.conj())


def oracle_teleport(psi) -> tuple:
    """``(p_k for k in 0..3, corrected state of Bob's qubit per k)``.

    Register order is (psi, a, b); ``k = 2 m_psi + m_a`` and Bob applies
    I, X, Z, Y for k = 0..3.
    """
    psi = np.asarray(psi, dtype=complex)
    rho = np.kron(psi, np.diag([1, 0, 0, 0]).astype(complex))
    rho = _conj(_cnot(3, 1, 2) @ _op(_I, _H, _I), rho)  # EPR pair on (a, b)
    rho = _conj(_op(_H, _I, _I) @ _cnot(3, 0, 1), rho)  # Alice's rotation
    probs, states = [], []
    for k, fix in enumerate((_I, _X, _Z, _Y)):
        proj = _op(_P1 if k >> 1 else _P0, _P1 if k & 1 else _P0, _I)
        branch = proj @ rho @ proj
        p = float(np.trace(branch).real)
        probs.append(p)
        bob = _trace_out_first_two(branch) / p
        states.append(_conj(fix, bob))
    return probs, states


def oracle_bb84_round() -> dict:
    """Joint distribution over ``(dataA, baseA, baseB, dataB, keep)`` with an honest relay."""
    dist = {}
    for data_a, base_a, base_b in product((0, 1), repeat=3):
        qubit = _P1 if data_a else _P0
        if base_a == 1:
            qubit = _conj(_H, qubit)
        basis = (_P0, _P1) if base_b == 0 else (_PLUS, _MINUS)
        for data_b, proj in enumerate(basis):
            p = 0.125 * float(np.trace(proj @ qubit).real)
            if p > 1e-15:
                key = (data_a, base_a, base_b, data_b, int(base_a == base_b))
                dist[key] = dist.get(key, 0.0) + p
    return dist


__all__ = ["oracle_bb84_round", "oracle_build_epr", "oracle_teleport"]
