"""Probabilistic branching bisimulation between finite process graphs.

The checker refines a partition of the disjoint union of the two graphs.
Within a block ``K`` silent moves that stay in ``K`` are inert. A state's
*signature* collects what it can do that leaves the class: each visible
move ``(label, target block)`` and each internal move to another block
``('tau', block)``. Probabilistic moves out of a block are judged by the
reach probability ``mu`` instead, computed by solving a linear system.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import errors
from .context import contexts_equivalent
from .lts import ProcessGraph
from .quantum import EPS_MAT, EPS_PROB
from .semantics import Delta, Prob, QubitIn, QubitOut, Tau, ValueIn, ValueOut

CLAUSES = {
    "delta": "Termination",
    "send": "Value sending",
    "send_qubit": "Qubit sending",
    "recv": "Value reception",
    "recv_qubit": "Qubit reception",
    "tau": "Silent transition",
}
PROBABILITIES = "Probabilities"


# -- silent moves ------------------------------------------------------------


def silent_step(edge) -> bool:
    """True for internal and probabilistic transitions; accepts a label or an edge."""
    label = edge[1] if isinstance(edge, tuple) else edge
    return isinstance(label, (Tau, Prob))


def silent_closure(graph: ProcessGraph, start: int) -> set:
    """States reachable from ``start`` by zero or more silent transitions."""
    adj = graph.adjacency()
    seen = {start}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for label, t in adj[s]:
            if silent_step(label) and t not in seen:
                seen.add(t)
                queue.append(t)
    return seen


# -- partitions --------------------------------------------------------------


@dataclass
class Partition:
    block_of: list  # state index -> block id

    def blocks(self) -> list:
        """Blocks as sorted lists, ordered by their smallest state."""
        groups = {}
        for s, b in enumerate(self.block_of):
            groups.setdefault(b, []).append(s)
        return sorted(groups.values(), key=lambda g: g[0])

    def same_block(self, s: int, t: int) -> bool:
        return self.block_of[s] == self.block_of[t]

    def members(self, block_id) -> list:
        return [s for s, b in enumerate(self.block_of) if b == block_id]


def disjoint_union(g1: ProcessGraph, g2: ProcessGraph) -> ProcessGraph:
    """Both graphs side by side; states of ``g2`` are shifted by ``len(g1.states)``."""
    n = len(g1.states)
    edges = list(g1.edges) + [(s + n, label, t + n) for s, label, t in g2.edges]
    return ProcessGraph(list(g1.states) + list(g2.states), g1.initial, edges, g1.limits, g1.truncated or g2.truncated)


# -- label keys --------------------------------------------------------------


class _Clusters:
    """Assigns equal ids to items equal under a tolerance-based test."""

    def __init__(self, same):
        self.same = same
        self.reps = []

    def id(self, item) -> int:
        for i, rep in enumerate(self.reps):
            if self.same(rep, item):
                return i
        self.reps.append(item)
        return len(self.reps) - 1


def _same_state(a, b):
    if a is None or b is None:
        return a is b
    return np.allclose(a, b, atol=EPS_MAT, rtol=0)


def _same_context(a, b):
    if a is None or b is None:
        return a is b
    return contexts_equivalent(a, b) is not None


class _Keys:
    def __init__(self, graph: ProcessGraph):
        self.graph = graph
        self.qubits = _Clusters(_same_state)
        self.contexts = _Clusters(_same_context)

    def key(self, label, target):
        if isinstance(label, ValueOut):
            return ("send", label.gate, label.value)
        if isinstance(label, ValueIn):
            return ("recv", label.gate, label.value)
        if isinstance(label, QubitOut):
            return ("send_qubit", label.gate, self.qubits.id(label.state))
        if isinstance(label, QubitIn):
            return ("recv_qubit", label.gate, self.qubits.id(label.state))
        if isinstance(label, Delta):
            states = self.graph.states
            ctx = states[target].ctx if states and states[target] is not None else None
            return ("delta", self.contexts.id(ctx))
        raise TypeError(label)


def _describe(key, rep) -> str:
    """A signature entry in words; ``rep`` is the smallest state of the target class."""
    kind = key[0]
    where = f"into the class of state {rep}"
    if kind == "tau":
        return f"an internal move {where}"
    if kind == "delta":
        return f"termination (context class {key[1]}) {where}"
    if kind in ("send_qubit", "recv_qubit"):
        sign = "!" if kind == "send_qubit" else "?"
        return f"{key[1]}{sign}<qubit state class {key[2]}> {where}"
    sign = "!" if kind == "send" else "?"
    return f"{key[1]}{sign}{key[2]} {where}"


# -- the union graph with precomputed structure ------------------------------


class _Structure:
    def __init__(self, graph: ProcessGraph):
        self.graph = graph
        n = len(graph.states)
        self.n = n
        keys = _Keys(graph)
        # out[s]: list of (kind, key, target, p) with kind in {'prob', 'tau', 'vis'}
        self.out = [[] for _ in range(n)]
        self.rev = [[] for _ in range(n)]
        for s, label, t in graph.edges:
            if isinstance(label, Prob):
                self.out[s].append(("prob", None, t, label.p))
            elif isinstance(label, Tau):
                self.out[s].append(("tau", None, t, None))
            else:
                self.out[s].append(("vis", keys.key(label, t), t, None))
            self.rev[t].append(s)

    # -- signatures ----------------------------------------------------------

    def signatures(self, block_of) -> list:
        sig = [set() for _ in range(self.n)]
        for s in range(self.n):
            for kind, key, t, _ in self.out[s]:
                if kind == "vis":
                    sig[s].add((key, block_of[t]))
                elif kind == "tau" and block_of[t] != block_of[s]:
                    sig[s].add((("tau",), block_of[t]))
        return sig

    def reach_signatures(self, block_of, sig) -> list:
        """Union of signatures over each state's inert silent closure."""
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        for s in range(self.n):
            for kind, _, t, _ in self.out[s]:
                if kind in ("prob", "tau") and block_of[t] == block_of[s]:
                    g.add_edge(s, t)
        cond = nx.condensation(g)
        members = nx.get_node_attributes(cond, "members")
        comp_sig = {}
        for c in reversed(list(nx.topological_sort(cond))):
            acc = set()
            for s in members[c]:
                acc |= sig[s]
            for d in cond.successors(c):
                acc |= comp_sig[d]
            comp_sig[c] = acc
        mapping = cond.graph["mapping"]
        return [comp_sig[mapping[s]] for s in range(self.n)]

    # -- mu ------------------------------------------------------------------

    def support(self, in_block, in_target) -> set:
        """States of the block from which the target is reachable inside block ∪ target."""
        reach = set()
        queue = deque(s for s in range(self.n) if in_target[s])
        seen = set(queue)
        while queue:
            t = queue.popleft()
            for s in self.rev[t]:
                if s not in seen and in_block[s]:
                    seen.add(s)
                    reach.add(s)
                    queue.append(s)
        return reach


@dataclass
class MuSystem:
    """Reach probabilities of one block towards a target block as ``X = AX + B``.

    Only states with a nonzero reach probability are unknowns; every other
    state of the block has ``mu = 0``.
    """

    states: list  # unknown i is the mu value of states[i]
    a: sp.csr_matrix
    b: np.ndarray

    def distance_bound(self) -> int:
        """Longest shortest-path length (in coefficient edges) to the target."""
        m = len(self.states)
        dist = np.full(m, -1)
        dist[self.b > 0] = 1
        frontier = list(np.flatnonzero(self.b > 0))
        at = self.a.T.tocsr()
        while frontier:
            nxt = []
            for j in frontier:
                for i in at.indices[at.indptr[j] : at.indptr[j + 1]]:
                    if dist[i] < 0:
                        dist[i] = dist[j] + 1
                        nxt.append(i)
            frontier = nxt
        if np.any(dist < 0):
            raise errors.ContractionViolated("a state of the system cannot reach the target")
        return int(dist.max()) if m else 0

    def transformed(self):
        """``(k, A^k row sums, B_k)`` for the system ``X = A^k X + sum_{j<k} A^j B``.

        Raw rows of ``A`` may sum to 1 (a chain of moves inside the block);
        after ``k`` substitutions every row sum is below 1 and every constant
        is positive.
        """
        k = self.distance_bound()
        row_sums = np.ones(len(self.states))
        bk = np.zeros(len(self.states))
        acc = self.b.copy()
        for _ in range(k):
            bk += acc
            acc = self.a @ acc
            row_sums = self.a @ row_sums
        return k, row_sums, bk

    def solve(self, log=None) -> np.ndarray:
        """Exact solution by sparse elimination, after checking the contraction bound."""
        m = len(self.states)
        if m == 0:
            return np.zeros(0)
        a, b = self.a, self.b
        if np.any(a.data < 0) or np.any(a.data > 1 + EPS_PROB) or np.any(b < 0) or np.any(b > 1 + EPS_PROB):
            raise errors.ContractionViolated("coefficients outside [0, 1]")
        k, row_sums, bk = self.transformed()
        norm = float(row_sums.max())
        if not norm < 1 or np.any(bk <= 0):
            raise errors.ContractionViolated(f"||A^{k}|| = {norm}")
        try:
            x = spla.spsolve((sp.identity(m, format="csc") - a).tocsc(), b)
        except RuntimeError as exc:  # pragma: no cover - singular only on a contraction bug
            raise errors.SingularSystem(str(exc)) from exc
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise errors.SingularSystem("non-finite solution")
        if x.min() < -EPS_PROB or x.max() > 1 + 1e-9:
            raise errors.ContractionViolated(f"solution outside [0, 1]: [{x.min()}, {x.max()}]")
        x = np.clip(x, 0.0, 1.0)
        if log is not None:
            log.append(MuStats(m, k, norm, float(bk.min()), float(x.min()), float(x.max())))
        return x

    def fixpoint(self, tol: float = 1e-13, max_iter: int = 1_000_000) -> np.ndarray:
        """Solution by iterating ``x <- Ax + B`` from zero; an independent check on :meth:`solve`."""
        x = np.zeros(len(self.states))
        for _ in range(max_iter):
            nxt = self.a @ x + self.b
            if np.max(np.abs(nxt - x), initial=0.0) < tol:
                return nxt
            x = nxt
        raise errors.ContractionViolated("fixpoint iteration did not converge")


@dataclass
class MuStats:
    """Diagnostics of one solved system."""

    size: int
    power: int  # k of the contracting transformed system
    norm: float  # infinity norm of A^k
    min_b: float  # smallest constant of the transformed system
    min_x: float
    max_x: float


def _build_system(st: _Structure, block, block_of, target_id) -> MuSystem:
    in_block = np.zeros(st.n, bool)
    in_block[block] = True
    in_target = np.array([b == target_id for b in block_of])
    supp = st.support(in_block, in_target)
    order = sorted(supp)
    index = {s: i for i, s in enumerate(order)}
    rows, cols, data = [], [], []
    b = np.zeros(len(order))

    def ok(t):
        return in_target[t] or t in supp

    for s in order:
        i = index[s]
        coeff = {}
        prob = [(t, p) for kind, _, t, p in st.out[s] if kind == "prob" and ok(t)]
        if prob:
            for t, p in prob:
                coeff[t] = coeff.get(t, 0.0) + p
        else:
            targets = sorted({t for kind, _, t, _ in st.out[s] if kind != "prob" and ok(t)})
            for t in targets:
                coeff[t] = 1.0 / len(targets)
        for t, c in coeff.items():
            if in_target[t]:
                b[i] += c
            else:
                rows.append(i)
                cols.append(index[t])
                data.append(c)
    m = len(order)
    return MuSystem(order, sp.csr_matrix((data, (rows, cols)), shape=(m, m)), b)


def _mu_block(st: _Structure, block, block_of, target_id, log=None) -> dict:
    """mu(S, M) for every S of ``block`` where M is the block ``target_id``."""
    system = _build_system(st, block, block_of, target_id)
    values = {s: 0.0 for s in block}
    for s, x in zip(system.states, system.solve(log)):
        values[s] = float(x)
    return values


def _block_id(partition, states) -> int:
    ids = {partition.block_of[s] for s in states}
    if len(ids) != 1:
        raise ValueError("states must form part of a single block")
    return ids.pop()


def mu_system(graph: ProcessGraph, partition: Partition, state: int, target) -> MuSystem:
    """The linear system whose solution gives ``mu`` for the block of ``state``."""
    target_id = target if isinstance(target, (int, np.integer)) else _block_id(partition, target)
    block = partition.members(partition.block_of[state])
    return _build_system(_Structure(graph), block, list(partition.block_of), target_id)


def mu(graph: ProcessGraph, partition: Partition, state: int, target) -> float:
    """Probability of reaching the ``target`` block from ``state`` without leaving its class.

    ``target`` is a block id of ``partition`` or a collection of states of one block.
    """
    target_id = target if isinstance(target, (int, np.integer)) else _block_id(partition, target)
    if partition.block_of[state] == target_id:
        return 1.0
    st = _Structure(graph)
    block = partition.members(partition.block_of[state])
    return _mu_block(st, block, list(partition.block_of), target_id)[state]


def reaches_within(graph: ProcessGraph, state: int, target, own) -> bool:
    """Whether some path leads from ``state`` into ``target`` staying inside ``target`` and ``own``.

    ``target`` and ``own`` are state collections; ``own`` is the class of ``state``.
    """
    target, own = set(target), set(own)
    if state in target:
        return True
    st = _Structure(graph)
    in_block = np.array([s in own for s in range(st.n)])
    in_target = np.array([s in target for s in range(st.n)])
    return state in st.support(in_block, in_target)


# -- clause checking ---------------------------------------------------------


@dataclass
class Violation:
    left: int
    right: int
    clause: str
    detail: str
    splitter: object = field(default=None, repr=False)  # ('key', k) or ('mu', target block)
    mu_left: float | None = None
    mu_right: float | None = None

    def to_json(self) -> dict:
        out = {"left": self.left, "right": self.right, "clause": self.clause, "detail": self.detail}
        if self.mu_left is not None:
            out["mu_left"] = self.mu_left
            out["mu_right"] = self.mu_right
        return out


class _Checker:
    def __init__(self, graph: ProcessGraph, tol: float = EPS_PROB):
        self.st = _Structure(graph)
        self.tol = tol
        self.mu_log = []

    def prepare(self, block_of):
        self.block_of = block_of
        self.sig = self.st.signatures(block_of)
        self.reach = self.st.reach_signatures(block_of, self.sig)
        self.mu_cache = {}
        self.succ_cache = {}
        self.rep = {}
        for state, b in enumerate(block_of):
            self.rep.setdefault(b, state)

    def successor_blocks(self, block) -> list:
        own = self.block_of[block[0]]
        if own in self.succ_cache:
            return self.succ_cache[own]
        found = set()
        for s in block:
            for _, _, t, _ in self.st.out[s]:
                if self.block_of[t] != own:
                    found.add(self.block_of[t])
        self.succ_cache[own] = sorted(found)
        return self.succ_cache[own]

    def mu_values(self, block, target_id) -> dict:
        key = (self.block_of[block[0]], target_id)
        if key not in self.mu_cache:
            self.mu_cache[key] = _mu_block(self.st, block, self.block_of, target_id, self.mu_log)
        return self.mu_cache[key]

    def action_violation(self, s, t):
        missing = sorted(self.sig[s] - self.reach[t], key=repr)
        if not missing:
            return None
        key, blk = missing[0]
        return Violation(
            s,
            t,
            CLAUSES[key[0]],
            f"state {s} can do {_describe(key, self.rep[blk])}; state {t} cannot match it",
            ("key", (key, blk)),
        )

    def pair(self, block, s, t):
        v = self.action_violation(s, t) or self.action_violation(t, s)
        if v:
            return v
        for m in self.successor_blocks(block):
            values = self.mu_values(block, m)
            if abs(values[s] - values[t]) > self.tol:
                return Violation(
                    s,
                    t,
                    PROBABILITIES,
                    f"mu towards the class of state {self.rep[m]}: {values[s]:.12g} vs {values[t]:.12g}",
                    ("mu", m),
                    values[s],
                    values[t],
                )
        return None

    def block_violation(self, block):
        rep = block[0]
        for v in block[1:]:
            found = self.pair(block, rep, v)
            if found:
                return found
        union = set().union(*(self.sig[s] for s in block))
        for v in block:
            missing = sorted(union - self.reach[v], key=repr)
            if missing:
                key, blk = missing[0]
                owner = next(s for s in block if (key, blk) in self.sig[s])
                return Violation(
                    owner,
                    v,
                    CLAUSES[key[0]],
                    f"state {owner} can do {_describe(key, self.rep[blk])}; state {v} cannot match it",
                    ("key", (key, blk)),
                )
        return None

    def split(self, block, violation) -> list:
        kind, what = violation.splitter
        if kind == "key":
            yes = [s for s in block if what in self.reach[s]]
            no = [s for s in block if what not in self.reach[s]]
            return [g for g in (yes, no) if g]
        values = self.mu_values(block, what)
        ordered = sorted(block, key=lambda s: values[s])
        groups = [[ordered[0]]]
        for s in ordered[1:]:
            if values[s] - values[groups[-1][-1]] > self.tol:
                groups.append([s])
            else:
                groups[-1].append(s)
        return [sorted(g) for g in groups]


def clause_check(graph: ProcessGraph, partition: Partition, s: int, t: int, tol: float = EPS_PROB):
    """First clause violated by the pair ``(s, t)`` under ``partition``, or None."""
    if not partition.same_block(s, t):
        raise ValueError("clause_check expects two states of the same block")
    checker = _Checker(graph, tol)
    checker.prepare(list(partition.block_of))
    return checker.pair(partition.members(partition.block_of[s]), s, t)


# -- the decision procedure --------------------------------------------------


@dataclass
class Verdict:
    equivalent: bool
    witness: Partition
    counterexample: Violation | None = None
    splits: int = 0
    mu_systems: list = field(default_factory=list)
    offset: int = 0  # index of the second graph's first state in the union

    def to_json(self) -> dict:
        return {
            "equivalent": self.equivalent,
            "blocks": self.witness.blocks(),
            "counterexample": self.counterexample.to_json() if self.counterexample else None,
        }


def refine(graph: ProcessGraph, tol: float = EPS_PROB, watch=None):
    """Coarsest partition of ``graph`` satisfying every clause.

    ``watch`` is an optional pair of states; the violation that first puts
    them in different blocks is returned alongside the partition.
    """
    checker = _Checker(graph, tol)
    block_of = [0] * len(graph.states)
    splits = 0
    separating = None
    while True:
        checker.prepare(block_of)
        current = Partition(block_of)
        new_block_of = list(block_of)
        next_id = max(block_of, default=0) + 1
        changed = False
        for block in current.blocks():
            if len(block) < 2:
                continue
            violation = checker.block_violation(block)
            if violation is None:
                continue
            parts = checker.split(block, violation)
            if len(parts) < 2:  # pragma: no cover - a violation always separates its pair
                raise RuntimeError("refinement made no progress")
            for part in parts[1:]:
                for s in part:
                    new_block_of[s] = next_id
                next_id += 1
            splits += len(parts) - 1
            changed = True
            if (
                separating is None
                and watch is not None
                and block_of[watch[0]] == block_of[watch[1]]
                and new_block_of[watch[0]] != new_block_of[watch[1]]
            ):
                own = checker.pair(block, *watch)
                separating = own or violation
        if not changed:
            return Partition(_normalize(block_of)), splits, separating, checker.mu_log
        block_of = new_block_of


def _normalize(block_of) -> list:
    ids = {}
    return [ids.setdefault(b, len(ids)) for b in block_of]


def check_equivalence(g1: ProcessGraph, g2: ProcessGraph, tol: float = EPS_PROB) -> Verdict:
    """Decide whether the initial states of ``g1`` and ``g2`` are bisimilar."""
    if g1.truncated or g2.truncated:
        raise errors.TruncatedGraph("cannot decide equivalence on a truncated graph")
    union = disjoint_union(g1, g2)
    offset = len(g1.states)
    a, b = g1.initial, g2.initial + offset
    partition, splits, separating, log = refine(union, tol, watch=(a, b))
    equivalent = partition.same_block(a, b)
    return Verdict(equivalent, partition, None if equivalent else separating, splits, log, offset)
