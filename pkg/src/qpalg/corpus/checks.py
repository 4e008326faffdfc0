"""Graph analyses and the per-protocol checks run by ``qpalg corpus``."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .. import corpus
from ..context import Mixed, qubit_reduced_state
from ..lts import ProcessGraph, explore
from ..quantum import permute_register
from ..semantics import EnvPolicy, Prob, Tau, ValueOut
from .oracles import oracle_bb84_round, oracle_build_epr, oracle_teleport

TOL = 1e-9

TELEPORT_INPUTS = {
    "|0>": np.diag([1.0, 0.0]),
    "|1>": np.diag([0.0, 1.0]),
    "|+>": np.full((2, 2), 0.5),
    "sqrt(1/3)|0> + sqrt(2/3)|1>": np.outer([np.sqrt(1 / 3), np.sqrt(2 / 3)], [np.sqrt(1 / 3), np.sqrt(2 / 3)]),
}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f": {self.detail}" if self.detail else "")


# -- graph analyses ----------------------------------------------------------


def _order(graph: ProcessGraph) -> list:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(graph.states)))
    g.add_edges_from((s, t) for s, _, t in graph.edges)
    if not nx.is_directed_acyclic_graph(g):
        raise ValueError("graph has cycles")
    return list(nx.topological_sort(g))


def reach_probability_bounds(graph: ProcessGraph, event) -> tuple:
    """Min and max over schedulers of the probability of taking an edge satisfying ``event``.

    Probabilistic states average over their branches; every other state lets
    the scheduler pick an outgoing edge. ``graph`` must be acyclic.
    """
    adj = graph.adjacency()
    lo = np.zeros(len(graph.states))
    hi = np.zeros(len(graph.states))
    for s in reversed(_order(graph)):
        if not adj[s]:
            continue
        vals = [(1.0, 1.0) if event(label) else (lo[t], hi[t]) for label, t in adj[s]]
        if isinstance(adj[s][0][0], Prob):
            ps = [label.p for label, _ in adj[s]]
            lo[s] = sum(p * v[0] for p, v in zip(ps, vals))
            hi[s] = sum(p * v[1] for p, v in zip(ps, vals))
        else:
            lo[s] = min(v[0] for v in vals)
            hi[s] = max(v[1] for v in vals)
    return float(lo[graph.initial]), float(hi[graph.initial])


def terminal_observations(graph: ProcessGraph, observe) -> dict:
    """For each terminal, the set of tuples of labels seen along some path to it.

    ``observe(label)`` returns ``(slot, value)`` for labels to record, else None;
    each tuple holds the last value recorded per slot, in sorted slot order.
    """
    adj = graph.adjacency()
    seen = {graph.initial: {()}}
    for s in _order(graph):
        if s not in seen:
            continue
        for label, t in adj[s]:
            obs = observe(label)
            for history in seen[s]:
                h = history
                if obs is not None:
                    h = tuple(sorted(dict(history, **{obs[0]: obs[1]}).items()))
                seen.setdefault(t, set()).add(h)
    return {s: seen.get(s, set()) for s in graph.terminal_states()}


def outcome_distribution(graph: ProcessGraph, observe) -> dict:
    """Distribution of the recorded labels at termination under the first-edge scheduler."""
    adj = graph.adjacency()
    mass = {(graph.initial, ()): 1.0}
    out = {}
    for s in _order(graph):
        for (state, history), p in [(k, v) for k, v in mass.items() if k[0] == s]:
            del mass[(state, history)]
            if not adj[s]:
                out[history] = out.get(history, 0.0) + p
                continue
            moves = adj[s] if isinstance(adj[s][0][0], Prob) else adj[s][:1]
            for label, t in moves:
                w = label.p if isinstance(label, Prob) else 1.0
                obs = observe(label)
                h = history if obs is None else tuple(sorted(dict(history, **{obs[0]: obs[1]}).items()))
                mass[(t, h)] = mass.get((t, h), 0.0) + p * w
    return out


def path_kinds(graph: ProcessGraph, is_delivery, is_interception) -> set:
    """Which deliveries are reachable: ``'intercepted'`` after an interception, ``'direct'`` otherwise.

    The interception flag resets after each delivery, so each delivered
    qubit is classified on its own.
    """
    adj = graph.adjacency()
    start = (graph.initial, False)
    seen = {start}
    queue = deque([start])
    kinds = set()
    while queue:
        s, flagged = queue.popleft()
        for label, t in adj[s]:
            nxt = flagged or is_interception(label)
            if is_delivery(label):
                kinds.add("intercepted" if flagged else "direct")
                nxt = False
            if (t, nxt) not in seen:
                seen.add((t, nxt))
                queue.append((t, nxt))
    return kinds


def _tau_via(gate, value=None):
    def test(label):
        return isinstance(label, Tau) and label.via == gate and (value is None or label.value == value)

    return test


# -- protocol checks ---------------------------------------------------------


def check_teleport(inputs=None) -> list:
    out = []
    program = corpus.load_program("teleport")
    for name, psi in (inputs or TELEPORT_INPUTS).items():
        start = time.perf_counter()
        graph = explore(program, corpus.teleport_policy(psi))
        probs, states = oracle_teleport(psi)
        mixed = [i for i, s in enumerate(graph.states) if isinstance(s.ctx, Mixed)]
        adj = graph.adjacency()
        branch_ok = bool(mixed) and all(
            len(adj[i]) == 4
            and all(isinstance(lab, Prob) for lab, _ in adj[i])
            and np.allclose(sorted(lab.p for lab, _ in adj[i]), sorted(probs), atol=TOL, rtol=0)
            for i in mixed
        )
        terminals = graph.terminal_states()
        finals = []
        for i in terminals:
            ctx = graph.states[i].ctx
            finals.append(len(ctx.qubits) == 1 and np.allclose(qubit_reduced_state(ctx, ctx.qubits[0]), psi, atol=TOL, rtol=0))
        oracle_ok = all(np.allclose(z, psi, atol=TOL, rtol=0) for z in states)
        elapsed = time.perf_counter() - start
        out.append(Check(f"teleport {name}: measurement has 4 branches of weight 1/4", branch_ok, f"{len(mixed)} branching state(s)"))
        out.append(
            Check(
                f"teleport {name}: every terminal holds psi",
                bool(terminals) and all(finals) and oracle_ok and not graph.truncated,
                f"{len(terminals)} terminal(s), {elapsed:.3f}s",
            )
        )
    return out


def check_buildepr() -> list:
    graph = explore(corpus.load_program("buildepr"))
    bell = oracle_build_epr()
    results = []
    for i in graph.terminal_states():
        ctx = graph.states[i].ctx
        rho = permute_register(ctx.rho, ctx.qubits, ["a", "b"])
        halves = [qubit_reduced_state(ctx, x) for x in ctx.qubits]
        results.append(
            np.allclose(rho, bell, atol=TOL, rtol=0) and all(np.allclose(h, np.eye(2) / 2, atol=TOL, rtol=0) for h in halves)
        )
    terminals = graph.terminal_states()
    return [Check("buildepr: terminal state is the Bell pair with maximally mixed halves", bool(terminals) and all(results), f"{len(terminals)} terminal(s)")]


def keep_observer(label):
    """Records the keep decision and the key bits handed out by each side."""
    if isinstance(label, ValueOut) and label.gate in ("keepDataA", "keepDataB"):
        return label.gate, label.value
    if isinstance(label, Tau) and label.via == "keep":
        return "keep", label.value
    return None


def check_bb84() -> list:
    out = []
    policy = EnvPolicy(allow_open_actions=True)
    oracle = oracle_bb84_round()
    p_match = sum(p for key, p in oracle.items() if key[1] == key[2])
    for channel in corpus.CHANNELS:
        start = time.perf_counter()
        graph = explore(corpus.bb84_round(channel), policy)
        if graph.truncated:
            out.append(Check(f"bb84 {channel}: graph explored", False, "truncated"))
            continue
        lo, hi = reach_probability_bounds(graph, _tau_via("keep", 1))
        out.append(
            Check(
                f"bb84 {channel}: P(bases agree) = 1/2 under every scheduler",
                abs(lo - p_match) <= TOL and abs(hi - p_match) <= TOL,
                f"min {lo:.12f}, max {hi:.12f}",
            )
        )
        histories = set().union(*terminal_observations(graph, keep_observer).values())
        kept = [dict(h) for h in histories if dict(h).get("keep") == 1]
        agree = bool(kept) and all(h.get("keepDataA") is not None and h.get("keepDataA") == h.get("keepDataB") for h in kept)
        dropped_clean = all("keepDataA" not in dict(h) and "keepDataB" not in dict(h) for h in histories if dict(h).get("keep") != 1)
        out.append(Check(f"bb84 {channel}: kept rounds deliver equal key bits", agree and dropped_clean, f"{len(histories)} distinct outcomes"))
        if channel == "ChannelRound":
            dist = outcome_distribution(graph, keep_observer)
            want = {}
            for (data_a, _, _, data_b, keep), p in oracle.items():
                key = (("keep", keep),) + ((("keepDataA", data_a), ("keepDataB", data_b)) if keep else ())
                key = tuple(sorted(key))
                want[key] = want.get(key, 0.0) + p
            same = set(dist) == set(want) and all(abs(dist[k] - want[k]) <= TOL for k in want)
            out.append(Check(f"bb84 {channel}: outcome distribution matches the matrix oracle", same))
        kinds = path_kinds(graph, _tau_via("empty"), _tau_via("emptyFlaw"))
        want_kinds = {"intercepted", "direct"} if channel == "ChannelRoundND" else {"intercepted"}
        out.append(
            Check(
                f"bb84 {channel}: delivery paths {sorted(want_kinds)}",
                kinds == want_kinds,
                f"found {sorted(kinds)}, {time.perf_counter() - start:.2f}s",
            )
        )
    return out


def check_eavesdrop() -> list:
    out = []
    for name, want in (("eavesdrop", {"intercepted"}), ("eavesdrop_nd", {"intercepted", "direct"})):
        graph = explore(corpus.load_program(name))
        kinds = path_kinds(graph, _tau_via("empty"), _tau_via("emptyFlaw"))
        out.append(Check(f"{name}: delivery paths {sorted(want)}", kinds == want and not graph.truncated, f"found {sorted(kinds)}"))
    return out


PROTOCOLS = {
    "teleport": check_teleport,
    "buildepr": check_buildepr,
    "bb84": check_bb84,
    "eavesdrop": check_eavesdrop,
}


def run(name: str) -> list:
    if name not in PROTOCOLS:
        raise KeyError(name)
    return PROTOCOLS[name]()


__all__ = [
    "Check",
    "keep_observer",
    "PROTOCOLS",
    "outcome_distribution",
    "path_kinds",
    "reach_probability_bounds",
    "run",
    "terminal_observations",
]
