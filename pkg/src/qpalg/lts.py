"""Process graphs: bounded exploration, canonical state folding, sampling, export."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import context as ctxmod
from . import errors, quantum
from .context import Frame, Mixed, StableContext
from .parser import Program, parse_process
from .semantics import (
    Delta,
    EnvPolicy,
    Prob,
    ProcessState,
    Tau,
    initial_state,
    label_from_json,
    label_to_json,
    transitions,
)
from .syntax import VAR_RE, marked_text, unparse

QUANTUM = 1e-9


@dataclass(frozen=True)
class ExploreLimits:
    max_states: int = 10000
    max_qubits: int = field(default_factory=quantum.max_qubits)
    max_unfold_depth: int = 64

    def __post_init__(self):
        if min(self.max_states, self.max_qubits, self.max_unfold_depth) <= 0:
            raise ValueError("exploration limits must be positive")


@dataclass
class ProcessGraph:
    states: list
    initial: int
    edges: list  # of (source, label, target)
    limits: ExploreLimits = field(default_factory=ExploreLimits)
    truncated: bool = False

    def successors(self, i: int) -> list:
        return [(label, t) for s, label, t in self.edges if s == i]

    def adjacency(self) -> list:
        out = [[] for _ in range(len(self.states))]
        for s, label, t in self.edges:
            out[s].append((label, t))
        return out

    def terminal_states(self) -> list:
        has_out = {s for s, _, _ in self.edges}
        return [i for i in range(len(self.states)) if i not in has_out]

    def __eq__(self, other):
        if not isinstance(other, ProcessGraph):
            return NotImplemented
        return (
            self.initial == other.initial
            and self.truncated == other.truncated
            and self.edges == other.edges
            and self.states == other.states
        )


# -- canonical keys ----------------------------------------------------------


class _Canon:
    """Assigns every declared variable its first-occurrence index in the stack tree."""

    def __init__(self):
        self.env = {}

    def stack(self, stack):
        shape = []
        for element in stack:
            if isinstance(element, Frame):
                types = []
                for n, t in element.bindings:
                    if n not in self.env:
                        # '%' cannot occur in identifiers, so these never clash
                        self.env[n] = f"%{len(self.env)}"
                    types.append((self.env[n], t.value))
                shape.append(tuple(types))
            else:
                shape.append(("||", self.stack(element.left), self.stack(element.right)))
        return tuple(shape)

    def term(self, p) -> str:
        # names bound inside the term are numbered by first occurrence; a
        # bijective renaming is alpha-sound even where it is finer than needed
        env, local = self.env, {}

        def name(m):
            if m[1] in env:
                return env[m[1]]
            return local.setdefault(m[1], f"#{len(local)}")

        return VAR_RE.sub(name, marked_text(p))


def _quantize(rho) -> bytes:
    a = np.round(np.stack([rho.real, rho.imag]) / QUANTUM).astype(np.int64)
    return a.tobytes()


def _canon_stable(c: StableContext, env: dict):
    order = sorted(c.qubits, key=lambda x: int(env[x][1:]) if x in env else -1)
    rho = quantum.permute_register(c.rho, c.qubits, order) if order != list(c.qubits) else c.rho
    qubits = tuple(env.get(x, x) for x in order)
    store = tuple(sorted((env.get(n, n), v) for n, v in c.store))
    return qubits, np.asarray(rho), store


def canonical_form(state: ProcessState):
    """``(key, canonical rho list)``: the key folds renamings and register orderings."""
    canon = _Canon()
    contexts = [c for _, c in state.ctx.branches] if isinstance(state.ctx, Mixed) else [state.ctx]
    shapes = tuple(canon.stack(c.stack) for c in contexts)
    term = canon.term(state.term)
    parts, rhos = [], []
    for c in contexts:
        qubits, rho, store = _canon_stable(c, canon.env)
        parts.append((qubits, _quantize(rho), store))
        rhos.append(rho)
    if isinstance(state.ctx, Mixed):
        probs = tuple(round(p / 1e-12) for p, _ in state.ctx.branches)
        key = ("mixed", term, shapes, probs, tuple(parts))
    else:
        key = ("stable", term, shapes[0], parts[0])
    return key, rhos


def canonical_key(state: ProcessState):
    """Hashable key equal for states differing only by renaming and qubit order."""
    return canonical_form(state)[0]


# -- exploration -------------------------------------------------------------


def _as_state(source, strict=True) -> ProcessState:
    if isinstance(source, ProcessState):
        return source
    if isinstance(source, Program):
        return initial_state(source, strict)
    raise TypeError(f"cannot explore {type(source).__name__}")


def _qubit_count(ctx) -> int:
    if isinstance(ctx, Mixed):
        return max(len(c.qubits) for _, c in ctx.branches)
    return len(ctx.qubits)


def _confirm(a: ProcessState, b: ProcessState, rhos_a, rhos_b) -> bool:
    """Exact check behind a key match: canonical states agree within tolerance."""
    if not all(np.allclose(x, y, atol=quantum.EPS_MAT, rtol=0) for x, y in zip(rhos_a, rhos_b)):
        return False
    if isinstance(a.ctx, StableContext):
        return ctxmod.contexts_equivalent(a.ctx, b.ctx) is not None
    return True


def explore(source, policy: EnvPolicy | None = None, limits: ExploreLimits | None = None) -> ProcessGraph:
    """Breadth-first construction of the process graph of a program or state."""
    policy = policy or EnvPolicy()
    limits = limits or ExploreLimits()
    start = _as_state(source)
    key, rhos = canonical_form(start)
    states = [start]
    index = {key: [0]}
    canon_rhos = [rhos]
    parent = [None]  # (source index, label) that discovered each state
    unfolds = [{}]
    edges = []
    truncated = False
    queue = deque([0])

    def path_to(i):
        labels = []
        while parent[i] is not None:
            i, label = parent[i]
            labels.append(label)
        return tuple(reversed(labels))

    while queue:
        i = queue.popleft()
        state = states[i]
        if _qubit_count(state.ctx) > limits.max_qubits or max(unfolds[i].values(), default=0) > limits.max_unfold_depth:
            truncated = True
            continue
        try:
            moves = transitions(state, policy)
        except errors.QpalgError as exc:
            exc.path = path_to(i)
            raise
        for label, succ in moves:
            key, rhos = canonical_form(succ)
            target = None
            for j in index.get(key, ()):
                if _confirm(states[j], succ, canon_rhos[j], rhos):
                    target = j
                    break
            if target is None:
                if len(states) >= limits.max_states:
                    truncated = True
                    continue
                target = len(states)
                states.append(succ)
                canon_rhos.append(rhos)
                index.setdefault(key, []).append(target)
                parent.append((i, label))
                counts = dict(unfolds[i])
                if isinstance(label, Tau) and label.unfolds:
                    counts[label.unfolds] = counts.get(label.unfolds, 0) + 1
                unfolds.append(counts)
                queue.append(target)
            edges.append((i, label, target))
    return ProcessGraph(states, 0, edges, limits, truncated)


# -- sampling ----------------------------------------------------------------


@dataclass
class Trace:
    steps: list  # (state, label) pairs; the label leaves that state
    final: ProcessState
    seed: int
    cutoff: bool = False

    def labels(self) -> list:
        return [label for _, label in self.steps]

    def render(self, contexts: bool = False) -> str:
        """Text form: one line per step, then the final term and context as JSON."""
        lines = [f"seed {self.seed}"]
        for state, label in self.steps:
            lines.append(f"{unparse(state.term)}  --{describe_label(label)}-->")
            if contexts:
                lines.append("  " + json.dumps(_context_json(state.ctx), sort_keys=True))
        lines.append(unparse(self.final.term))
        lines.append(json.dumps(_context_json(self.final.ctx), sort_keys=True))
        if self.cutoff:
            lines.append("cutoff: step limit reached")
        return "\n".join(lines)


def describe_label(label) -> str:
    """Label text including what an internal step did, e.g. ``tau[meas=2]``."""
    if isinstance(label, Tau):
        if label.via is not None:
            return f"tau[{label.via}={label.value}]"
        if label.unfolds is not None:
            return f"tau[{label.unfolds}]"
    return str(label)


def _pick(moves, rng):
    if isinstance(moves[0][0], Prob):
        p = np.array([label.p for label, _ in moves])
        return moves[int(rng.choice(len(moves), p=p / p.sum()))]
    return moves[int(rng.integers(len(moves)))]


def sample_run(source, policy: EnvPolicy | None = None, seed: int = 0, max_steps: int = 1000) -> Trace:
    """One execution, resolving probabilities by weight and choices uniformly."""
    policy = policy or EnvPolicy()
    rng = np.random.default_rng(seed)
    state = _as_state(source)
    steps = []
    for _ in range(max_steps):
        moves = transitions(state, policy)
        if not moves:
            return Trace(steps, state, seed)
        label, nxt = _pick(moves, rng)
        steps.append((state, label))
        state = nxt
    return Trace(steps, state, seed, cutoff=bool(transitions(state, policy)))


def sample_graph_run(graph: ProcessGraph, seed: int = 0, max_steps: int = 1000) -> list:
    """A run over an explored graph as a list of ``(state index, label)`` steps."""
    rng = np.random.default_rng(seed)
    adj = graph.adjacency()
    i, steps = graph.initial, []
    for _ in range(max_steps):
        if not adj[i]:
            break
        label, j = _pick(adj[i], rng)
        steps.append((i, label))
        i = j
    steps.append((i, None))
    return steps


# -- export ------------------------------------------------------------------


def _context_json(ctx):
    return ctx.to_json()


def _dot_label(label) -> str:
    if isinstance(label, Prob):
        return f"p={label.p:.4f}"
    return str(label)


def export_dot(graph: ProcessGraph) -> str:
    terminal = set(graph.terminal_states())
    lines = ["digraph qpalg {"]
    for i, state in enumerate(graph.states):
        if i == graph.initial:
            shape = "doublecircle"
        elif i in terminal:
            shape = "box"
        elif isinstance(state.ctx, Mixed):
            shape = "diamond"
        else:
            shape = "circle"
        tooltip = unparse(state.term).replace('"', '\\"')
        lines.append(f'  s{i} [shape={shape}, tooltip="{tooltip}"];')
    for s, label, t in graph.edges:
        text = _dot_label(label).replace('"', '\\"')
        lines.append(f'  s{s} -> s{t} [label="{text}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(graph: ProcessGraph) -> dict:
    return {
        "initial": graph.initial,
        "states": [
            {"term": unparse(s.term), "context": _context_json(s.ctx)} for s in graph.states
        ],
        "edges": [{"from": s, "label": label_to_json(label), "to": t} for s, label, t in graph.edges],
        "limits": {
            "max_states": graph.limits.max_states,
            "max_qubits": graph.limits.max_qubits,
            "max_unfold_depth": graph.limits.max_unfold_depth,
        },
        "truncated": graph.truncated,
    }


def export_json(graph: ProcessGraph) -> str:
    return json.dumps(graph_to_json(graph), indent=1)


def load_json(text: str, program: Program | None = None) -> ProcessGraph:
    """Rebuild a graph written by :func:`export_json`."""
    data = json.loads(text)
    states = []
    for entry in data["states"]:
        ctx = ctxmod.context_from_json(entry["context"])
        first = ctx.branches[0][1] if isinstance(ctx, Mixed) else ctx
        env = dict(ctxmod.iter_bindings(first.stack))
        defs = program.definitions if program else None
        term = parse_process(entry["term"], definitions=defs, env=env, strict=False)
        states.append(ProcessState(term, ctx, program))
    edges = [(e["from"], label_from_json(e["label"]), e["to"]) for e in data["edges"]]
    limits = ExploreLimits(**data["limits"]) if "limits" in data else ExploreLimits()
    return ProcessGraph(states, data["initial"], edges, limits, data.get("truncated", False))


__all__ = [
    "Delta",
    "ExploreLimits",
    "ProcessGraph",
    "Trace",
    "canonical_key",
    "describe_label",
    "explore",
    "export_dot",
    "export_json",
    "load_json",
    "sample_run",
]
