"""Teleport a qubit, sample runs of it and check the received state.

Run with ``python demos/teleport.py``.
"""

from collections import Counter

import numpy as np

from qpalg import corpus, explore, sample_run
from qpalg.context import Mixed, qubit_reduced_state
from qpalg.semantics import Tau

psi = np.array([[1 / 3, np.sqrt(2) / 3], [np.sqrt(2) / 3, 2 / 3]], dtype=complex)
program = corpus.load_program("teleport")
policy = corpus.teleport_policy(psi)

graph = explore(program, policy)
branching = sum(isinstance(s.ctx, Mixed) for s in graph.states)
print(f"process graph: {len(graph.states)} states, {len(graph.edges)} edges, {branching} branching states")
for i in graph.terminal_states():
    ctx = graph.states[i].ctx
    print(f"terminal {i}: {ctx.qubits[0]} holds\n{np.round(qubit_reduced_state(ctx, ctx.qubits[0]), 6)}")

outcomes = Counter()
for seed in range(1000):
    trace = sample_run(program, policy, seed=seed)
    outcomes.update(label.value for label in trace.labels() if isinstance(label, Tau) and label.via == "meas")
print("Bell measurement outcomes over 1000 runs:", dict(sorted(outcomes.items())))
print()
print(sample_run(program, policy, seed=7).render())
