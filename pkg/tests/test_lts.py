import json

import numpy as np
import pytest
from conftest import GRAPH_NAMES, OPEN, PLUS, corpus_graph, corpus_policy

from qpalg import corpus, errors
from qpalg.context import Mixed, StableContext, contexts_equivalent, declare, empty_context
from qpalg.lts import (
    ExploreLimits,
    canonical_key,
    describe_label,
    explore,
    export_dot,
    export_json,
    load_json,
    sample_graph_run,
    sample_run,
)
from qpalg.parser import parse_program
from qpalg.quantum import EPS_PROB, basis_state, permute_register
from qpalg.semantics import Delta, EnvPolicy, Prob, ProcessState, Tau, initial_state, transitions
from qpalg.syntax import End, VarType

Q = VarType.QUBIT
BELL = np.array([[0.5, 0, 0, 0.5], [0, 0, 0, 0], [0, 0, 0, 0], [0.5, 0, 0, 0.5]], dtype=complex)


def program(text):
    return parse_program(text)


def stable(names, qubits, rho):
    c = declare(empty_context(), [(n, Q) for n in names])
    return StableContext(c.stack, tuple(qubits), rho)


class TestCanonicalKey:
    def test_same_state(self):
        s = initial_state(corpus.load_program("teleport"))
        assert canonical_key(s) == canonical_key(s)

    def test_renamed_copies(self):
        a = explore(program("main := [ x:Qubit . (g!0 . end || g?x . end) \\ {g} ]"))
        b = explore(program("main := [ w:Qubit . (g!0 . end || g?w . end) \\ {g} ]"))
        assert [canonical_key(s) for s in a.states] == [canonical_key(s) for s in b.states]

    def test_swapped_register(self):
        a = ProcessState(End(), stable(["x", "y"], ["x", "y"], basis_state("01")))
        b = ProcessState(End(), stable(["x", "y"], ["y", "x"], permute_register(basis_state("01"), ["x", "y"], ["y", "x"])))
        assert canonical_key(a) == canonical_key(b)

    def test_different_states_differ(self):
        a = ProcessState(End(), stable(["x"], ["x"], basis_state("0")))
        b = ProcessState(End(), stable(["x"], ["x"], basis_state("1")))
        assert canonical_key(a) != canonical_key(b)


class TestExplore:
    def test_end(self):
        g = explore(program("main := end"))
        assert len(g.states) == 2 and [(s, t) for s, _, t in g.edges] == [(0, 1)]
        assert g.edges[0][1] == Delta() and not g.truncated

    def test_buildepr_is_a_line_to_the_bell_pair(self):
        g = corpus_graph("buildepr")
        adj = g.adjacency()
        assert all(len(out) <= 1 for out in adj) or g.terminal_states()
        [end] = g.terminal_states()
        ctx = g.states[end].ctx
        assert np.allclose(permute_register(ctx.rho, ctx.qubits, ["a", "b"]), BELL, atol=1e-9)

    def test_recursion_folds_into_a_cycle(self):
        g = corpus_graph("recursion")
        assert not g.truncated and len(g.states) < 20
        reachable_back = any(t <= s for s, _, t in g.edges)
        assert reachable_back and g.terminal_states() == []

    def test_state_limit_truncates(self):
        g = explore(corpus.load_program("teleport"), corpus.teleport_policy(PLUS), ExploreLimits(max_states=1))
        assert g.truncated and len(g.states) == 1

    def test_unfold_limit_truncates(self):
        # each unfolding opens a new scope inside the previous one, so states never fold
        nested = program("P := [ k:Nat . (g!0 . end || g?k . end) \\ {g} ; P ]\nmain := P")
        g = explore(nested, EnvPolicy(), ExploreLimits(max_unfold_depth=3))
        assert g.truncated and len(g.states) < 100

    def test_error_carries_path(self):
        with pytest.raises(errors.QubitNotInRegister) as info:
            explore(corpus.load_program("measure_before_init"))
        assert len(info.value.path) >= 1

    def test_limits_validated(self):
        with pytest.raises(ValueError):
            ExploreLimits(max_states=0)


class TestGraphInvariants:
    @pytest.mark.parametrize("name", GRAPH_NAMES)
    def test_probabilistic_states(self, name):
        g = corpus_graph(name)
        adj = g.adjacency()
        for i, state in enumerate(g.states):
            if isinstance(state.ctx, Mixed):
                assert adj[i] and all(isinstance(lab, Prob) for lab, _ in adj[i])
                assert abs(sum(lab.p for lab, _ in adj[i]) - 1) <= EPS_PROB
            else:
                assert not any(isinstance(lab, Prob) for lab, _ in adj[i])

    @pytest.mark.parametrize("name", ["buildepr", "teleport", "recursion", "eavesdrop"])
    def test_complete_and_soundly_folded(self, name):
        g = corpus_graph(name)
        policy = corpus_policy(name)
        adj = g.adjacency()
        for i, state in enumerate(g.states):
            moves = transitions(state, policy)
            assert [lab for lab, _ in moves] == [lab for lab, _ in adj[i]]
            for (_, succ), (_, j) in zip(moves, adj[i]):
                stored = g.states[j]
                assert canonical_key(succ) == canonical_key(stored)
                if isinstance(succ.ctx, StableContext):
                    assert contexts_equivalent(succ.ctx, stored.ctx) is not None

    def test_teleport_terminals_agree(self):
        g = corpus_graph("teleport")
        ends = [g.states[i].ctx for i in g.terminal_states()]
        assert ends and all(contexts_equivalent(ends[0], c) is not None for c in ends)


class TestSampling:
    def test_teleport_ends_in_psi(self):
        trace = sample_run(corpus.load_program("teleport"), corpus.teleport_policy(PLUS), seed=7)
        ctx = trace.final.ctx
        assert not trace.cutoff and len(ctx.qubits) == 1
        assert np.allclose(ctx.rho, PLUS, atol=1e-9)

    def test_same_seed_same_trace(self):
        p, policy = corpus.load_program("teleport"), corpus.teleport_policy(PLUS)
        a, b = sample_run(p, policy, seed=3), sample_run(p, policy, seed=3)
        assert a.render(contexts=True) == b.render(contexts=True)

    def test_cutoff(self):
        trace = sample_run(corpus.load_program("recursion"), OPEN, seed=0, max_steps=5)
        assert trace.cutoff and len(trace.steps) == 5

    def test_graph_run_follows_edges(self):
        g = corpus_graph("teleport")
        steps = sample_graph_run(g, seed=11)
        edges = {(s, t) for s, _, t in g.edges}
        for (s, _), (t, _) in zip(steps, steps[1:]):
            assert (s, t) in edges
        assert steps[-1][0] in g.terminal_states()

    def test_describe_label(self):
        assert describe_label(Tau(via="meas", value=3)) == "tau[meas=3]"
        assert describe_label(Tau(unfolds="Bob")) == "tau[Bob]"
        assert describe_label(Delta()) == "delta"


class TestExport:
    def test_dot_of_end(self):
        dot = export_dot(explore(program("main := end")))
        assert dot.startswith("digraph") and dot.count("->") == 1 and 'label="delta"' in dot

    def test_dot_probabilities(self):
        dot = export_dot(corpus_graph("teleport"))
        assert 'label="p=0.2500"' in dot

    def test_json_schema(self):
        data = json.loads(export_json(explore(program("main := end"))))
        assert set(data) == {"initial", "states", "edges", "limits", "truncated"}
        assert data["edges"] == [{"from": 0, "label": {"kind": "delta"}, "to": 1}]

    @pytest.mark.parametrize("name", ["buildepr", "teleport", "recursion"])
    def test_json_round_trip(self, name):
        g = corpus_graph(name)
        back = load_json(export_json(g), corpus.load_program(name))
        assert back == g
        assert export_json(back) == export_json(g)
