import numpy as np
import pytest

from qpalg import corpus, errors
from qpalg.context import (
    Mixed,
    StableContext,
    attach_qubit,
    declare,
    empty_context,
    get_classical,
    mix,
    qubit_reduced_state,
    validate_context,
)
from qpalg.lts import explore
from qpalg.parser import parse_process, parse_program
from qpalg.quantum import basis_state
from qpalg.semantics import (
    Delta,
    EnvPolicy,
    Prob,
    ProcessState,
    QubitIn,
    QubitOut,
    Tau,
    ValueIn,
    ValueOut,
    eval_condition,
    initial_state,
    instantiate,
    label_from_json,
    label_to_json,
    measure_and_send_expand,
    transitions,
)
from qpalg.syntax import End, Eq, Neq, Nil, Prefix, Scope, SendValue, Seq, VarType, unparse

Q, N = VarType.QUBIT, VarType.NAT
PLUS = np.full((2, 2), 0.5, dtype=complex)
OPEN = EnvPolicy(allow_open_actions=True)


def close(a, b):
    return np.allclose(a, b, atol=1e-9, rtol=0)


def start(text):
    return initial_state(parse_program(text))


def labels(moves):
    return [label for label, _ in moves]


def run_silent(state, policy=None, limit=50):
    """Follow the first transition until none is left; return the visited states."""
    seen = [state]
    for _ in range(limit):
        moves = transitions(seen[-1], policy)
        if not moves:
            break
        seen.append(moves[0][1])
    return seen


class TestBasicRules:
    def test_nil_is_stuck(self):
        assert transitions(start("main := nil")) == []

    def test_end_terminates(self):
        s = start("main := end")
        [(label, nxt)] = transitions(s)
        assert label == Delta() and nxt.term == Nil() and nxt.ctx == s.ctx

    def test_mixed_context_resolves_first(self):
        c = declare(empty_context(), [("x", Q)])
        c0 = StableContext(c.stack, ("x",), basis_state("0"))
        c1 = StableContext(c.stack, ("x",), basis_state("1"))
        s = ProcessState(End(), mix([(0.5, c0), (0.5, c1)]))
        moves = transitions(s)
        assert labels(moves) == [Prob(0.5), Prob(0.5)]
        assert [m.ctx for _, m in moves] == [c0, c1]
        assert all(m.term == End() for _, m in moves)

    def test_sequence_turns_delta_into_tau(self):
        [(label, nxt)] = transitions(start("main := end ; nil"))
        assert label == Tau() and nxt.term == Nil()

    def test_unitary(self):
        s = start("main := [ x:Qubit . (g!0 . end || g?x . end) \\ {g} ; H[x] . end ]")
        states = run_silent(s)
        plus = [t for t in states if isinstance(t.ctx, StableContext) and t.ctx.qubits]
        assert close(plus[-1].ctx.rho, PLUS)

    def test_silent_measurement_collapses(self):
        s = start("main := [ x:Qubit . (g!0 . end || g?x . end) \\ {g} ; H[x] . MStd1[x] . end ]")
        last = [t for t in run_silent(s) if isinstance(t.ctx, StableContext) and t.ctx.qubits][-1]
        assert close(last.ctx.rho, np.eye(2) / 2)

    def test_unitary_on_unattached_qubit(self):
        with pytest.raises(errors.QubitNotInRegister):
            run_silent(initial_state(corpus.load_program("measure_before_init")))

    def test_conditional_takes_every_true_branch(self):
        s = start("main := [ true -> nil, false -> end, true -> end ]")
        assert [m.term for _, m in transitions(s)] == [Nil(), End()]

    def test_all_false_conditional_is_stuck(self):
        assert transitions(start("main := [ false -> end ]")) == []

    def test_invocation_is_one_silent_step(self):
        s = start("P := end\nmain := P")
        [(label, nxt)] = transitions(s)
        assert label == Tau() and label.unfolds == "P" and nxt.term == End()

    def test_qubit_init_needs_a_bit(self):
        s = start("main := [ x:Qubit . (g!2 . end || g?x . end) \\ {g} ]")
        with pytest.raises(errors.InvalidQubitInit):
            run_silent(s)


class TestParallel:
    def test_interleavings(self):
        s = start("main := end ; end || end ; end")
        assert labels(transitions(s)) == [Tau(), Tau()]

    def test_joint_termination(self):
        s = start("main := end || end")
        [(label, nxt)] = transitions(s)
        assert label == Delta() and nxt.term == Nil()

    def test_one_side_done_other_not(self):
        assert transitions(start("main := end || nil")) == []

    def test_classical_communication(self):
        s = start("main := [ k:Nat . (g!3 . end || g?k . end) \\ {g} ]")
        states = run_silent(s)
        comm = [t for t in states if isinstance(t.ctx, StableContext) and t.ctx.f.get("k") == 3]
        assert comm
        via = [lab for lab, _ in transitions(states[1])]
        assert via[0].via == "g" and via[0].value == 3

    def test_qubit_communication_renames(self):
        text = (
            "main := [ a:Qubit, b:Qubit . (g!0 . end || g?a . end) \\ {g} ; "
            "H[a] . (h!a . end || h?b . end) \\ {h} ; end ]"
        )
        states = run_silent(start(text))
        moved = [t for t in states if isinstance(t.ctx, StableContext) and t.ctx.qubits == ("b",)]
        assert moved and close(moved[0].ctx.rho, PLUS)

    def test_restriction_hides_unmatched(self):
        assert transitions(start("main := (g!0 . end) \\ {g}"), OPEN) == []

    def test_sibling_declarations_get_distinct_names(self):
        # both branches bind x; whichever opens its scope second must be renamed,
        # even when the first x has not received a qubit yet
        graph = explore(parse_program("main := [ x:Qubit . g?x . end ] || [ x:Qubit . h?x . end ]"), OPEN)
        assert all(validate_context(t.ctx) == [] for t in graph.states)
        assert max(len(t.ctx.qubits) for t in graph.states) == 2

    def test_contexts_stay_valid(self):
        for s in run_silent(initial_state(corpus.load_program("buildepr")), limit=100):
            if isinstance(s.ctx, StableContext):
                assert validate_context(s.ctx) == []


class TestOpenActions:
    def test_closed_by_default(self):
        assert transitions(start("main := g!0 . end")) == []

    def test_value_out(self):
        [(label, _)] = transitions(start("main := g!0 . end"), OPEN)
        assert label == ValueOut("g", 0)

    def test_value_in_enumerates_domain(self):
        policy = EnvPolicy(input_domain=(0, 1, 2), allow_open_actions=True)
        moves = transitions(start("main := [ k:Nat . g?k . end ]"), policy)
        [(_, inner)] = moves
        got = transitions(inner, policy)
        assert labels(got) == [ValueIn("g", v) for v in (0, 1, 2)]
        assert [get_classical(m.ctx, "k") for _, m in got] == [0, 1, 2]

    def test_qubit_in_attaches_nu(self):
        policy = EnvPolicy(fresh_qubit_state=PLUS, allow_open_actions=True)
        [(_, inner)] = transitions(start("main := [ x:Qubit . g?x . end ]"), policy)
        [(label, nxt)] = transitions(inner, policy)
        assert isinstance(label, QubitIn) and close(label.state, PLUS)
        assert close(qubit_reduced_state(nxt.ctx, "x"), PLUS)

    def test_qubit_out_detaches(self):
        policy = EnvPolicy(fresh_qubit_state=PLUS, allow_open_actions=True)
        s = start("main := [ x:Qubit . g?x . h!x . end ]")
        states = run_silent(s, policy)
        outs = [(lab, m) for t in states for lab, m in transitions(t, policy) if isinstance(lab, QubitOut)]
        [(label, nxt)] = outs
        assert close(label.state, PLUS) and nxt.ctx.qubits == ()


class TestEvalCondition:
    def test_eq(self):
        assert eval_condition(Eq("k", 0), {"k": 0})

    def test_neq(self):
        assert not eval_condition(Neq("baseA", "baseB"), {"baseA": 1, "baseB": 1})

    def test_undefined(self):
        with pytest.raises(errors.UndefinedVariable):
            eval_condition(Eq("k", 1), {})


class TestInstantiate:
    def test_buildepr_arguments_replace_declaration(self):
        program = corpus.load_program("teleport")
        body = instantiate(program, "BuildEPR", ["a", "b"])
        text = unparse(body)
        assert text == "(g1?a . g2?b . H[a] . CNot[a,b] . end || g1!0 . g2!0 . end) \\ {g1, g2}"

    def test_zero_arguments_is_plain_unfolding(self):
        program = corpus.load_program("teleport")
        assert instantiate(program, "Bob", []) == program.definitions["Bob"].body

    def test_partial_arguments_keep_rest_declared(self):
        program = parse_program("P := [ x:Qubit, m:Nat . end ]\nmain := nil")
        assert unparse(instantiate(program, "P", ["u"])) == "[ m:Nat . end ]"

    def test_duplicate_arguments(self):
        program = corpus.load_program("eavesdrop")
        with pytest.raises(errors.DuplicateArgument):
            instantiate(program, "E", ["z", "z"])

    def test_type_clash(self):
        program = corpus.load_program("eavesdrop")
        with pytest.raises(errors.TypeMismatch):
            instantiate(program, "E", ["k"], {"k": N})

    def test_too_many(self):
        program = corpus.load_program("eavesdrop")
        with pytest.raises(errors.ArityMismatch):
            instantiate(program, "B", ["u", "v"])


class TestMeasureAndSend:
    def _state(self, rho):
        c = attach_qubit(declare(empty_context(), [("x", Q)]), "x", rho)
        return ProcessState(Nil(), c)

    def test_eigenstate_stays_stable(self):
        [(label, nxt)] = measure_and_send_expand(self._state(basis_state("0")), "g", "MStd1", ["x"])
        assert label == Tau() and isinstance(nxt.ctx, StableContext)
        [y] = [n for n in nxt.ctx.f]
        assert nxt.ctx.f[y] == 0
        assert nxt.term == Seq(Scope(Prefix(SendValue("g", y), End())), End())

    def test_plus_state_branches(self):
        [(_, nxt)] = measure_and_send_expand(self._state(PLUS), "g", "MStd1", ["x"])
        assert isinstance(nxt.ctx, Mixed)
        branches = nxt.ctx.branches
        assert [p for p, _ in branches] == pytest.approx([0.5, 0.5], abs=1e-12)
        ys = [list(c.f.values()) for _, c in branches]
        assert ys == [[0], [1]]
        assert close(branches[0][1].rho, basis_state("0")) and close(branches[1][1].rho, basis_state("1"))

    def test_fresh_name_avoids_existing(self):
        c = attach_qubit(declare(empty_context(), [("x", Q), ("y", N)]), "x", PLUS)
        [(_, nxt)] = measure_and_send_expand(ProcessState(Nil(), c), "g", "MStd1", ["x"])
        for _, branch in nxt.ctx.branches:
            assert "y" not in branch.f and len(branch.f) == 1

    def test_teleport_measurement_has_four_quarters(self):
        program = corpus.load_program("teleport")
        policy = corpus.teleport_policy(PLUS)
        frontier = [initial_state(program)]
        found = None
        for _ in range(40):
            nxt = []
            for s in frontier:
                for label, t in transitions(s, policy):
                    if isinstance(t.ctx, Mixed) and found is None:
                        found = t
                    nxt.append(t)
            frontier = nxt[:50]
            if found is not None:
                break
        moves = transitions(found, policy)
        assert len(moves) == 4 and all(lab.p == pytest.approx(0.25, abs=1e-12) for lab, _ in moves)


class TestDeterminism:
    @pytest.mark.parametrize("name", ["buildepr", "teleport", "eavesdrop"])
    def test_same_list_twice(self, name):
        policy = corpus.teleport_policy(PLUS) if name == "teleport" else EnvPolicy()
        s = initial_state(corpus.load_program(name))
        for _ in range(15):
            a, b = transitions(s, policy), transitions(s, policy)
            assert a == b
            if not a:
                break
            s = a[-1][1]


class TestLabelJson:
    @pytest.mark.parametrize(
        "label",
        [Tau(), Delta(), Prob(0.25), ValueOut("g", 1), ValueIn("g", 0), QubitOut("g", "x", PLUS), QubitIn("h", "y", np.eye(2) / 2)],
    )
    def test_round_trip(self, label):
        back = label_from_json(label_to_json(label))
        assert type(back) is type(label)
        if isinstance(label, (QubitOut, QubitIn)):
            assert (back.gate, back.var) == (label.gate, label.var) and close(back.state, label.state)
        else:
            assert back == label

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            EnvPolicy(input_domain=(), allow_open_actions=True)
        with pytest.raises(ValueError):
            EnvPolicy(fresh_qubit_state=np.eye(2))

    def test_parse_process_term_can_be_stepped(self):
        s = ProcessState(parse_process("end ; end"), empty_context())
        assert labels(transitions(s)) == [Tau()]
