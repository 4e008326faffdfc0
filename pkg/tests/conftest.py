import functools
import re

import numpy as np
import pytest

from qpalg import corpus
from qpalg.lts import ProcessGraph, explore
from qpalg.parser import Program, parse_program
from qpalg.semantics import EnvPolicy, Prob, ValueOut
from qpalg.syntax import VAR_RE, marked_text

OPEN = EnvPolicy(allow_open_actions=True)
PLUS = np.full((2, 2), 0.5, dtype=complex)

# the programs whose graphs are finite under the policies below
GRAPH_NAMES = ["buildepr", "teleport", "recursion", "eavesdrop", "eavesdrop_nd", "ChannelRound", "ChannelRoundND"]


def hand_graph(n, edges, initial=0):
    """A graph without process states, for checker tests on drawn examples."""
    return ProcessGraph([None] * n, initial, list(edges))


def figure_pair():
    """One action versus a 0.2/0.8 coin whose sides both perform that action."""
    a = ValueOut("a", 0)
    direct = hand_graph(2, [(0, a, 1)])
    coin = hand_graph(4, [(0, Prob(0.2), 1), (0, Prob(0.8), 2), (1, a, 3), (2, a, 3)])
    return direct, coin


def distinguishing_pair():
    """A nondeterministic choice of two different continuations versus a fair coin between them."""
    a, b, c = ValueOut("a", 0), ValueOut("b", 0), ValueOut("c", 0)
    choice = hand_graph(5, [(0, a, 1), (0, a, 2), (1, b, 3), (2, c, 4)])
    coin = hand_graph(7, [(0, Prob(0.5), 1), (0, Prob(0.5), 2), (1, a, 3), (2, a, 4), (3, b, 5), (4, c, 6)])
    return choice, coin


def self_loop():
    """A coin that retries with probability 1/2 before acting."""
    return hand_graph(3, [(0, Prob(0.5), 0), (0, Prob(0.5), 1), (1, ValueOut("a", 0), 2)])


def corpus_program(name) -> Program:
    """A bundled program, or one BB84 round when ``name`` is a channel variant."""
    if name in corpus.CHANNELS:
        return corpus.bb84_round(name)
    return corpus.load_program(name)


def corpus_policy(name) -> EnvPolicy:
    if name == "teleport":
        return corpus.teleport_policy(PLUS)
    if name in corpus.CHANNELS or name == "recursion":
        return OPEN
    return EnvPolicy()


@functools.lru_cache(maxsize=None)
def corpus_graph(name):
    """Explored graph of a bundled program (or BB84 round variant), cached per session."""
    return explore(corpus_program(name), corpus_policy(name))


# -- program transformations ---------------------------------------------------


def program_text(program: Program, var=lambda n: n, defn=lambda n: n, main=lambda text: text) -> str:
    """Source of ``program`` with variables and definition names mapped."""
    names = sorted(program.definitions, key=len, reverse=True)
    pattern = re.compile(r"\b(" + "|".join(map(re.escape, names)) + r")\b(?![!?])") if names else None

    def render(p):
        text = VAR_RE.sub(lambda m: var(m[1]), marked_text(p))
        return pattern.sub(lambda m: defn(m[1]), text) if pattern else text

    lines = [f"{defn(d.name)} := {render(d.body)}" for d in program.definitions.values()]
    header = ""
    if program.interface:
        header = "(" + ", ".join(f"{var(n)}:{t}" for n, t in program.interface) + ")"
    lines.append(f"main{header} := {main(render(program.main))}")
    return "\n".join(lines) + "\n"


def alpha_renamed(program: Program) -> Program:
    """Every variable and definition consistently renamed."""
    return parse_program(program_text(program, var=lambda n: n + "R", defn=lambda n: n + "Copy"))


def guard_wrapped(program: Program) -> Program:
    """``main`` behind a single always-true guard."""
    return parse_program(program_text(program, main=lambda text: f"[ true -> {text} ]"))


def definition_wrapped(program: Program) -> Program:
    """``main`` moved into a definition that the new main invokes."""
    text = program_text(program)
    head, body = text.rsplit("main", 1)
    body = body.split(":=", 1)[1].strip()
    if program.interface:
        decls = ", ".join(f"{n}:{t}" for n, t in program.interface)
        args = ",".join(n for n, _ in program.interface)
        header = "(" + decls + ")"
        return parse_program(f"{head}MainWrapper := [ {decls} . {body} ]\nmain{header} := MainWrapper[{args}]\n")
    return parse_program(f"{head}MainWrapper := {body}\nmain := MainWrapper\n")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion that ran."""
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module.result_line(n))
