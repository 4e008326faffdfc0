"""Compare programs up to probabilistic branching bisimulation.

Run with ``python demos/equivalence.py``.
"""

import numpy as np

from qpalg import EnvPolicy, check_equivalence, corpus, explore, parse_program

OPEN = EnvPolicy(allow_open_actions=True)
COIN = "[ x:Qubit . (g!0 . end || g?x . end) \\ {g} ; H[x] . MStd1[x] . [ true -> BODY ] ]"

pairs = {
    "a!0 vs coin flip then a!0": ("main := a!0 . end", "main := " + COIN.replace("BODY", "a!0 . end")),
    "g!0 vs g!1": ("main := g!0 . end", "main := g!1 . end"),
}
for title, (left, right) in pairs.items():
    verdict = check_equivalence(explore(parse_program(left), OPEN), explore(parse_program(right), OPEN))
    print(f"{title}: {'equivalent' if verdict.equivalent else 'not equivalent'}")
    if verdict.counterexample:
        print(f"  {verdict.counterexample.clause}: {verdict.counterexample.detail}")

# teleportation behaves like a wire that delivers the input qubit untouched
plus = np.full((2, 2), 0.5, dtype=complex)
teleport = explore(corpus.load_program("teleport"), corpus.teleport_policy(plus))
wire = explore(parse_program("main(b:Qubit) := src?b . end"), corpus.teleport_policy(plus))
verdict = check_equivalence(teleport, wire)
print(f"teleport vs wire: {'equivalent' if verdict.equivalent else 'not equivalent'} after {verdict.splits} splits")
