"""One BB84 round over a direct and an intercepting channel.

Run with ``python demos/bb84.py``.
"""

from qpalg import explore
from qpalg.corpus import bb84_round, checks
from qpalg.semantics import EnvPolicy

for channel in ("ChannelRound", "ChannelRoundND"):
    graph = explore(bb84_round(channel), EnvPolicy(allow_open_actions=True))
    print(f"{channel}: {len(graph.states)} states, {len(graph.edges)} edges")
    distribution = checks.outcome_distribution(graph, checks.keep_observer)
    if distribution is not None:
        for outcome, p in sorted(distribution.items()):
            print(f"  {p:.4f}  {dict(outcome)}")

print()
for check in checks.check_bb84():
    print(check.line())
