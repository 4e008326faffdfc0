"""Workbench for a quantum process algebra: parse, execute, explore and compare processes."""

from .bisim import Verdict, check_equivalence
from .lts import ExploreLimits, ProcessGraph, explore, sample_run
from .parser import Program, parse_process, parse_program
from .semantics import EnvPolicy, initial_state, transitions

__all__ = [
    "EnvPolicy",
    "ExploreLimits",
    "ProcessGraph",
    "Program",
    "Verdict",
    "check_equivalence",
    "explore",
    "initial_state",
    "parse_process",
    "parse_program",
    "sample_run",
    "transitions",
]
