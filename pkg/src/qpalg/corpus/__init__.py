"""Bundled protocol programs and helpers to load them."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..parser import Program, parse_process, parse_program
from ..semantics import EnvPolicy

ROUND_RESTRICTED = "fill, empty, fillFlaw, emptyFlaw, received, base, keep"
CHANNELS = ("ChannelRound", "ChannelRoundND")


def names() -> list:
    """Names of the bundled programs (file stems)."""
    files = resources.files(__name__).iterdir()
    return sorted(f.name[: -len(".qpalg")] for f in files if f.name.endswith(".qpalg"))


def source(name: str) -> str:
    path = resources.files(__name__) / f"{name}.qpalg"
    if not path.is_file():
        raise KeyError(f"no bundled program named {name!r}")
    return path.read_text()


def load_program(name: str) -> Program:
    return parse_program(source(name))


def with_main(program: Program, text: str) -> Program:
    """``program`` whose main is replaced by the closed process ``text``."""
    return dataclasses.replace(program, main=parse_process(text, program.definitions), interface=())


def bb84_round(channel: str = "ChannelRound") -> Program:
    """One BB84 round: every role runs once, over the given channel definition."""
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    text = f"(AliceRound || BobRound || EveRound || {channel}) \\ {{{ROUND_RESTRICTED}}}"
    return with_main(load_program("bb84"), text)


def teleport_policy(psi) -> EnvPolicy:
    """Environment feeding ``psi`` on the open input of the teleport program."""
    return EnvPolicy(fresh_qubit_state=np.asarray(psi, dtype=complex), allow_open_actions=True)


@dataclass(frozen=True)
class ProtocolCase:
    """A bundled program with the oracle its engine results are compared to."""

    name: str
    source: str  # bundled program name
    oracle: object
    tolerance: float = 1e-9


__all__ = [
    "CHANNELS",
    "ProtocolCase",
    "bb84_round",
    "load_program",
    "names",
    "source",
    "teleport_policy",
    "with_main",
]
