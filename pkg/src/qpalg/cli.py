"""Command-line interface: ``qpalg parse|run|graph|bisim|corpus``.

Exit codes: 0 success, 1 input or semantic error (or a failed corpus
check), 2 truncated exploration, 3 processes not equivalent.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import errors
from .bisim import check_equivalence
from .corpus import checks
from .lts import ExploreLimits, explore, export_dot, export_json, sample_run
from .parser import parse_program
from .quantum import EPS_MAT, EPS_PROB, ket_bra
from .semantics import EnvPolicy, label_to_json

EXIT_OK, EXIT_ERROR, EXIT_TRUNCATED, EXIT_INEQUIVALENT = 0, 1, 2, 3
FORMATS = ("dot", "json", "text")

_NAMED_STATES = {
    "0": (1, 0),
    "1": (0, 1),
    "+": (2**-0.5, 2**-0.5),
    "-": (2**-0.5, -(2**-0.5)),
}


@dataclass
class Config:
    eps_mat: float = EPS_MAT
    eps_prob: float = EPS_PROB
    limits: ExploreLimits = field(default_factory=ExploreLimits)
    policy: EnvPolicy = field(default_factory=EnvPolicy)
    format: str = "text"
    seed: int = 0

    def __post_init__(self):
        if self.eps_mat <= 0 or self.eps_prob <= 0:
            raise ValueError("tolerances must be positive")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {', '.join(FORMATS)}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def parse_state(text: str) -> np.ndarray:
    """A qubit state from ``0``, ``1``, ``+``, ``-`` or two comma-separated amplitudes."""
    if text in _NAMED_STATES:
        vec = np.array(_NAMED_STATES[text], dtype=complex)
    else:
        try:
            vec = np.array([complex(x.strip().replace("i", "j")) for x in text.split(",")])
        except ValueError:
            raise ValueError(f"cannot read qubit state {text!r}") from None
        if vec.shape != (2,) or np.linalg.norm(vec) == 0:
            raise ValueError(f"qubit state {text!r} needs two amplitudes")
        vec = vec / np.linalg.norm(vec)
    return ket_bra(vec)


def _domain(text: str) -> tuple:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of naturals: {text!r}") from None
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError("the input domain needs at least one natural number")
    return values


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _add_common(p: argparse.ArgumentParser, fmt_default: str = "text"):
    p.add_argument("--max-states", type=_positive, default=ExploreLimits.max_states)
    p.add_argument("--max-unfold-depth", type=_positive, default=ExploreLimits.max_unfold_depth)
    p.add_argument("--open-actions", action="store_true", help="let the environment answer top-level sends and receives")
    p.add_argument("--input-domain", type=_domain, default=(0, 1), help="values offered to open receives, e.g. 0,1")
    p.add_argument("--nu", default="0", help="state of qubits received from the environment: 0, 1, +, - or 'a,b'")
    p.add_argument("--format", choices=FORMATS, default=fmt_default)
    p.add_argument("--out", type=Path, help="write the result here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qpalg", description="Quantum process algebra workbench.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="parse and scope-check a program, print it normalized")
    p.add_argument("file", type=Path)

    p = sub.add_parser("run", help="sample one execution")
    p.add_argument("file", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=_positive, default=1000)
    p.add_argument("--trace", action="store_true", help="print the context of every step")
    _add_common(p)

    p = sub.add_parser("graph", help="explore the process graph and export it")
    p.add_argument("file", type=Path)
    _add_common(p, "dot")

    p = sub.add_parser("bisim", help="decide whether two programs are equivalent")
    p.add_argument("file_a", type=Path)
    p.add_argument("file_b", type=Path)
    p.add_argument("--tol", type=float, default=EPS_PROB, help="tolerance when comparing reach probabilities")
    _add_common(p, "json")

    p = sub.add_parser("corpus", help="run the checks of a bundled protocol")
    p.add_argument("name", nargs="?", help=f"one of: {', '.join(checks.PROTOCOLS)}; omit to list")
    return parser


def _config(args) -> Config:
    policy = EnvPolicy(
        input_domain=args.input_domain,
        fresh_qubit_state=parse_state(args.nu),
        allow_open_actions=args.open_actions,
    )
    limits = ExploreLimits(max_states=args.max_states, max_unfold_depth=args.max_unfold_depth)
    return Config(
        eps_prob=getattr(args, "tol", EPS_PROB),
        limits=limits,
        policy=policy,
        format=args.format,
        seed=getattr(args, "seed", 0),
    )


def _load(path: Path):
    program = parse_program(path.read_text(encoding="utf-8"))
    if program.main is None:
        raise errors.SemanticError(f"{path}: missing main")
    return program


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write_text(text, encoding="utf-8")


def _graph_text(graph) -> str:
    lines = [f"states {len(graph.states)}", f"edges {len(graph.edges)}", f"terminal {len(graph.terminal_states())}"]
    if graph.truncated:
        lines.append("truncated")
    return "\n".join(lines)


def cmd_parse(args) -> int:
    program = _load(args.file)
    print(program.unparse())
    return EXIT_OK


def cmd_run(args) -> int:
    config = _config(args)
    program = _load(args.file)
    trace = sample_run(program, config.policy, seed=config.seed, max_steps=args.max_steps)
    if config.format == "json":
        text = json.dumps(
            {
                "seed": trace.seed,
                "labels": [label_to_json(label) for label in trace.labels()],
                "final": trace.final.ctx.to_json(),
                "cutoff": trace.cutoff,
            },
            indent=1,
        )
    else:
        text = trace.render(contexts=args.trace)
    _emit(text, args.out)
    return EXIT_OK


def cmd_graph(args) -> int:
    config = _config(args)
    graph = explore(_load(args.file), config.policy, config.limits)
    text = {"dot": export_dot, "json": export_json, "text": _graph_text}[config.format](graph)
    _emit(text, args.out)
    if graph.truncated:
        print("warning: exploration truncated by a limit", file=sys.stderr)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_bisim(args) -> int:
    config = _config(args)
    graphs = [explore(_load(f), config.policy, config.limits) for f in (args.file_a, args.file_b)]
    if any(g.truncated for g in graphs):
        print("error: exploration truncated; raise --max-states to compare", file=sys.stderr)
        return EXIT_TRUNCATED
    verdict = check_equivalence(*graphs, tol=config.eps_prob)
    if config.format == "text":
        text = "equivalent" if verdict.equivalent else f"not equivalent: {verdict.counterexample.clause}: {verdict.counterexample.detail}"
    else:
        text = json.dumps(verdict.to_json())
    _emit(text, args.out)
    return EXIT_OK if verdict.equivalent else EXIT_INEQUIVALENT


def cmd_corpus(args) -> int:
    if args.name is None:
        print("\n".join(checks.PROTOCOLS))
        return EXIT_OK
    if args.name not in checks.PROTOCOLS:
        print(f"error: unknown protocol {args.name!r}; choose from {', '.join(checks.PROTOCOLS)}", file=sys.stderr)
        return EXIT_ERROR
    results = checks.run(args.name)
    for check in results:
        print(check.line())
    passed = sum(c.passed for c in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_ERROR


COMMANDS = {"parse": cmd_parse, "run": cmd_run, "graph": cmd_graph, "bisim": cmd_bisim, "corpus": cmd_corpus}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except errors.QpalgError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if exc.path:
            print("after: " + " ".join(str(label) for label in exc.path), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
