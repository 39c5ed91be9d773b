"""Command line entry point: ``copif build-tree | run | verify | bench``.

Exit codes: 0 success, 1 usage error, 2 non-termination, 3 invariant
violation.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from contextlib import ExitStack
from pathlib import Path
from typing import Optional, Sequence

from . import configio
from .harness import MODES, bench, inject_faults, pick_initiators, stabilize, tree_summary
from .overlay import build_overlay, dump_tree, load_tree, random_labels
from .prefix_core import make_alphabet
from .protocol import Configuration, run_classic_pif
from .scheduler import LatencyModel, NonTermination, SchedulerKind, Simulation
from .verification import all_reports, detectors_silent, is_quiescent

EXIT_NONTERMINATION = 2
EXIT_INVARIANT = 3


class InvariantViolation(RuntimeError):
    pass


def _alphabet(value: str) -> str:
    return make_alphabet(int(value)) if value.isdigit() else value


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _grid_item(item: str) -> tuple[str, list[int]]:
    key, sep, vals = item.partition("=")
    try:
        values = _int_list(vals)
    except ValueError:
        values = []
    if not sep or key not in ("n", "k") or not values:
        raise argparse.ArgumentTypeError(f"grid entries look like n=250,1000 or k=1,2; got {item!r}")
    return key, values


def cmd_build_tree(args) -> int:
    alphabet = _alphabet(args.alphabet)
    labels = random_labels(args.n, alphabet, args.max_len, random.Random(f"labels/{args.seed}/{args.n}/0"))
    ov = build_overlay(labels, args.peers, alphabet, args.max_len, f"tree/{args.seed}/{args.n}/0")
    Path(args.out).write_text(dump_tree(ov))
    print(json.dumps(tree_summary(ov)))
    return 0


def _check_final(cfg: Configuration, metrics, mode: str, daemon: str, initiators) -> None:
    if not (cfg.all_clean() and is_quiescent(cfg) and detectors_silent(cfg)):
        raise InvariantViolation("run ended in a non-clean or non-quiescent configuration")
    if any(cfg.states[p].request_pif for p in initiators):
        raise InvariantViolation("an initiator never received its verdict")
    if mode == "copif":
        best = min(cfg.overlay.own_wave[p] for p in initiators)
        if metrics.first_winner != best:
            raise InvariantViolation(f"first completed wave is {metrics.first_winner}, expected {best}")
        # held verdicts let absorbed initiators start again, so only prompt
        # delivery guarantees a single completion
        if daemon != "adversarial" and len(metrics.completion_order) != 1:
            raise InvariantViolation(f"expected one completed wave, got {metrics.completion_order}")


def cmd_run(args) -> int:
    ov = load_tree(Path(args.tree).read_text(), _alphabet(args.alphabet) if args.alphabet else None)
    cfg = Configuration.clean(ov)
    out = {"nodes": len(ov), "mode": args.mode, "daemon": args.daemon}
    latency = LatencyModel(args.latency, args.latency_scale)
    with ExitStack() as stack:
        trace = stack.enter_context(open(args.trace, "w")) if args.trace else None
        if args.faults:
            cfg = inject_faults(cfg, args.faults, args.seed)
            if args.save_faulty:
                Path(args.save_faulty).write_text(configio.dumps(cfg))
            cfg, rounds, _ = stabilize(cfg, args.daemon, args.seed, args.max_rounds)
            out["stabilization_rounds"] = rounds
        inits = pick_initiators(ov, args.k, args.seed, 0)
        if args.mode == "classic":
            final, metrics = run_classic_pif(cfg, inits, args.daemon, args.seed, args.max_rounds, latency=latency, trace=trace)
        else:
            sim = Simulation(cfg.with_requests(inits), args.daemon, args.seed, latency=latency, trace=trace)
            metrics = sim.run(args.max_rounds)
            final = sim.snapshot()
    if args.save_config:
        Path(args.save_config).write_text(configio.dumps(final))
    out.update(
        initiators=list(inits),
        messages=metrics.messages_total,
        rounds=metrics.rounds_total,
        steps=metrics.steps,
        duration=metrics.synthetic_duration,
        verdict=str(metrics.verdict),
        completions=[list(w) for w in metrics.completion_order] if args.mode == "copif" else len(metrics.completion_order),
    )
    print(json.dumps(out))
    _check_final(final, metrics, args.mode, args.daemon, inits)
    return 0


def cmd_verify(args) -> int:
    cfg = configio.loads(Path(args.config).read_text())
    reports = all_reports(cfg)
    for r in reports:
        print(r.to_json())
    return EXIT_INVARIANT if any(r.present for r in reports) else 0


def cmd_bench(args) -> int:
    grid = dict(args.grid)
    ns = grid.get("n", [250, 1000, 4000])
    ks = grid.get("k", [1, 2, 4, 8, 16, 32, 64])

    def progress(n, k, mode):
        if args.verbose:
            print(f"n={n} k={k} {mode} done", file=sys.stderr)

    text = bench(ns, ks, args.reps, args.seed, args.modes.split(","), args.daemon, args.faults, progress)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="copif", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-tree", help="insert n random services into an empty tree")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alphabet", default="2", help="alphabet size or the symbols themselves")
    p.add_argument("--max-len", type=int, default=18)
    p.add_argument("--peers", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_tree)

    daemons = [k.value for k in SchedulerKind]
    p = sub.add_parser("run", help="initiate k waves on a tree and run to quiescence")
    p.add_argument("--tree", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--mode", choices=MODES, default="copif")
    p.add_argument("--daemon", choices=daemons, default="sync")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=100_000)
    p.add_argument("--trace", help="write one line per rule execution")
    p.add_argument("--faults", type=int, default=0, help="corrupt this many node states first")
    p.add_argument("--alphabet", help="override the alphabet inferred from the labels")
    p.add_argument("--latency", choices=("constant", "exponential"), default="constant")
    p.add_argument("--latency-scale", type=float, default=1.0)
    p.add_argument("--save-config", help="write the final configuration as JSON")
    p.add_argument("--save-faulty", help="write the corrupted configuration as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run every detector on a JSON configuration")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="classic vs collaborative grid, CSV out")
    p.add_argument("--grid", nargs="+", type=_grid_item, default=[], metavar="n=LIST|k=LIST")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modes", default="classic,copif")
    p.add_argument("--daemon", choices=daemons, default="sync")
    p.add_argument("--faults", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse uses 2 for usage errors; keep 2 for non-termination
        return 1 if e.code == 2 else int(e.code or 0)
    try:
        return args.func(args)
    except NonTermination as e:
        print(f"non-termination: {e}", file=sys.stderr)
        return EXIT_NONTERMINATION
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
