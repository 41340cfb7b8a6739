"""Command-line entry point: ``daic generate|run|verify|check-kernel``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .algorithms import ALGORITHMS, AlgorithmError, AlgorithmSpec, build_kernel, read_linear_system
from .checkpoint import SnapshotError, format_value, parse_value
from .engine import MODES, TERMINATORS, EngineConfig, EngineError, Engine, recover
from .graph import GeneratorConfig, GraphError, generate, read_graph, write_graph
from .kernel import check_conditions
from .sim import SimError, oracle_solve

log = logging.getLogger("daic")

WEIGHT_PRESETS = {"none": (None, None), "sssp": (0.0, 1.0), "adsorption": (0.4, 0.8)}


class UsageError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _fraction(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError("must be in (0, 1]")
    return value


def _threshold(text):
    if text == "auto":
        return None
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0 or 'auto'")
    return value


def _add_algorithm_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", type=Path, help="graph file (vid<TAB>targets)")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--source", type=int, help="source vertex (sssp, katz, rooted_pagerank)")
    p.add_argument("-d", "--damping-factor", dest="d", help="PageRank / HITS damping ('auto' for HITS)")
    p.add_argument("--beta", type=float, help="Katz attenuation")
    p.add_argument("--C", dest="C", type=float, help="SimRank decay")
    p.add_argument("--damping", type=float, help="rooted PageRank continuation probability")
    p.add_argument("--labels", type=int, help="adsorption label count")
    p.add_argument("--p-cont", type=float)
    p.add_argument("--p-inj", type=float)
    p.add_argument("--matrix", type=Path, help="jacobi: 'row col value' triples, 1-based")
    p.add_argument("--rhs", type=Path, help="jacobi: right-hand side, one value per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daic", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic log-normal graph")
    g.add_argument("--nodes", type=_positive_int, required=True)
    g.add_argument("--degree-mu", type=float, default=-0.5)
    g.add_argument("--degree-sigma", type=float, default=2.3)
    g.add_argument("--weights", choices=sorted(WEIGHT_PRESETS), default="none")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", type=Path, required=True)

    r = sub.add_parser("run", help="run an algorithm and dump the result")
    _add_algorithm_flags(r)
    r.add_argument("--mode", choices=MODES, default="async_pri")
    r.add_argument("--workers", type=_positive_int, default=1)
    r.add_argument("--queue-fraction", type=_fraction, default=0.01)
    r.add_argument("--threshold", type=_threshold, default=None, help="'auto' (default) or a number")
    r.add_argument("--terminator", choices=TERMINATORS, default="auto")
    r.add_argument("--epsilon", type=float, default=0.0)
    r.add_argument("--flush-timeout", type=float, default=0.005, help="seconds")
    r.add_argument("--term-check-interval", type=float, default=0.1, help="seconds")
    r.add_argument("--max-updates", type=int)
    r.add_argument("--max-seconds", type=float)
    r.add_argument("--inline", action="store_true", help="step workers cooperatively in one thread")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--checkpoint-dir", type=Path)
    r.add_argument("--checkpoint-interval", type=float, help="seconds")
    r.add_argument("--recover", type=Path, metavar="DIR", help="resume from the latest snapshot in DIR")
    r.add_argument("--stats", type=Path, help="progress samples CSV")
    r.add_argument("-o", "--output", type=Path, help="result dump (default: stdout)")

    v = sub.add_parser("verify", help="compare a result dump with an independent solver")
    _add_algorithm_flags(v)
    v.add_argument("--result", type=Path, required=True)
    v.add_argument("--tol", type=_threshold, default=None,
                   help="L1 tolerance; 'auto' is 0.001·N, or exact for min/max kernels")

    c = sub.add_parser("check-kernel", help="sample the algebraic conditions of a kernel")
    _add_algorithm_flags(c)
    c.add_argument("--samples", type=_positive_int, default=10_000)
    c.add_argument("--tol", type=float, default=1e-9)
    c.add_argument("--seed", type=int, default=0)
    return parser


def _spec(args):
    params = {}
    for key in ("source", "d", "beta", "C", "damping", "labels", "p_cont", "p_inj"):
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if "d" in params and params["d"] != "auto":
        try:
            params["d"] = float(params["d"])
        except ValueError:
            raise UsageError(f"-d expects a number or 'auto', got {params['d']!r}") from None
    graph = None
    if args.algo == "jacobi":
        if args.matrix is None or args.rhs is None:
            raise UsageError("jacobi needs --matrix and --rhs")
        params["system"] = read_linear_system(args.matrix, args.rhs)
    else:
        if args.graph is None:
            raise UsageError(f"{args.algo} needs --graph")
        graph = read_graph(args.graph)
    spec = AlgorithmSpec(args.algo, params)
    spec.validate(graph)
    return spec, graph


def _write_dump(kernel, values, out) -> None:
    vids = kernel.graph.vids
    for vid, x in zip(vids, values):
        out.write(f"{int(vid)}\t{format_value(x)}\n")


def _read_dump(path: Path, kernel):
    vids, values = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                vid, text = line.rstrip("\n").split("\t")
                vids.append(int(vid))
                values.append(parse_value(text, kernel.value_shape, False))
            except (ValueError, SnapshotError) as exc:
                raise UsageError(f"{path}:{lineno}: malformed dump line ({exc})") from None
    return vids, values


def cmd_generate(args) -> int:
    mu, sigma = WEIGHT_PRESETS[args.weights]
    config = GeneratorConfig(args.nodes, args.degree_mu, args.degree_sigma, mu, sigma, args.seed)
    graph = generate(config)
    write_graph(graph, args.output)
    log.info("wrote %r to %s", graph, args.output)
    return 0


def cmd_run(args) -> int:
    spec, graph = _spec(args)
    kernel = build_kernel(spec, graph)
    if args.checkpoint_interval is not None and args.checkpoint_dir is None:
        raise UsageError("--checkpoint-interval needs --checkpoint-dir")
    config = EngineConfig(
        mode=args.mode, workers=args.workers, queue_fraction=args.queue_fraction,
        flush_timeout=args.flush_timeout, term_check_interval=args.term_check_interval,
        terminator=args.terminator, term_threshold=args.threshold, epsilon=args.epsilon,
        checkpoint_interval=args.checkpoint_interval, checkpoint_dir=args.checkpoint_dir,
        max_updates=args.max_updates, max_seconds=args.max_seconds, inline=args.inline,
        seed=args.seed)
    if args.recover is not None:
        result = recover(args.recover, kernel, config)
    else:
        result = Engine(kernel, config).run()
    stats = result.stats
    if args.stats is not None:
        args.stats.write_text("\n".join(stats.csv_lines()) + "\n", encoding="utf-8")
    values = result.values(kernel)
    if args.output is not None:
        with open(args.output, "w", encoding="utf-8") as fh:
            _write_dump(kernel, values, fh)
    else:
        _write_dump(kernel, values, sys.stdout)
    print(f"{stats.reason}: {stats.updates} updates, {stats.messages} messages, "
          f"{stats.wall_time:.3f}s", file=sys.stderr)
    if stats.routing_errors:
        print(f"warning: {stats.routing_errors} messages had no local destination", file=sys.stderr)
    if not stats.converged:
        print(f"error: run did not converge ({stats.reason})", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    spec, graph = _spec(args)
    kernel = build_kernel(spec, graph)
    vids, values = _read_dump(args.result, kernel)
    expected_vids = [int(v) for v in kernel.graph.vids]
    if sorted(vids) != expected_vids:
        raise UsageError(f"dump has {len(vids)} vertices, the graph has {len(expected_vids)}")
    got = kernel.zeros(kernel.graph.n)
    got[kernel.graph.indices_of(vids)] = values
    want = oracle_solve(spec, graph)
    with np.errstate(invalid="ignore"):
        diff = np.where(got == want, 0.0, np.abs(got - want))
    if kernel.value_shape:
        diff = diff.reshape(len(diff), -1).sum(axis=1)
    diff = np.nan_to_num(diff, nan=np.inf)
    l1 = float(diff.sum())
    tol = args.tol
    if tol is None:
        tol = 0.0 if kernel.settles else 0.001 * kernel.graph.n
    ok = l1 <= tol
    print(f"L1 distance {l1!r} (tolerance {tol!r}): {'pass' if ok else 'FAIL'}")
    if not ok:
        worst = int(np.argmax(diff))
        print(f"largest deviation at vid {int(kernel.graph.vids[worst])}: "
              f"got {format_value(got[worst])}, expected {format_value(want[worst])}")
    return 0 if ok else 1


def cmd_check_kernel(args) -> int:
    spec, graph = _spec(args)
    kernel = build_kernel(spec, graph)
    report = check_conditions(kernel, samples=args.samples, tol=args.tol, seed=args.seed)
    print(report.render())
    return 0 if report.ok else 1


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "verify": cmd_verify, "check-kernel": cmd_check_kernel}


def main(argv=None) -> int:
    level = os.environ.get("DAIC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, AlgorithmError, GraphError, SnapshotError, SimError, EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
