"""Command line: run, experiment, check, replay.

Exit status is 0 when every check passes, 1 on a failed check or protocol
violation, 2 on bad arguments.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .adversary import get_strategy, strategy_names
from .crypto import SysConfig
from .errors import CmvbaError, ConfigError
from .harness import (ExperimentSpec, analyse_trace, check_lemmas, check_scaling,
                      lemma_failures, run_experiment)
from .simnet import Trace, run_simulation

TRACE_ENV = "CMVBA_TRACE_DIR"


def _trace_path(name):
    """Resolve a trace path against CMVBA_TRACE_DIR when that is set."""
    root = os.environ.get(TRACE_ENV)
    if name is None:
        return None
    path = Path(name)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_run(args) -> int:
    config = SysConfig.for_n(args.n, args.f, l=args.payload_bytes, lam=args.lam)
    strategy = get_strategy(args.adversary)
    trace_out = args.trace_out
    if trace_out is None and os.environ.get(TRACE_ENV):
        trace_out = f"run-n{args.n}-{args.adversary}-s{args.seed}.jsonl"
    try:
        trace = run_simulation(config, strategy, args.seed, args.instances)
    except CmvbaError as exc:
        bad = getattr(exc, "trace", None)
        if bad is not None and trace_out:
            bad.write(_trace_path(trace_out))
        print(f"FAIL {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    path = _trace_path(trace_out)
    if path is not None:
        trace.write(path)
    m = trace.metrics
    a = analyse_trace(trace)
    failures = lemma_failures(a)
    print(f"n={config.n} f={config.f} l={config.l} adversary={args.adversary} seed={args.seed}")
    for k, ia in enumerate(a.instances):
        print(f"instance {ia.instance}: messages={m['messages'][k]} bytes={m['bytes'][k]} "
              f"R={m['R'][k]} coin_rounds={m['coin_rounds'][k]} depth={m['depth'][k]} "
              f"good={ia.good.good} first_hit={ia.good.first_hit}")
    print(f"trace hash {trace.hash}" + (f" written to {path}" if path else ""))
    for lemma, msg in failures:
        print(f"FAIL {lemma}: {msg}")
    return 1 if failures else 0


def cmd_experiment(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    out = args.out or os.environ.get(TRACE_ENV) or "results"
    try:
        written = run_experiment(spec, out)
    except CmvbaError as exc:
        print(f"FAIL {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    summary = written["result"].summary
    print(f"wrote {written['csv']} and {written['summary']}")
    status = 0
    for lemma, run, msg in summary["lemma_failures"]:
        print(f"FAIL {lemma} {run}: {msg}")
        status = 1
    if len(spec.ns) >= 3:
        for row in check_scaling(summary, tolerance=args.tolerance, strict=False):
            mark = "PASS" if row.passed else "FAIL"
            print(f"{mark} scaling {row.strategy} l={row.l} {row.metric}: max/min {row.spread:.3f}")
            status |= 0 if row.passed else 1
    return status


def cmd_check(args) -> int:
    paths = sorted(Path(args.traces).glob("**/*.jsonl"))
    if not paths:
        print(f"no traces under {args.traces}", file=sys.stderr)
        return 2
    report = check_lemmas((Trace.read(p) for p in paths), strict=False)
    for key, cell in report.cells.items():
        print(f"{key[0]} n={key[1]} l={key[2]}: mean R {cell['R_mean']:.3f}, "
              f"miss table {[round(x, 3) for x in cell['miss_table']]}")
    for lemma, run, msg in report.failures:
        print(f"FAIL {lemma} {run}: {msg}")
    print(f"{report.runs} traces, {len(report.failures)} failures")
    return 0 if report.passed else 1


def cmd_replay(args) -> int:
    recorded = Trace.read(args.trace)
    h = recorded.header
    config = SysConfig(n=h["n"], f=h["f"], l=h["l"], lam=h["lam"], master_seed=bytes.fromhex(h["master_seed"]))
    strategy = get_strategy(h["strategy"], **h.get("params", {}))
    try:
        trace = run_simulation(config, strategy, h["seed"], h["instances"], h.get("per_candidate", False))
    except CmvbaError as exc:
        trace = exc.trace
        print(f"replay raised {type(exc).__name__}: {exc}")
    with open(args.trace) as fh:
        original = fh.read()
    same = trace is not None and trace.to_jsonl() == original
    print(f"{'identical' if same else 'DIFFERENT'}: {trace.hash if trace else '-'}")
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmvba", description="committee-based MVBA simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one configuration")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--f", type=int, default=None, help="default floor((n-1)/3)")
    r.add_argument("--instances", type=int, default=1)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--adversary", default="honest_random", choices=strategy_names())
    r.add_argument("--payload-bytes", type=int, default=32)
    r.add_argument("--lam", type=int, default=32)
    r.add_argument("--trace-out", default=None)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="run a grid from a JSON spec")
    e.add_argument("--spec", required=True)
    e.add_argument("--out", default=None)
    e.add_argument("--tolerance", type=float, default=0.35)
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("check", help="check saved traces")
    c.add_argument("--traces", required=True)
    c.set_defaults(func=cmd_check)

    y = sub.add_parser("replay", help="re-run a trace and compare")
    y.add_argument("--trace", required=True)
    y.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
